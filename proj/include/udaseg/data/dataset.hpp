#ifndef UDASEG_DATA_DATASET_HPP
#define UDASEG_DATA_DATASET_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "udaseg/core/image_ops.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"
#include "udaseg/io/png_io.hpp"

namespace udaseg {

enum class DomainTag { Source, Target };

struct DatasetItem {
    std::string name;
    Tensor image;                // (3, H, W) in [0, 1]
    std::optional<Tensor> mask;  // (1, H, W) in {0, 1}
};

/// Immutable after construction; safe to share read-only.
struct DomainDataset {
    DomainTag tag = DomainTag::Source;
    std::string name;
    int64_t height = 0;
    int64_t width = 0;
    std::vector<DatasetItem> items;

    size_t size() const { return items.size(); }

    bool all_have_masks() const {
        return std::all_of(items.begin(), items.end(), [](const DatasetItem& it) { return it.mask.has_value(); });
    }

    ImageBatch images(const std::vector<size_t>& indices) const {
        ImageBatch out({static_cast<int64_t>(indices.size()), 3, height, width});
        for (size_t i = 0; i < indices.size(); ++i) out.set_item(static_cast<int64_t>(i), items[indices[i]].image);
        return out;
    }

    MaskBatch masks(const std::vector<size_t>& indices) const {
        MaskBatch out({static_cast<int64_t>(indices.size()), 1, height, width});
        for (size_t i = 0; i < indices.size(); ++i) {
            const auto& m = items[indices[i]].mask;
            if (!m) throw std::runtime_error("DomainDataset: item '" + items[indices[i]].name + "' has no mask");
            out.set_item(static_cast<int64_t>(i), *m);
        }
        return out;
    }

    std::vector<size_t> all_indices() const {
        std::vector<size_t> idx(items.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        return idx;
    }
};

struct SplitSpec {
    double train_fraction = 0.8;
    double mix_fraction = 0.25;
    uint64_t seed = 0;

    void validate() const {
        if (train_fraction <= 0.0 || train_fraction >= 1.0) {
            throw std::invalid_argument("SplitSpec: train_fraction must lie in (0,1)");
        }
        if (mix_fraction < 0.0 || mix_fraction >= 1.0) {
            throw std::invalid_argument("SplitSpec: mix_fraction must lie in [0,1)");
        }
    }
};

namespace data_detail {

inline int64_t floor_fraction(double fraction, size_t n) {
    return static_cast<int64_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

inline Tensor binarize_mask(const Tensor& m) {
    Tensor out(m.shape());
    for (int64_t i = 0; i < m.numel(); ++i) out[i] = m[i] >= 0.5 ? 1.0 : 0.0;
    return out;
}

} // namespace data_detail

/// Load `<root>/images/*.png` (and optional `<root>/masks/*.png`, matched by
/// filename stem) with deterministic item order, resized to target size.
/// Images are bilinearly resized; masks use nearest neighbor and are
/// binarized at 0.5.
inline DomainDataset load_dataset(const std::filesystem::path& root, const std::string& domain_name,
                                  std::pair<int64_t, int64_t> target_size, DomainTag tag = DomainTag::Source) {
    namespace fs = std::filesystem;
    const fs::path images_dir = root / "images";
    if (!fs::is_directory(images_dir)) {
        throw std::runtime_error("load_dataset: missing images/ directory under " + root.string());
    }
    const fs::path masks_dir = root / "masks";
    const bool have_masks_dir = fs::is_directory(masks_dir);

    std::vector<fs::path> image_files;
    for (const auto& e : fs::directory_iterator(images_dir)) {
        if (e.is_regular_file() && e.path().extension() == ".png") image_files.push_back(e.path());
    }
    std::sort(image_files.begin(), image_files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });

    std::map<std::string, fs::path> mask_by_stem;
    if (have_masks_dir) {
        for (const auto& e : fs::directory_iterator(masks_dir)) {
            if (e.is_regular_file() && e.path().extension() == ".png") {
                mask_by_stem[e.path().stem().string()] = e.path();
            }
        }
    }

    DomainDataset ds;
    ds.tag = tag;
    ds.name = domain_name;
    ds.height = target_size.first;
    ds.width = target_size.second;
    ds.items.reserve(image_files.size());

    for (const auto& f : image_files) {
        DatasetItem item;
        item.name = f.stem().string();
        Tensor img = read_png(f.string(), 3);
        item.image = resize_bilinear(img, ds.height, ds.width);
        const auto mit = mask_by_stem.find(item.name);
        if (mit != mask_by_stem.end()) {
            Tensor m = read_png(mit->second.string(), 1);
            item.mask = data_detail::binarize_mask(resize_nearest(m, ds.height, ds.width));
            mask_by_stem.erase(mit);
        }
        ds.items.push_back(std::move(item));
    }
    if (!mask_by_stem.empty()) {
        throw std::runtime_error("load_dataset: mask '" + mask_by_stem.begin()->second.string() +
                                 "' has no matching image");
    }
    return ds;
}

/// Seeded shuffle then prefix split: |train| = floor(train_fraction * |ds|).
inline std::pair<DomainDataset, DomainDataset> split_dataset(const DomainDataset& ds, const SplitSpec& spec) {
    spec.validate();
    if (ds.size() < 2) throw std::invalid_argument("split_dataset: need at least 2 items to produce both splits");
    std::vector<size_t> idx = ds.all_indices();
    Rng rng(spec.seed);
    rng.shuffle(idx);
    const int64_t n_train = data_detail::floor_fraction(spec.train_fraction, ds.size());

    DomainDataset train, validation;
    train.tag = validation.tag = ds.tag;
    train.name = ds.name + "-train";
    validation.name = ds.name + "-val";
    train.height = validation.height = ds.height;
    train.width = validation.width = ds.width;
    for (size_t i = 0; i < idx.size(); ++i) {
        (static_cast<int64_t>(i) < n_train ? train : validation).items.push_back(ds.items[idx[i]]);
    }
    return {std::move(train), std::move(validation)};
}

/// Target set plus a seeded sample of floor(mix_fraction * |source|) source
/// items (masks carried along) for the "mixed" evaluation protocol.
inline DomainDataset build_mixed_test(const DomainDataset& target, const DomainDataset& source, const SplitSpec& spec) {
    spec.validate();
    if (target.height != source.height || target.width != source.width) {
        throw std::invalid_argument("build_mixed_test: image sizes differ between target and source");
    }
    DomainDataset mixed = target;
    mixed.name = target.name + "-mixed";
    const int64_t n_mix = data_detail::floor_fraction(spec.mix_fraction, source.size());
    Rng rng(combine_seed(spec.seed, 1));
    const std::vector<size_t> picks = rng.sample_without_replacement(source.size(), static_cast<size_t>(n_mix));
    for (size_t p : picks) mixed.items.push_back(source.items[p]);
    return mixed;
}

/// Write a dataset to `<dir>/images/*.png` (+ `<dir>/masks/*.png` when masks
/// are present); masks are stored as 8-bit grayscale with foreground 255.
inline void save_dataset(const DomainDataset& ds, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    const bool any_mask = std::any_of(ds.items.begin(), ds.items.end(),
                                      [](const DatasetItem& it) { return it.mask.has_value(); });
    if (any_mask) fs::create_directories(dir / "masks");
    for (const auto& item : ds.items) {
        write_png((dir / "images" / (item.name + ".png")).string(), item.image);
        if (item.mask) write_png((dir / "masks" / (item.name + ".png")).string(), *item.mask);
    }
}

} // namespace udaseg

#endif // UDASEG_DATA_DATASET_HPP

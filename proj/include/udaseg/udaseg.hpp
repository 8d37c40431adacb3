#ifndef UDASEG_UDASEG_HPP
#define UDASEG_UDASEG_HPP

#include "udaseg/config.hpp"
#include "udaseg/core/image_ops.hpp"
#include "udaseg/core/parallel.hpp"
#include "udaseg/core/rng.hpp"
#include "udaseg/core/tensor.hpp"
#include "udaseg/core/types.hpp"
#include "udaseg/data/dataset.hpp"
#include "udaseg/data/synthetic.hpp"
#include "udaseg/infer/latent_search.hpp"
#include "udaseg/io/checkpoint.hpp"
#include "udaseg/io/json_util.hpp"
#include "udaseg/io/plot.hpp"
#include "udaseg/io/png_io.hpp"
#include "udaseg/loss/losses.hpp"
#include "udaseg/loss/ssim.hpp"
#include "udaseg/metrics/masks.hpp"
#include "udaseg/model/unet.hpp"
#include "udaseg/model/vae.hpp"
#include "udaseg/nn/layers.hpp"
#include "udaseg/nn/rmsprop.hpp"
#include "udaseg/train/run_config.hpp"
#include "udaseg/train/trainer.hpp"

#endif // UDASEG_UDASEG_HPP

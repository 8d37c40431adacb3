#ifndef UDASEG_IO_JSON_UTIL_HPP
#define UDASEG_IO_JSON_UTIL_HPP

#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace udaseg {

using Json = nlohmann::json;

/// Strict field-wise JSON reader: every key must be consumed, unknown keys
/// are reported with their full path. Absent keys keep the caller's default.
class JsonReader {
public:
    JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw std::runtime_error("config: '" + path_ + "' must be an object");
    }

    template <typename T>
    void get(const char* key, T& out) {
        const auto it = j_.find(key);
        if (it == j_.end()) return;
        consumed_.insert(key);
        try {
            out = it->get<T>();
        } catch (const Json::exception& e) {
            throw std::runtime_error("config: bad value for '" + path_ + "." + key + "': " + e.what());
        }
    }

    bool has(const char* key) const { return j_.find(key) != j_.end(); }

    const Json* child(const char* key) {
        const auto it = j_.find(key);
        if (it == j_.end()) return nullptr;
        consumed_.insert(key);
        return &*it;
    }

    std::string path(const char* key) const { return path_ + "." + key; }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (consumed_.find(it.key()) == consumed_.end()) {
                throw std::runtime_error("config: unknown key '" + path_ + "." + it.key() + "'");
            }
        }
    }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> consumed_;
};

} // namespace udaseg

#endif // UDASEG_IO_JSON_UTIL_HPP

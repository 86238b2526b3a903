#pragma once

#include "gatedfill/serialize.hpp"
#include "gatedfill/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gatedfill {

/// Named-tensor container.
///
/// Layout: magic "GFC1", u64 little-endian manifest length, the manifest as
/// JSON ({"meta": ..., "tensors": {name: {"offset", "bytes", "shape"}}}),
/// then the "GFT1" records back to back. Offsets count from the first byte
/// after the manifest. Names are sorted, so equal contents encode to equal
/// bytes.
class Checkpoint {
public:
    nlohmann::json meta = nlohmann::json::object();

    void put(const std::string& name, TensorBlob blob);
    template <typename T>
    void put_tensor(const std::string& name, const Tensor<T>& t) {
        put(name, to_blob(t));
    }
    bool contains(const std::string& name) const { return tensors_.count(name) != 0; }
    const TensorBlob& get(const std::string& name) const;
    /// Copies a stored tensor into `target`, which must have the stored shape.
    template <typename T>
    void load_into(const std::string& name, Tensor<T>& target) const;
    const std::map<std::string, TensorBlob>& tensors() const { return tensors_; }

    std::vector<uint8_t> encode() const;
    static Checkpoint decode(std::span<const uint8_t> bytes);

    /// Writes to a temporary sibling and renames it over `path`.
    void save(const std::filesystem::path& path) const;
    static Checkpoint load(const std::filesystem::path& path);

private:
    std::map<std::string, TensorBlob> tensors_;
};

}  // namespace gatedfill

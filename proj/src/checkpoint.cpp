#include "gatedfill/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

namespace gatedfill {

void Checkpoint::put(const std::string& name, TensorBlob blob) {
    tensors_[name] = std::move(blob);
}

const TensorBlob& Checkpoint::get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw FormatError("checkpoint has no tensor '" + name + "'");
    return it->second;
}

template <typename T>
void Checkpoint::load_into(const std::string& name, Tensor<T>& target) const {
    const TensorBlob& blob = get(name);
    if (blob.numel() != static_cast<uint64_t>(target.numel())) {
        throw FormatError("checkpoint tensor '" + name + "' has " + std::to_string(blob.numel()) +
                          " values, model expects " + target.shape().str());
    }
    auto dst = target.data_mut();
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(blob.values[i]);
}

template void Checkpoint::load_into(const std::string&, Tensor<float>&) const;
template void Checkpoint::load_into(const std::string&, Tensor<double>&) const;

std::vector<uint8_t> Checkpoint::encode() const {
    std::vector<uint8_t> body;
    nlohmann::json index = nlohmann::json::object();
    for (const auto& [name, blob] : tensors_) {
        const size_t offset = body.size();
        append_blob(body, blob);
        index[name] = {{"offset", offset}, {"bytes", body.size() - offset}, {"shape", blob.dims}};
    }
    const std::string manifest = nlohmann::json{{"meta", meta}, {"tensors", index}}.dump();
    std::vector<uint8_t> out{'G', 'F', 'C', '1'};
    const uint64_t len = manifest.size();
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(len >> (8 * i)));
    out.insert(out.end(), manifest.begin(), manifest.end());
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

Checkpoint Checkpoint::decode(std::span<const uint8_t> bytes) {
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "GFC1", 4) != 0) throw FormatError("GFC1: bad magic");
    uint64_t len = 0;
    for (int i = 0; i < 8; ++i) len |= static_cast<uint64_t>(bytes[4 + i]) << (8 * i);
    if (12 + len > bytes.size()) throw FormatError("GFC1: truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + static_cast<ptrdiff_t>(len));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("GFC1: manifest is not valid JSON: ") + e.what());
    }
    const auto body = bytes.subspan(12 + len);
    Checkpoint ckpt;
    ckpt.meta = manifest.value("meta", nlohmann::json::object());
    for (const auto& [name, entry] : manifest.at("tensors").items()) {
        const auto offset = entry.at("offset").get<uint64_t>();
        if (offset >= body.size()) throw FormatError("GFC1: tensor '" + name + "' offset out of range");
        ckpt.tensors_[name] = parse_blob(body.subspan(offset));
    }
    return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
    const auto bytes = encode();
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open '" + tmp.string() + "' for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw FormatError("error writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open checkpoint '" + path.string() + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
}

}  // namespace gatedfill

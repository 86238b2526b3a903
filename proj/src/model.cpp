#include "gatedfill/model.hpp"

namespace gatedfill {

InpaintModel InpaintModel::build(const GeneratorConfig& g, const DiscriminatorConfig& d, uint64_t seed) {
    Rng rng(seed);
    InpaintModel model{Generator<float>::build(g, rng), Discriminator<float>::build(d, rng), seed};
    return model;
}

Checkpoint InpaintModel::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.meta["format"] = 1;
    ckpt.meta["generator"] = generator.config();
    ckpt.meta["discriminator"] = discriminator.config();
    ckpt.meta["seed"] = seed;
    for (const auto& p : parameters_of(generator)) ckpt.put_tensor(p.name, p.tensor);
    for (const auto& p : parameters_of(discriminator)) ckpt.put_tensor(p.name, p.tensor);
    const auto& states = discriminator.spectral_states();
    for (size_t i = 0; i < states.size(); ++i) {
        ckpt.put("D." + std::to_string(i) + ".u", to_blob(std::span<const float>(states[i].u)));
    }
    return ckpt;
}

InpaintModel InpaintModel::from_checkpoint(const Checkpoint& ckpt) {
    GeneratorConfig g = ckpt.meta.at("generator").get<GeneratorConfig>();
    DiscriminatorConfig d = ckpt.meta.at("discriminator").get<DiscriminatorConfig>();
    const auto seed = ckpt.meta.value("seed", uint64_t{0});
    InpaintModel model = build(g, d, seed);
    for (auto& p : parameters_of(model.generator)) ckpt.load_into(p.name, p.tensor);
    for (auto& p : parameters_of(model.discriminator)) ckpt.load_into(p.name, p.tensor);
    auto& states = model.discriminator.spectral_states();
    for (size_t i = 0; i < states.size(); ++i) {
        const auto& blob = ckpt.get("D." + std::to_string(i) + ".u");
        if (blob.values.size() != states[i].u.size()) {
            throw FormatError("checkpoint spectral state D." + std::to_string(i) + ".u has the wrong length");
        }
        states[i].u.assign(blob.values.begin(), blob.values.end());
    }
    return model;
}

}  // namespace gatedfill

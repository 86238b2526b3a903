#pragma once

#include "gatedfill/checkpoint.hpp"
#include "gatedfill/gan.hpp"
#include "gatedfill/network.hpp"

#include <cstdint>
#include <vector>

namespace gatedfill {

/// Generator and discriminator trained together, plus the seed they were
/// initialized from.
struct InpaintModel {
    Generator<float> generator;
    Discriminator<float> discriminator;
    uint64_t seed = 0;

    static InpaintModel build(const GeneratorConfig& g, const DiscriminatorConfig& d, uint64_t seed);

    /// Parameters as "G.<stage>.<i>.{Wf,Wg,bf,bg}", "D.<i>.{W,b}" and the
    /// spectral state as "D.<i>.u".
    Checkpoint to_checkpoint() const;
    static InpaintModel from_checkpoint(const Checkpoint& ckpt);
};

/// Clears requires_grad on a set of leaves for its lifetime.
template <typename T>
class NoGradGuard {
public:
    explicit NoGradGuard(std::vector<NamedTensor<T>> params) : params_(std::move(params)) {
        for (auto& p : params_) {
            saved_.push_back(p.tensor.requires_grad());
            p.tensor.set_requires_grad(false);
        }
    }
    ~NoGradGuard() {
        for (size_t i = 0; i < params_.size(); ++i) params_[i].tensor.set_requires_grad(saved_[i]);
    }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    std::vector<NamedTensor<T>> params_;
    std::vector<bool> saved_;
};

template <typename T>
std::vector<NamedTensor<T>> parameters_of(const Generator<T>& g) {
    std::vector<NamedTensor<T>> out;
    g.collect(out);
    return out;
}

template <typename T>
std::vector<NamedTensor<T>> parameters_of(const Discriminator<T>& d) {
    std::vector<NamedTensor<T>> out;
    d.collect(out);
    return out;
}

}  // namespace gatedfill

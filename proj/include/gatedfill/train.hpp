#pragma once

#include "gatedfill/dataset.hpp"
#include "gatedfill/gan.hpp"
#include "gatedfill/maskgen.hpp"
#include "gatedfill/metrics.hpp"
#include "gatedfill/model.hpp"
#include "gatedfill/optim.hpp"

#include <chrono>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace gatedfill {

struct TrainConfig {
    std::string dataset = "synthetic-textures";  // or "image-folder"
    std::string image_folder;
    int image_size = 32;
    int batch_size = 16;
    int steps = 2000;
    double lr_g = 1e-4;
    double lr_d = 1e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double l1_weight = 1.0;
    double gan_weight = 1.0;
    bool l1_holes_only = false;
    MaskGenConfig maskgen = MaskGenConfig::defaults_for(32, 32);
    bool guided = false;
    uint64_t seed = 1;
    GeneratorConfig generator;
    DiscriminatorConfig discriminator;
    std::string log_path;
    std::string checkpoint_path;
    int log_interval = 1;
    int checkpoint_interval = 500;

    /// Keeps the mask canvas and the input channel counts consistent with
    /// image_size and guided.
    void normalize();
    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Alternating SN-PatchGAN training: every step samples a fresh batch and
/// fresh masks, takes one discriminator update on the hinge loss and then
/// one generator update on l1 (coarse + refined) plus the generator hinge
/// loss. Runs are bitwise reproducible for a fixed config.
class Trainer {
public:
    explicit Trainer(TrainConfig cfg);

    /// One D step followed by one G step.
    GanLossReport step();
    /// Runs the remaining steps, writing JSON lines to `log` (and the
    /// configured log file) and periodic checkpoints.
    void run(std::ostream* log = nullptr);

    int64_t steps_done() const { return step_; }
    uint64_t masks_sampled() const { return masks_sampled_; }
    const TrainConfig& config() const { return cfg_; }
    InpaintModel& model() { return model_; }
    const InpaintModel& model() const { return model_; }
    Checkpoint checkpoint() const;

    static nlohmann::json log_line(int64_t step, const GanLossReport& report, double wallclock);

private:
    Batch next_batch(int64_t step);
    std::vector<Mask> next_masks(int64_t step);
    /// Snapshots the model as the last good state and writes it out.
    void save_checkpoint();
    /// On divergence: the file keeps the last finite snapshot.
    void restore_last_good() const;

    TrainConfig cfg_;
    InpaintModel model_;
    std::unique_ptr<ImageFolderDataset> folder_;
    Adam<float> opt_g_;
    Adam<float> opt_d_;
    int64_t step_ = 0;
    uint64_t masks_sampled_ = 0;
    Checkpoint last_good_;
    std::chrono::steady_clock::time_point start_;
};

/// Fills the masked images with the generator and returns the composited
/// results in [0, 1], one (1, 3, h, w) tensor per image.
std::vector<Tensor<double>> inpaint_batch(const Generator<float>& g, const Batch& batch, std::span<const Mask> masks,
                                          int chunk = 16);

/// Held-out evaluation of a generator on a batch with the given masks.
EvalResult evaluate_generator(const Generator<float>& g, const Batch& batch, std::span<const Mask> masks,
                              EvalRegion region);

}  // namespace gatedfill

#include "gatedfill/train.hpp"

#include "gatedfill/image_io.hpp"

#include <cmath>
#include <fstream>

namespace gatedfill {

namespace {

constexpr uint64_t kDataStream = 0xda7a5eedULL;
constexpr uint64_t kMaskStream = 0x3a5c5eedULL;

std::vector<Tensor<float>> tensors_of(const std::vector<NamedTensor<float>>& named) {
    std::vector<Tensor<float>> out;
    for (const auto& p : named) out.push_back(p.tensor);
    return out;
}

double value(const Tensor<float>& t) {
    return static_cast<double>(t.item());
}

}  // namespace

void TrainConfig::normalize() {
    maskgen.image_height = image_size;
    maskgen.image_width = image_size;
    generator.input_channels = guided ? 5 : 4;
    discriminator.input_channels = guided ? 5 : 4;
}

void TrainConfig::validate() const {
    if (steps <= 0) throw std::invalid_argument("train: steps must be positive");
    if (batch_size <= 0) throw std::invalid_argument("train: batch_size must be positive");
    if (image_size < 16 || image_size % 4 != 0) {
        throw std::invalid_argument("train: image_size must be >= 16 and divisible by 4");
    }
    if (dataset != "synthetic-textures" && dataset != "image-folder") {
        throw std::invalid_argument("train: dataset must be synthetic-textures or image-folder");
    }
    if (dataset == "image-folder" && image_folder.empty()) {
        throw std::invalid_argument("train: image-folder dataset needs image_folder");
    }
    if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw std::invalid_argument("train: learning rates must be positive");
    if (log_interval <= 0 || checkpoint_interval <= 0) throw std::invalid_argument("train: intervals must be positive");
    maskgen.validate();
    generator.validate();
    discriminator.validate();
    if (maskgen.image_height != image_size || maskgen.image_width != image_size) {
        throw std::invalid_argument("train: mask canvas does not match image_size");
    }
    if (generator.guided() != guided || discriminator.input_channels != (guided ? 5 : 4)) {
        throw std::invalid_argument("train: channel counts disagree with the guided flag");
    }
}

void to_json(nlohmann::json& j, const TrainConfig& cfg) {
    j = nlohmann::json{{"dataset", cfg.dataset},
                       {"image_folder", cfg.image_folder},
                       {"image_size", cfg.image_size},
                       {"batch_size", cfg.batch_size},
                       {"steps", cfg.steps},
                       {"lr_g", cfg.lr_g},
                       {"lr_d", cfg.lr_d},
                       {"beta1", cfg.beta1},
                       {"beta2", cfg.beta2},
                       {"l1_weight", cfg.l1_weight},
                       {"gan_weight", cfg.gan_weight},
                       {"l1_holes_only", cfg.l1_holes_only},
                       {"maskgen", cfg.maskgen},
                       {"guided", cfg.guided},
                       {"seed", cfg.seed},
                       {"generator", cfg.generator},
                       {"discriminator", cfg.discriminator},
                       {"log_path", cfg.log_path},
                       {"checkpoint_path", cfg.checkpoint_path},
                       {"log_interval", cfg.log_interval},
                       {"checkpoint_interval", cfg.checkpoint_interval}};
}

void from_json(const nlohmann::json& j, TrainConfig& cfg) {
    cfg.dataset = j.value("dataset", cfg.dataset);
    cfg.image_folder = j.value("image_folder", cfg.image_folder);
    cfg.image_size = j.value("image_size", cfg.image_size);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.steps = j.value("steps", cfg.steps);
    cfg.lr_g = j.value("lr_g", cfg.lr_g);
    cfg.lr_d = j.value("lr_d", cfg.lr_d);
    cfg.beta1 = j.value("beta1", cfg.beta1);
    cfg.beta2 = j.value("beta2", cfg.beta2);
    cfg.l1_weight = j.value("l1_weight", cfg.l1_weight);
    cfg.gan_weight = j.value("gan_weight", cfg.gan_weight);
    cfg.l1_holes_only = j.value("l1_holes_only", cfg.l1_holes_only);
    cfg.maskgen = MaskGenConfig::defaults_for(cfg.image_size, cfg.image_size);
    if (j.contains("maskgen")) from_json(j.at("maskgen"), cfg.maskgen);
    cfg.guided = j.value("guided", cfg.guided);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("generator")) from_json(j.at("generator"), cfg.generator);
    if (j.contains("discriminator")) from_json(j.at("discriminator"), cfg.discriminator);
    cfg.log_path = j.value("log_path", cfg.log_path);
    cfg.checkpoint_path = j.value("checkpoint_path", cfg.checkpoint_path);
    cfg.log_interval = j.value("log_interval", cfg.log_interval);
    cfg.checkpoint_interval = j.value("checkpoint_interval", cfg.checkpoint_interval);
}

// --- Trainer -----------------------------------------------------------

Trainer::Trainer(TrainConfig cfg)
    : cfg_((retain_freed_memory(), cfg.normalize(), std::move(cfg))),
      model_((cfg_.validate(), InpaintModel::build(cfg_.generator, cfg_.discriminator, cfg_.seed))),
      opt_g_(tensors_of(parameters_of(model_.generator)), {cfg_.lr_g, cfg_.beta1, cfg_.beta2}),
      opt_d_(tensors_of(parameters_of(model_.discriminator)), {cfg_.lr_d, cfg_.beta1, cfg_.beta2}),
      start_(std::chrono::steady_clock::now()) {
    if (cfg_.dataset == "image-folder") {
        folder_ = std::make_unique<ImageFolderDataset>(cfg_.image_folder, cfg_.image_size);
    }
    last_good_ = checkpoint();
}

Batch Trainer::next_batch(int64_t step) {
    Rng rng = Rng::derive(cfg_.seed ^ kDataStream, static_cast<uint64_t>(step));
    if (folder_) return folder_->sample(cfg_.batch_size, rng);
    return synth_dataset(SynthKind::textures, cfg_.batch_size, cfg_.image_size, rng);
}

std::vector<Mask> Trainer::next_masks(int64_t step) {
    std::vector<Mask> masks;
    const uint64_t stream = splitmix64(cfg_.seed ^ kMaskStream) ^ cfg_.maskgen.seed;
    for (int i = 0; i < cfg_.batch_size; ++i) {
        Rng rng = Rng::derive(stream, static_cast<uint64_t>(step) * cfg_.batch_size + i);
        masks.push_back(generate_free_form_mask(cfg_.maskgen, rng));
        ++masks_sampled_;
    }
    return masks;
}

GanLossReport Trainer::step() {
    auto& G = model_.generator;
    auto& D = model_.discriminator;
    const Batch batch = next_batch(step_);
    const std::vector<Mask> masks = next_masks(step_);

    const Tensor<float> real = to_network_range(batch.images);
    const Tensor<float> mask = mask_tensor<float>(masks);
    const Tensor<float> sketch = cfg_.guided ? batch.sketches : Tensor<float>{};
    const InpaintOutput<float> out = G.forward(real, mask, sketch);

    GanLossReport report;

    // discriminator update on detached fakes
    opt_d_.zero_grad();
    const Tensor<float> real_scores = D.forward(real, mask, sketch, true);
    const Tensor<float> fake_scores = D.forward(out.composited.detach(), mask, sketch, false);
    const HingeTerms<float> d_terms = d_hinge_terms(real_scores, fake_scores);
    report.d_loss_real = value(d_terms.real);
    report.d_loss_fake = value(d_terms.fake);
    report.d_loss = value(d_terms.total);

    if (!std::isfinite(report.d_loss)) {
        restore_last_good();
        throw TrainingDiverged("non-finite discriminator loss at step " + std::to_string(step_));
    }
    d_terms.total.backward();
    opt_d_.step();

    // generator update through the freshly updated discriminator
    opt_g_.zero_grad();
    Tensor<float> gan;
    {
        NoGradGuard<float> frozen(parameters_of(D));
        gan = g_hinge_loss(D.forward(out.composited, mask, sketch, false));
    }
    const Tensor<float> region = cfg_.l1_holes_only ? add_scalar(neg(mask), 1.0f) : Tensor<float>{};
    Tensor<float> l1 = l1_loss(out.coarse, real, region);
    if (cfg_.generator.use_refinement) l1 = add(l1, l1_loss(out.refined, real, region));
    const Tensor<float> total = add(mul_scalar(l1, static_cast<float>(cfg_.l1_weight)),
                                    mul_scalar(gan, static_cast<float>(cfg_.gan_weight)));
    report.g_gan_loss = value(gan);
    report.g_l1_loss = value(l1);
    report.g_total = value(total);
    if (!report.finite()) {
        restore_last_good();
        throw TrainingDiverged("non-finite generator loss at step " + std::to_string(step_));
    }
    total.backward();
    opt_g_.step();
    ++step_;
    return report;
}

nlohmann::json Trainer::log_line(int64_t step, const GanLossReport& r, double wallclock) {
    return nlohmann::json{{"step", step},
                          {"d_loss_real", r.d_loss_real},
                          {"d_loss_fake", r.d_loss_fake},
                          {"d_loss", r.d_loss},
                          {"g_gan_loss", r.g_gan_loss},
                          {"g_l1_loss", r.g_l1_loss},
                          {"g_total", r.g_total},
                          {"wallclock", wallclock}};
}

void Trainer::run(std::ostream* log) {
    std::ofstream file;
    if (!cfg_.log_path.empty()) {
        std::filesystem::path p(cfg_.log_path);
        if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
        file.open(p, std::ios::trunc);
        if (!file) throw std::runtime_error("cannot open log '" + cfg_.log_path + "'");
    }
    while (step_ < cfg_.steps) {
        const GanLossReport report = step();
        if (step_ % cfg_.log_interval == 0 || step_ == cfg_.steps) {
            const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
            const std::string line = log_line(step_, report, wall).dump();
            if (file) file << line << '\n' << std::flush;
            if (log) *log << line << '\n' << std::flush;
        }
        if (step_ % cfg_.checkpoint_interval == 0) save_checkpoint();
    }
    save_checkpoint();
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint ckpt = model_.to_checkpoint();
    ckpt.meta["step"] = step_;
    ckpt.meta["guided"] = cfg_.guided;
    ckpt.meta["image_size"] = cfg_.image_size;
    return ckpt;
}

void Trainer::save_checkpoint() {
    last_good_ = checkpoint();
    if (!cfg_.checkpoint_path.empty()) last_good_.save(cfg_.checkpoint_path);
}

void Trainer::restore_last_good() const {
    if (!cfg_.checkpoint_path.empty()) last_good_.save(cfg_.checkpoint_path);
}

// --- evaluation --------------------------------------------------------

std::vector<Tensor<double>> inpaint_batch(const Generator<float>& g, const Batch& batch, std::span<const Mask> masks,
                                          int chunk) {
    const Shape s = batch.images.shape();
    if (static_cast<int64_t>(masks.size()) != s.n) throw std::invalid_argument("inpaint_batch: one mask per image");
    NoGradGuard<float> frozen(parameters_of(g));
    std::vector<Tensor<double>> out;
    const int64_t P3 = 3 * s.h * s.w;
    const int64_t P1 = s.h * s.w;
    for (int64_t begin = 0; begin < s.n; begin += chunk) {
        const int64_t n = std::min<int64_t>(chunk, s.n - begin);
        std::vector<float> img(batch.images.data().begin() + begin * P3, batch.images.data().begin() + (begin + n) * P3);
        const Tensor<float> images = Tensor<float>::from_data({n, 3, s.h, s.w}, std::move(img));
        Tensor<float> sketch;
        if (g.config().guided()) {
            std::vector<float> sk(batch.sketches.data().begin() + begin * P1,
                                  batch.sketches.data().begin() + (begin + n) * P1);
            sketch = Tensor<float>::from_data({n, 1, s.h, s.w}, std::move(sk));
        }
        const Tensor<float> mask = mask_tensor<float>(masks.subspan(begin, n));
        const auto result = from_network_range(g.forward(to_network_range(images), mask, sketch).composited);
        for (int64_t i = 0; i < n; ++i) {
            auto v = result.data().subspan(i * P3, P3);
            out.push_back(Tensor<double>::from_data({1, 3, s.h, s.w}, std::vector<double>(v.begin(), v.end())));
        }
    }
    return out;
}

EvalResult evaluate_generator(const Generator<float>& g, const Batch& batch, std::span<const Mask> masks,
                              EvalRegion region) {
    const auto results = inpaint_batch(g, batch, masks);
    std::vector<Tensor<double>> truth;
    const Shape s = batch.images.shape();
    const int64_t P3 = 3 * s.h * s.w;
    for (int64_t i = 0; i < s.n; ++i) {
        auto v = batch.images.data().subspan(i * P3, P3);
        truth.push_back(Tensor<double>::from_data({1, 3, s.h, s.w}, std::vector<double>(v.begin(), v.end())));
    }
    return evaluate(truth, results, masks, region);
}

}  // namespace gatedfill

#include "gatedfill/gradcheck.hpp"
#include "gatedfill/image_io.hpp"
#include "gatedfill/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

using namespace gatedfill;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open config " + path);
    return json::parse(in);
}

// Sets `target` only when the flag was given, so file values survive otherwise.
template <typename T>
void override_if(const CLI::Option* opt, T& target, const T& value) {
    if (opt->count() > 0) target = value;
}

InpaintModel load_model(const std::string& path) {
    return InpaintModel::from_checkpoint(Checkpoint::load(path));
}

// --- maskgen -----------------------------------------------------------------

struct MaskgenArgs {
    std::string config, out_dir = "masks";
    int count = 8, height = 256, width = 256, strokes = 4, rects = 0;
    uint64_t seed = 0, first_index = 0;
};

void add_maskgen(CLI::App& app, MaskgenArgs& a, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("maskgen", "Sample free-form masks as PNGs (255 = valid, 0 = hole)");
    cmd->add_option("--config", a.config, "MaskGenConfig JSON");
    cmd->add_option("-o,--out", a.out_dir, "Output directory");
    cmd->add_option("-n,--count", a.count, "Number of masks")->check(CLI::PositiveNumber);
    auto* h = cmd->add_option("--height", a.height, "Canvas height");
    auto* w = cmd->add_option("--width", a.width, "Canvas width");
    auto* st = cmd->add_option("--strokes", a.strokes, "Strokes per mask");
    auto* rc = cmd->add_option("--rectangles", a.rects, "Rectangles per mask");
    auto* sd = cmd->add_option("--seed", a.seed, "Seed");
    cmd->add_option("--first-index", a.first_index, "Stream index of the first mask");
    cmd->callback([&a, &run, h, w, st, rc, sd] {
        run = [&a, h, w, st, rc, sd] {
            MaskGenConfig cfg = MaskGenConfig::defaults_for(a.height, a.width);
            if (!a.config.empty()) {
                cfg = read_json_file(a.config).get<MaskGenConfig>();
                override_if(h, cfg.image_height, a.height);
                override_if(w, cfg.image_width, a.width);
            }
            override_if(st, cfg.num_strokes, a.strokes);
            override_if(rc, cfg.num_rectangles, a.rects);
            override_if(sd, cfg.seed, a.seed);
            cfg.validate();
            for (const auto& msg : cfg.warnings()) std::cerr << "warning: " << msg << "\n";
            fs::create_directories(a.out_dir);
            for (int i = 0; i < a.count; ++i) {
                const uint64_t index = a.first_index + static_cast<uint64_t>(i);
                const Mask m = generate_free_form_mask(cfg, index);
                char name[32];
                std::snprintf(name, sizeof name, "mask_%05llu.png", static_cast<unsigned long long>(index));
                const fs::path path = fs::path(a.out_dir) / name;
                write_png(path, mask_to_image(m));
                const auto stats = mask_stats(m);
                std::cout << json{{"path", path.string()}, {"index", index}, {"coverage", stats.coverage},
                                  {"components", stats.num_components}}
                                 .dump()
                          << "\n";
            }
        };
    });
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string config, dataset, image_folder, log, checkpoint;
    int image_size = 0, batch_size = 0, steps = 0, log_interval = 0, checkpoint_interval = 0;
    double lr_g = 0, lr_d = 0;
    uint64_t seed = 0;
    bool guided = false, holes_only = false, frozen_gates = false;
};

void add_train(CLI::App& app, TrainArgs& a, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("train", "Train generator and discriminator; flags override --config");
    cmd->add_option("--config", a.config, "TrainConfig JSON");
    auto* ds = cmd->add_option("--dataset", a.dataset, "synthetic-textures | image-folder");
    auto* folder = cmd->add_option("--image-folder", a.image_folder, "Directory of PNGs for image-folder");
    auto* size = cmd->add_option("--image-size", a.image_size, "Training crop size (divisible by 4)");
    auto* batch = cmd->add_option("--batch-size", a.batch_size, "Batch size");
    auto* steps = cmd->add_option("--steps", a.steps, "Alternating D/G steps");
    auto* lrg = cmd->add_option("--lr-g", a.lr_g, "Generator learning rate");
    auto* lrd = cmd->add_option("--lr-d", a.lr_d, "Discriminator learning rate");
    auto* seed = cmd->add_option("--seed", a.seed, "Seed");
    auto* log = cmd->add_option("--log", a.log, "JSON-lines log file (stdout when unset)");
    auto* ckpt = cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint path");
    auto* li = cmd->add_option("--log-interval", a.log_interval, "Steps between log lines");
    auto* ci = cmd->add_option("--checkpoint-interval", a.checkpoint_interval, "Steps between checkpoints");
    auto* guided = cmd->add_flag("--guided", a.guided, "Train with the sketch channel");
    auto* holes = cmd->add_flag("--l1-holes-only", a.holes_only, "Restrict l1 to hole pixels");
    auto* frozen = cmd->add_flag("--frozen-gates", a.frozen_gates, "Ablation: every gate fixed at 0.5");
    cmd->callback([=, &a, &run] {
        run = [=, &a] {
            TrainConfig cfg = a.config.empty() ? TrainConfig{} : read_json_file(a.config).get<TrainConfig>();
            override_if(ds, cfg.dataset, a.dataset);
            override_if(folder, cfg.image_folder, a.image_folder);
            if (size->count()) {
                cfg.image_size = a.image_size;
                cfg.maskgen = MaskGenConfig::defaults_for(a.image_size, a.image_size);
            }
            override_if(batch, cfg.batch_size, a.batch_size);
            override_if(steps, cfg.steps, a.steps);
            override_if(lrg, cfg.lr_g, a.lr_g);
            override_if(lrd, cfg.lr_d, a.lr_d);
            override_if(seed, cfg.seed, a.seed);
            override_if(log, cfg.log_path, a.log);
            override_if(ckpt, cfg.checkpoint_path, a.checkpoint);
            override_if(li, cfg.log_interval, a.log_interval);
            override_if(ci, cfg.checkpoint_interval, a.checkpoint_interval);
            override_if(guided, cfg.guided, a.guided);
            override_if(holes, cfg.l1_holes_only, a.holes_only);
            override_if(frozen, cfg.generator.frozen_gates, a.frozen_gates);
            cfg.normalize();
            cfg.validate();
            Trainer t(cfg);
            t.run(cfg.log_path.empty() ? &std::cout : nullptr);
            if (cfg.checkpoint_path.empty()) std::cerr << "note: no --checkpoint given, model not saved\n";
        };
    });
}

// --- inpaint -----------------------------------------------------------------

struct InpaintArgs {
    std::string checkpoint, image, mask, sketch, out = "out.png";
};

Tensor<float> load_sketch_for(const Generator<float>& g, const std::string& path, int h, int w) {
    if (!g.config().guided()) {
        if (!path.empty()) throw UsageError("checkpoint is not guided; it takes no --sketch");
        return {};
    }
    if (path.empty()) throw UsageError("guided checkpoint requires --sketch (refusing to substitute zeros)");
    const Image s = read_png(path, 1);
    if (s.height != h || s.width != w) throw UsageError("sketch size does not match the image");
    return sketch_from_image<float>(s);
}

void check_inputs(const Image& img, const Mask& m) {
    if (m.height != img.height || m.width != img.width)
        throw UsageError("mask is " + std::to_string(m.width) + "x" + std::to_string(m.height) + ", image is " +
                         std::to_string(img.width) + "x" + std::to_string(img.height));
    if (img.height % 4 || img.width % 4)
        throw UsageError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         "; both sides must be divisible by 4, pad the image and mask first");
}

void add_inpaint(CLI::App& app, InpaintArgs& a, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("inpaint", "Fill the holes of one image");
    cmd->add_option("--checkpoint", a.checkpoint, "Trained checkpoint")->required();
    cmd->add_option("--image", a.image, "RGB PNG")->required();
    cmd->add_option("--mask", a.mask, "Gray PNG, >= 128 valid, else hole")->required();
    cmd->add_option("--sketch", a.sketch, "Gray PNG sketch (guided checkpoints only)");
    cmd->add_option("-o,--out", a.out, "Output PNG");
    cmd->callback([&a, &run] {
        run = [&a] {
            const InpaintModel model = load_model(a.checkpoint);
            const Generator<float>& g = model.generator;
            const Image img = read_png(a.image, 3);
            const Mask m = mask_from_image(read_png(a.mask, 1));
            check_inputs(img, m);
            const Tensor<float> sketch = load_sketch_for(g, a.sketch, img.height, img.width);
            NoGradGuard<float> frozen(parameters_of(g));
            const auto image = to_network_range(image_to_tensor<float>(img));
            const auto out = g.forward(image, mask_tensor<float>(std::span<const Mask>(&m, 1)), sketch).composited;
            write_png(a.out, tensor_to_image(from_network_range(out)));
            std::cout << json{{"out", a.out}, {"holes", m.hole_count()}}.dump() << "\n";
        };
    });
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoint, images, region = "full", gt_dir, result_dir, mask_dir;
    std::string synthetic = "textures";
    int count = 64, size = 0;
    uint64_t seed = 12345, mask_seed = 999;
};

std::vector<fs::path> pngs_in(const std::string& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw UsageError("no PNG files in " + dir);
    return out;
}

void add_eval(CLI::App& app, EvalArgs& a, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("eval",
                                   "Mean l1/l2 error: a checkpoint on held-out images, or existing result PNGs");
    cmd->add_option("--checkpoint", a.checkpoint, "Evaluate this model on held-out images");
    cmd->add_option("--images", a.images, "Directory of ground-truth PNGs (default: synthetic)");
    cmd->add_option("--synthetic", a.synthetic, "gradient | two_region | constant | textures");
    cmd->add_option("-n,--count", a.count, "Synthetic image count")->check(CLI::PositiveNumber);
    cmd->add_option("--size", a.size, "Crop/synthesis size (default: checkpoint training size)");
    cmd->add_option("--seed", a.seed, "Held-out data seed");
    cmd->add_option("--mask-seed", a.mask_seed, "Held-out mask seed");
    cmd->add_option("--gt-dir", a.gt_dir, "Ground-truth PNGs, paired by file name");
    cmd->add_option("--result-dir", a.result_dir, "Result PNGs");
    cmd->add_option("--mask-dir", a.mask_dir, "Mask PNGs (all-valid when unset)");
    cmd->add_option("--region", a.region, "full | hole-only");
    cmd->callback([&a, &run] {
        run = [&a] {
            const EvalRegion region = eval_region_from_string(a.region);
            if (!a.gt_dir.empty() || !a.result_dir.empty()) {
                if (a.gt_dir.empty() || a.result_dir.empty()) throw UsageError("--gt-dir and --result-dir go together");
                std::vector<Tensor<double>> gt, res;
                std::vector<Mask> masks;
                for (const auto& p : pngs_in(a.gt_dir)) {
                    const Image g = read_png(p, 3);
                    gt.push_back(image_to_tensor<double>(g));
                    res.push_back(image_to_tensor<double>(read_png(fs::path(a.result_dir) / p.filename(), 3)));
                    masks.push_back(a.mask_dir.empty() ? Mask(g.height, g.width, 1)
                                                       : mask_from_image(read_png(fs::path(a.mask_dir) / p.filename(), 1)));
                }
                std::cout << json(evaluate(gt, res, masks, region)).dump() << "\n";
                return;
            }
            if (a.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --gt-dir/--result-dir");
            const Checkpoint ckpt = Checkpoint::load(a.checkpoint);
            const InpaintModel model = InpaintModel::from_checkpoint(ckpt);
            const int size = a.size > 0 ? a.size : ckpt.meta.value("image_size", 32);
            Rng rng(a.seed);
            Batch batch;
            if (a.images.empty()) {
                batch = synth_dataset(synth_kind_from_string(a.synthetic), a.count, size, rng);
            } else {
                batch = ImageFolderDataset(a.images, size).sample(a.count, rng);
            }
            auto mc = MaskGenConfig::defaults_for(size, size);
            mc.seed = a.mask_seed;
            std::vector<Mask> masks;
            for (int i = 0; i < a.count; ++i) masks.push_back(generate_free_form_mask(mc, static_cast<uint64_t>(i)));
            std::cout << json(evaluate_generator(model.generator, batch, masks, region)).dump() << "\n";
        };
    });
}

// --- gradcheck ---------------------------------------------------------------

struct GradcheckArgs {
    int size = 16, d_size = 64, entries = 6;
    uint64_t seed = 1;
    double tolerance = 1e-4;
    double eps = GradCheckOptions{}.eps;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a, std::function<void()>& run, int& exit_code) {
    auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of a tiny generator and discriminator");
    cmd->add_option("--size", a.size, "Generator input size (divisible by 4)");
    cmd->add_option("--d-size", a.d_size, "Discriminator input size");
    cmd->add_option("--entries", a.entries, "Entries sampled per parameter tensor (0 = all)");
    cmd->add_option("--seed", a.seed, "Seed");
    cmd->add_option("--tolerance", a.tolerance, "Maximum relative error");
    cmd->add_option("--eps", a.eps, "Finite-difference step")->check(CLI::PositiveNumber);
    cmd->callback([&a, &run, &exit_code] {
        run = [&a, &exit_code] {
            using TD = Tensor<double>;
            Rng rng(a.seed);
            const int64_t s = a.size;
            auto rand = [&rng](Shape sh, bool grad, double lo, double hi) {
                std::vector<double> v(static_cast<size_t>(sh.numel()));
                for (auto& x : v) x = rng.uniform(lo, hi);
                return TD::from_data(sh, std::move(v), grad);
            };
            auto binary = [&rng](Shape sh, double p) {
                std::vector<double> v(static_cast<size_t>(sh.numel()));
                for (auto& x : v) x = rng.uniform() < p ? 1.0 : 0.0;
                return TD::from_data(sh, std::move(v));
            };
            GeneratorConfig gc;
            gc.base_width = 8;
            gc.width_slim = 1.0;
            gc.input_channels = 5;
            gc.dilation_schedule = {2};
            auto g = Generator<double>::build(gc, rng);
            DiscriminatorConfig dc;
            dc.input_channels = 5;
            dc.widths = {8, 8, 16, 16, 16, 16};
            auto d = Discriminator<double>::build(dc, rng);

            const auto image = rand({1, 3, s, s}, true, -1, 1);
            const auto mask = binary({1, 1, s, s}, 0.6);
            const auto sketch = binary({1, 1, s, s}, 0.2);
            const auto r_coarse = rand({1, 3, s, s}, false, -1, 1);
            const auto r_out = rand({1, 3, s, s}, false, -1, 1);
            GradCheckOptions opt;
            opt.max_entries_per_tensor = a.entries;
            opt.eps = a.eps;

            std::vector<NamedTensor<double>> gp;
            g.collect(gp);
            gp.push_back({"image", image});
            const auto rg = grad_check(
                [&] {
                    const auto o = g.forward(image, mask, sketch);
                    return add(sum(mul(o.coarse, r_coarse)), sum(mul(o.composited, r_out)));
                },
                gp, opt);

            const int64_t ds = a.d_size;
            const auto d_image = rand({1, 3, ds, ds}, true, -1, 1);
            const auto d_mask = binary({1, 1, ds, ds}, 0.6);
            const auto d_sketch = binary({1, 1, ds, ds}, 0.2);
            d.forward(d_image, d_mask, d_sketch);  // settle u before freezing it
            const auto r_score = rand(d.forward(d_image, d_mask, d_sketch, false).shape(), false, -1, 1);
            std::vector<NamedTensor<double>> dp;
            d.collect(dp);
            dp.push_back({"image", d_image});
            const auto rd = grad_check(
                [&] { return sum(mul(d.forward(d_image, d_mask, d_sketch, false), r_score)); }, dp, opt);

            bool ok = true;
            for (const auto& [name, r] : {std::pair{"generator", rg}, std::pair{"discriminator", rd}}) {
                ok = ok && r.max_relative_error < a.tolerance;
                std::cout << json{{"network", name},
                                  {"max_relative_error", r.max_relative_error},
                                  {"worst_parameter", r.worst_parameter},
                                  {"worst_index", r.worst_index},
                                  {"analytic", r.worst_analytic},
                                  {"numeric", r.worst_numeric},
                                  {"entries_checked", r.entries_checked},
                                  {"entries_retried", r.entries_retried},
                                  {"pass", r.max_relative_error < a.tolerance}}
                                 .dump()
                          << "\n";
            }
            exit_code = ok ? 0 : 1;
        };
    });
}

// --- dump-gating -------------------------------------------------------------

struct DumpArgs {
    std::string checkpoint, image, mask, sketch, out_dir = "gating";
    uint64_t seed = 1;
};

void add_dump(CLI::App& app, DumpArgs& a, std::function<void()>& run) {
    auto* cmd = app.add_subcommand("dump-gating", "Write sigma(gating) of every layer as PNG grids");
    cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint (an untrained default model when unset)");
    cmd->add_option("--image", a.image, "RGB PNG")->required();
    cmd->add_option("--mask", a.mask, "Gray PNG, >= 128 valid, else hole")->required();
    cmd->add_option("--sketch", a.sketch, "Sketch PNG (guided checkpoints only)");
    cmd->add_option("-o,--out", a.out_dir, "Output directory");
    cmd->add_option("--seed", a.seed, "Init seed of the untrained model");
    cmd->callback([&a, &run] {
        run = [&a] {
            const InpaintModel model = a.checkpoint.empty()
                                           ? InpaintModel::build(GeneratorConfig{}, DiscriminatorConfig{}, a.seed)
                                           : load_model(a.checkpoint);
            const Generator<float>& g = model.generator;
            const Image img = read_png(a.image, 3);
            const Mask m = mask_from_image(read_png(a.mask, 1));
            check_inputs(img, m);
            const Tensor<float> sketch = load_sketch_for(g, a.sketch, img.height, img.width);
            NoGradGuard<float> frozen(parameters_of(g));
            const auto maps = dump_gating(g, to_network_range(image_to_tensor<float>(img)),
                                          mask_tensor<float>(std::span<const Mask>(&m, 1)), sketch);
            fs::create_directories(a.out_dir);
            for (const auto& p : write_gating_pngs(maps, a.out_dir)) std::cout << p.string() << "\n";
        };
    });
}

}  // namespace

int main(int argc, char** argv) {
    retain_freed_memory();
    CLI::App app{"gatedfill: free-form image inpainting with gated convolutions"};
    app.require_subcommand(1);
    std::function<void()> run;
    int exit_code = 0;

    MaskgenArgs maskgen;
    TrainArgs train;
    InpaintArgs inpaint;
    EvalArgs eval;
    GradcheckArgs gradcheck;
    DumpArgs dump;
    add_maskgen(app, maskgen, run);
    add_train(app, train, run);
    add_inpaint(app, inpaint, run);
    add_eval(app, eval, run);
    add_gradcheck(app, gradcheck, run, exit_code);
    add_dump(app, dump, run);

    CLI11_PARSE(app, argc, argv);
    try {
        run();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return exit_code;
}

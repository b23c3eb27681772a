#include "pfcn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"

namespace pfcn {

SupervisionMode parse_supervision_mode(const std::string& s) {
    if (s == "full") return SupervisionMode::Full;
    if (s == "points") return SupervisionMode::Points;
    throw ConfigError("unknown supervision mode '" + s + "' (expected full or points)");
}

std::string to_string(SupervisionMode m) { return m == SupervisionMode::Full ? "full" : "points"; }

double poly_lr(double base, int t, int total, double power) {
    if (total <= 0) return base;
    const double frac = std::clamp(1.0 - static_cast<double>(t) / total, 0.0, 1.0);
    return base * std::pow(frac, power);
}

double scheduled_lr(const TrainConfig& cfg, int t) {
    double lr = poly_lr(cfg.lr, t, cfg.iterations, cfg.poly_power);
    if (t < cfg.warmup_iters) {
        const double a = static_cast<double>(t) / cfg.warmup_iters;
        lr *= cfg.warmup_factor * (1.0 - a) + a;
    }
    return lr;
}

namespace {

Tensor<float> flip_image(const Tensor<float>& x) {
    Tensor<float> f = x;
    for (int c = 0; c < x.c; ++c)
        for (int y = 0; y < x.h; ++y)
            for (int xx = 0; xx < x.w; ++xx) f.at(c, y, xx) = x.at(c, y, x.w - 1 - xx);
    return f;
}

uint64_t scene_seed(uint64_t seed, int index) {
    std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32), static_cast<uint32_t>(index),
                      0x7017u};
    std::vector<uint32_t> w(2);
    seq.generate(w.begin(), w.end());
    return (static_cast<uint64_t>(w[0]) << 32) | w[1];
}

}  // namespace

std::vector<std::vector<PointAnnotation>> simulate_dataset_points(const Dataset& data,
                                                                  const PointSupervisionConfig& cfg) {
    std::vector<std::vector<PointAnnotation>> out;
    for (size_t i = 0; i < data.size(); ++i) {
        out.push_back(simulate_annotations(data.scenes[i].gt, cfg.n, cfg.boundary_ratio,
                                           scene_seed(cfg.seed, static_cast<int>(i))));
    }
    return out;
}

std::vector<TrainSample> prepare_samples(const Dataset& data, const TrainConfig& cfg, const StageGeometry& geom,
                                         const std::vector<std::vector<PointAnnotation>>* points) {
    std::vector<std::vector<PointAnnotation>> simulated;
    if (cfg.supervision == SupervisionMode::Points && !points) {
        simulated = simulate_dataset_points(data, cfg.points);
        points = &simulated;
    }
    if (points && points->size() != data.size()) {
        throw InputError("point annotations cover " + std::to_string(points->size()) + " images but the dataset has " +
                         std::to_string(data.size()));
    }
    std::vector<TrainSample> samples;
    samples.reserve(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        const Scene& sc = data.scenes[i];
        if (sc.image.h != geom.image_h || sc.image.w != geom.image_w) {
            throw InputError("image " + data.names[i] + " is " + std::to_string(sc.image.w) + "x" +
                             std::to_string(sc.image.h) + ", expected " + std::to_string(geom.image_w) + "x" +
                             std::to_string(geom.image_h));
        }
        Supervision sup = cfg.supervision == SupervisionMode::Full
                              ? supervision_from_ground_truth(sc.gt, data.taxonomy)
                              : supervision_from_points((*points)[i], sc.image.h, sc.image.w, cfg.points.shape,
                                                        cfg.points.augment, data.taxonomy);
        TrainSample s;
        s.name = data.names[i];
        s.image = image_to_tensor<float>(sc.image);
        s.targets = build_image_targets(sup, geom);
        if (cfg.flip) {
            s.flipped_image = flip_image(s.image);
            s.flipped_targets = build_image_targets(flip_supervision(sup), geom);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string to_json_line(const StepLoss& s) {
    nlohmann::json j{{"iteration", s.iteration}, {"L", s.total},  {"L_pos_th", s.pos_thing},
                     {"L_pos_st", s.pos_stuff},  {"L_seg", s.seg}, {"lr", s.lr}};
    return j.dump();
}

Trainer::Trainer(PanopticModel<float>& model, const TrainConfig& cfg) : model_(model), cfg_(cfg) {
    if (cfg.batch_size < 1) throw ConfigError("batch size must be positive");
    if (cfg.iterations < 0) throw ConfigError("iteration count must be non-negative");
    if (cfg.lr < 0 || cfg.momentum < 0 || cfg.weight_decay < 0) {
        throw ConfigError("learning rate, momentum and weight decay must be non-negative");
    }
    for (const auto& p : model_.params().all()) velocity_.emplace_back(p->size(), 0.0f);
}

StepLoss Trainer::step(const std::vector<const TrainSample*>& batch, const std::vector<bool>& flips, int iteration) {
    const int nthings = model_.config().num_things;
    auto& store = model_.params();
    store.zero_grad();
    StepLoss loss;
    loss.iteration = iteration;
    loss.lr = scheduled_lr(cfg_, iteration);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (size_t b = 0; b < batch.size(); ++b) {
        const TrainSample& s = *batch[b];
        const bool flip = b < flips.size() && flips[b] && !s.flipped_image.empty();
        const Tensor<float>& image = flip ? s.flipped_image : s.image;
        const ImageTargets& targets = flip ? s.flipped_targets : s.targets;
        PanopticModel<float>::Cache cache;
        auto out = model_.forward(image, &cache);
        KernelSelection sel = select_training_kernels(out.position_logits, targets, nthings, cfg_.objective.k);
        PanopticModel<float>::OutputGrad grad;
        ObjectiveValue v;
        try {
            v = evaluate_objective<float>(out, targets, sel, cfg_.objective, nthings, &grad, scale);
        } catch (const TrainingError&) {
            v.total = std::numeric_limits<double>::quiet_NaN();
        }
        if (!std::isfinite(v.total)) {
            nlohmann::json dump{{"iteration", iteration},
                                {"image", s.name},
                                {"flipped", flip},
                                {"L_pos_th", std::isfinite(v.pos_thing) ? nlohmann::json(v.pos_thing) : nlohmann::json("nan")},
                                {"L_pos_st", std::isfinite(v.pos_stuff) ? nlohmann::json(v.pos_stuff) : nlohmann::json("nan")},
                                {"L_seg", std::isfinite(v.seg) ? nlohmann::json(v.seg) : nlohmann::json("nan")},
                                {"instance", v.bad_instance},
                                {"things", v.thing_instances},
                                {"stuff", v.stuff_instances}};
            if (v.bad_instance >= 0 && v.bad_instance < static_cast<int>(sel.things.size())) {
                const auto& th = targets.thing_seg[sel.things[v.bad_instance].target];
                dump["instance_stage"] = th.stage;
                dump["instance_channel"] = th.channel;
                dump["instance_cells"] = sel.things[v.bad_instance].cells;
            }
            const auto path = dump_dir_ / "nonfinite_dump.json";
            std::ofstream(path) << dump.dump(1) << "\n";
            throw TrainingError("non-finite loss at iteration " + std::to_string(iteration) + " on image " + s.name +
                                "; diagnostics written to " + path.string());
        }
        loss.total += v.total * scale;
        loss.pos_thing += v.pos_thing * scale;
        loss.pos_stuff += v.pos_stuff * scale;
        loss.seg += v.seg * scale;
        model_.backward(cache, grad);
    }
    float clip = 1.0f;
    if (cfg_.clip_norm > 0) {
        double sq = 0;
        for (const auto& p : store.all())
            for (float g : p->grad) sq += static_cast<double>(g) * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg_.clip_norm) clip = static_cast<float>(cfg_.clip_norm / norm);
    }
    const float lr = static_cast<float>(loss.lr);
    const float mom = static_cast<float>(cfg_.momentum);
    const float wd = static_cast<float>(cfg_.weight_decay);
    auto& params = store.all();
    for (size_t i = 0; i < params.size(); ++i) {
        Param<float>& p = *params[i];
        auto& v = velocity_[i];
        for (size_t j = 0; j < p.size(); ++j) {
            float g = p.grad[j] * clip;
            if (!std::isfinite(g)) {
                throw TrainingError("non-finite gradient for parameter " + p.name + " at iteration " +
                                    std::to_string(iteration));
            }
            if (p.decay) g += wd * p.value[j];
            v[j] = mom * v[j] + g;
            p.value[j] -= lr * v[j];
        }
    }
    return loss;
}

std::vector<StepLoss> run_training(PanopticModel<float>& model, const std::vector<TrainSample>& samples,
                                   const TrainConfig& cfg, const TrainHooks& hooks) {
    if (samples.empty() && cfg.iterations > 0) throw InputError("training set is empty");
    Trainer trainer(model, cfg);
    trainer.set_dump_dir(hooks.dump_dir);
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995ULL);
    std::vector<int> order(samples.size());
    size_t cursor = order.size();
    std::vector<StepLoss> history;
    history.reserve(cfg.iterations);
    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<const TrainSample*> batch;
        std::vector<bool> flips;
        for (int b = 0; b < cfg.batch_size; ++b) {
            if (cursor >= order.size()) {
                std::iota(order.begin(), order.end(), 0);
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            batch.push_back(&samples[order[cursor++]]);
            flips.push_back(cfg.flip && (rng() & 1));
        }
        StepLoss l = trainer.step(batch, flips, it);
        history.push_back(l);
        if (hooks.loss_log) *hooks.loss_log << to_json_line(l) << "\n";
        if (hooks.progress) hooks.progress(l);
        if (hooks.evaluate && cfg.eval_every > 0 && (it + 1) % cfg.eval_every == 0) hooks.evaluate(it + 1, model);
    }
    if (hooks.loss_log) hooks.loss_log->flush();
    return history;
}

}  // namespace pfcn

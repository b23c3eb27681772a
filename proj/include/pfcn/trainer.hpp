#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "pfcn/model.hpp"
#include "pfcn/objective.hpp"
#include "pfcn/synth_data.hpp"

namespace pfcn {

enum class SupervisionMode { Full, Points };
SupervisionMode parse_supervision_mode(const std::string& s);
std::string to_string(SupervisionMode m);

struct PointSupervisionConfig {
    int n = 10;
    double boundary_ratio = 0.0;
    ShapeMode shape = ShapeMode::Concave;
    AugmentOptions augment;
    uint64_t seed = 0;  // point sampling seed
};

struct TrainConfig {
    int iterations = 600;
    double lr = 0.01;
    double poly_power = 0.9;
    double weight_decay = 1e-4;
    double momentum = 0.9;
    int batch_size = 8;
    uint64_t seed = 0;
    int warmup_iters = 50;       // linear ramp from warmup_factor to 1
    double warmup_factor = 0.001;
    double clip_norm = 10.0;     // global gradient norm cap, 0 = off
    bool flip = true;            // random horizontal flips
    int eval_every = 0;
    ObjectiveConfig objective;
    SupervisionMode supervision = SupervisionMode::Full;
    PointSupervisionConfig points;
};

/// base * (1 - t / T)^power.
double poly_lr(double base, int t, int total, double power);

/// Poly schedule times the linear warmup factor.
double scheduled_lr(const TrainConfig& cfg, int t);

/// An image with its precomputed targets (and those of its mirror image).
struct TrainSample {
    std::string name;
    Tensor<float> image;
    ImageTargets targets;
    Tensor<float> flipped_image;
    ImageTargets flipped_targets;
};

/// Targets from full masks, or from the given point annotations (one list per
/// scene) when cfg.supervision is Points.
std::vector<TrainSample> prepare_samples(const Dataset& data, const TrainConfig& cfg, const StageGeometry& geom,
                                         const std::vector<std::vector<PointAnnotation>>* points = nullptr);

/// Simulated point annotations for every scene, seeded per scene.
std::vector<std::vector<PointAnnotation>> simulate_dataset_points(const Dataset& data,
                                                                  const PointSupervisionConfig& cfg);

struct StepLoss {
    int iteration = 0;
    double total = 0;
    double pos_thing = 0;
    double pos_stuff = 0;
    double seg = 0;
    double lr = 0;
};

std::string to_json_line(const StepLoss& s);

/// SGD with momentum, weight decay on decaying parameters and a poly schedule.
class Trainer {
public:
    Trainer(PanopticModel<float>& model, const TrainConfig& cfg);

    /// One update on the given batch; `flips[i]` selects the mirrored sample.
    /// Non-finite values abort with a TrainingError naming a dump file in dump_dir.
    StepLoss step(const std::vector<const TrainSample*>& batch, const std::vector<bool>& flips, int iteration);

    void set_dump_dir(std::filesystem::path dir) { dump_dir_ = std::move(dir); }
    const TrainConfig& config() const { return cfg_; }

private:
    PanopticModel<float>& model_;
    TrainConfig cfg_;
    std::vector<std::vector<float>> velocity_;
    std::filesystem::path dump_dir_ = ".";
};

struct TrainHooks {
    std::ostream* loss_log = nullptr;  // one JSON record per iteration
    std::function<void(int, const PanopticModel<float>&)> evaluate;  // every eval_every iterations
    std::function<void(const StepLoss&)> progress;
    std::filesystem::path dump_dir = ".";
};

/// Runs cfg.iterations updates. Batches are drawn from per-epoch shuffles
/// seeded by cfg.seed, so the sample order is fixed by the seed.
std::vector<StepLoss> run_training(PanopticModel<float>& model, const std::vector<TrainSample>& samples,
                                   const TrainConfig& cfg, const TrainHooks& hooks = {});

}  // namespace pfcn

#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "pfcn/config.hpp"
#include "pfcn/evaluation.hpp"
#include "pfcn/inference.hpp"
#include "pfcn/synth_data.hpp"

namespace pfcn {

/// Model sized for the taxonomy's thing and stuff counts.
std::unique_ptr<PanopticModel<float>> make_model(const RunConfig& cfg, const Taxonomy& taxonomy);

/// Geometry for images of the given size under the configuration.
StageGeometry make_geometry(const RunConfig& cfg, const Taxonomy& taxonomy, int image_h, int image_w);

/// Inference on every scene, spread over `workers` threads; output order follows the dataset.
std::vector<InferenceResult> infer_dataset(const PanopticModel<float>& model, const Dataset& data,
                                           const InferenceConfig& cfg, int workers = 1);

MetricReport evaluate_predictions(const std::vector<PanopticSegmentation>& preds, const Dataset& data);

MetricReport evaluate_model(const PanopticModel<float>& model, const Dataset& data, const InferenceConfig& cfg,
                            int workers = 1);

struct TrainingRun {
    std::unique_ptr<PanopticModel<float>> model;
    std::vector<StepLoss> losses;
    std::optional<MetricReport> report;  // on the validation set, when given
};

struct TrainingOptions {
    int workers = 1;
    std::function<void(const StepLoss&)> progress;
    /// Point annotations to use instead of simulating them (one list per scene).
    const std::vector<std::vector<PointAnnotation>>* points = nullptr;
};

/// Trains on `train` and evaluates on `val` (if non-null). When out_dir is
/// set, writes config.json, loss_log.jsonl, checkpoint.bin and metrics.json there.
TrainingRun train_and_evaluate(const RunConfig& cfg, const Dataset& train, const Dataset* val,
                               const std::optional<std::filesystem::path>& out_dir, const TrainingOptions& opts = {});

}  // namespace pfcn

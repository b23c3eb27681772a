#pragma once

#include <string>
#include <vector>

#include "pfcn/kernel_fusion.hpp"
#include "pfcn/model.hpp"
#include "pfcn/panoptic.hpp"

namespace pfcn {

enum class StitchMode { Heuristic, Argmax };
StitchMode parse_stitch_mode(const std::string& s);
std::string to_string(StitchMode m);

struct InferenceConfig {
    float score_floor = 0.05f;
    FusionOptions fusion;
    int max_things = 100;
    float mask_threshold = 0.4f;
    bool rescore = true;
    StitchMode stitch = StitchMode::Heuristic;
    double keep_fraction = 0.5;
    /// Heuristic stitching skips things scored below this (after rescoring).
    float min_thing_score = 0.2f;
    int min_thing_area = 16;
    int min_stuff_area = 64;
};

/// A fused kernel's mask at image resolution.
struct MaskPrediction {
    Kind kind = Kind::Thing;
    int category = 0;  // dataset category id
    float score = 0;
    Grid<float> prob;
};

/// score x mean probability over pixels >= threshold; unchanged when none is.
float rescore(float score, const Grid<float>& prob, float threshold);

/// Paints things scored at least min_thing_score by descending score onto
/// unclaimed pixels, then stuff.
PanopticSegmentation stitch_heuristic(const std::vector<MaskPrediction>& things,
                                      const std::vector<MaskPrediction>& stuff, const InferenceConfig& cfg);

/// Per-pixel arg-max over all masks; winners below the threshold become void,
/// as do segments below their minimum area.
PanopticSegmentation stitch_argmax(const std::vector<MaskPrediction>& things, const std::vector<MaskPrediction>& stuff,
                                   const InferenceConfig& cfg);

struct InferenceResult {
    std::vector<MaskPrediction> things;  // after fusion, top-k and rescoring, by descending score
    std::vector<MaskPrediction> stuff;
    PanopticSegmentation panoptic;
    int h = 0;
    int w = 0;
};

InferenceResult run_inference(const PanopticModel<float>& model, const Tensor<float>& image, const Taxonomy& taxonomy,
                              const InferenceConfig& cfg);

PanopticSegmentation run_panoptic_inference(const PanopticModel<float>& model, const RgbImage& image,
                                            const Taxonomy& taxonomy, const InferenceConfig& cfg);

/// Stitches previously produced masks again with a different configuration.
PanopticSegmentation restitch(const InferenceResult& r, const InferenceConfig& cfg);

/// Colour rendering of a segmentation: things get distinct hues, stuff muted tones, void black.
RgbImage colorize(const PanopticSegmentation& seg, const Taxonomy& taxonomy);

}  // namespace pfcn

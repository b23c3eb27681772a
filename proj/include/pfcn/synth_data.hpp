#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pfcn/panoptic.hpp"

namespace pfcn {

/// Parameters of the synthetic panoptic scene generator.
struct SceneSpec {
    int image_size = 128;
    int min_objects = 1;
    int max_objects = 6;
    int min_radius = 8;
    int max_radius = 20;
    int color_jitter = 20;
    double noise_sigma = 8.0;
    int gap = 2;  // minimum pixel gap between objects
    uint64_t seed = 0;
};

struct Scene {
    RgbImage image;
    PanopticSegmentation gt;
};

/// Deterministic in (spec.seed, index). Things never overlap and every pixel
/// is labelled.
Scene generate_scene(const SceneSpec& spec, int index);

struct Dataset {
    Taxonomy taxonomy;
    std::vector<std::string> names;  // image stems, e.g. "000007"
    std::vector<Scene> scenes;

    size_t size() const { return scenes.size(); }
};

std::string image_stem(int index);

/// Writes NNNNNN.png, NNNNNN_pan.png and annotations.json under dir.
void write_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Reads a directory written by write_dataset. Segment records are validated
/// against the id maps.
Dataset read_dataset(const std::filesystem::path& dir);

/// Predictions in the same layout but without RGB images (only *_pan.png and annotations.json).
void write_predictions(const Taxonomy& taxonomy, const std::vector<std::string>& names,
                       const std::vector<PanopticSegmentation>& preds, const std::filesystem::path& dir);
std::vector<PanopticSegmentation> read_predictions(const std::filesystem::path& dir, std::vector<std::string>* names);

/// Scenes first_index .. first_index + count - 1.
Dataset make_synthetic_dataset(const SceneSpec& spec, int count, int first_index = 0);

}  // namespace pfcn

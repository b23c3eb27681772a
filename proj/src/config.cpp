#include "pfcn/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

namespace pfcn {

using nlohmann::json;

json default_config() {
    return json{
        {"seed", 0},
        {"data", {{"train", ""}, {"val", ""}}},
        {"model",
         {{"stem_channels", 16},
          {"channels", 32},
          {"num_stages", 3},
          {"head_channels", 128},
          {"head_depth", 3},
          {"kernel_dim", 64},
          {"kernel_coords", true},
          {"encoder_coords", true},
          {"encoder_mode", "semantic_fpn"},
          {"thing_prior", 0.1}}},
        {"geometry", {{"scale_bounds", {32.0, 64.0}}, {"center", "mass"}}},
        {"train",
         {{"iterations", 600},
          {"lr", 0.01},
          {"poly_power", 0.9},
          {"weight_decay", 1e-4},
          {"momentum", 0.9},
          {"batch_size", 8},
          {"warmup_iters", 50},
          {"warmup_factor", 0.001},
          {"clip_norm", 10.0},
          {"flip", true},
          {"eval_every", 0},
          {"k", 7},
          {"lambda_pos", 1.0},
          {"lambda_seg", 3.0},
          {"thing_norm", "categories"},
          {"focal_alpha", 2.0},
          {"focal_beta", 4.0}}},
        {"supervision",
         {{"mode", "full"},
          {"points_file", ""},
          {"n", 10},
          {"boundary_ratio", 0.0},
          {"shape", "concave"},
          {"augment", true},
          {"augment_things", false},
          {"dilate_iterations", 2}}},
        {"inference",
         {{"score_floor", 0.05},
          {"fusion_threshold", 0.9},
          {"class_aware", true},
          {"founder_mode", false},
          {"max_things", 100},
          {"mask_threshold", 0.4},
          {"rescore", true},
          {"stitch", "heuristic"},
          {"keep_fraction", 0.5},
          {"min_thing_score", 0.2},
          {"min_thing_area", 16},
          {"min_stuff_area", 64}}},
    };
}

namespace {

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        // Integers stay integers.
        return !(a.is_number_integer() && b.is_number_float() && b.get<double>() != std::floor(b.get<double>()));
    }
    return a.type() == b.type();
}

const char* kind_name(const json& j) {
    if (j.is_boolean()) return "boolean";
    if (j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    if (j.is_string()) return "string";
    if (j.is_array()) return "array";
    if (j.is_object()) return "object";
    return "null";
}

}  // namespace

void merge_config(json& dst, const json& src, const std::string& where) {
    if (!src.is_object()) throw ConfigError("configuration" + (where.empty() ? "" : " at '" + where + "'") + " must be an object");
    for (const auto& [key, value] : src.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!dst.contains(key)) throw ConfigError("unknown configuration key '" + path + "'");
        json& slot = dst[key];
        if (slot.is_object()) {
            merge_config(slot, value, path);
            continue;
        }
        if (!same_kind(slot, value)) {
            throw ConfigError("configuration key '" + path + "' expects " + kind_name(slot) + ", got " +
                              kind_name(value));
        }
        if (slot.is_number_integer()) {
            slot = static_cast<int64_t>(value.get<double>());
        } else {
            slot = value;
        }
    }
}

void apply_override(json& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' is not of the form key=value");
    }
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    // Build a nested object for the dotted path and merge it.
    json patch = value;
    size_t end = key.size();
    while (true) {
        const auto dot = key.rfind('.', end - 1);
        const std::string part = key.substr(dot == std::string::npos ? 0 : dot + 1,
                                            end - (dot == std::string::npos ? 0 : dot + 1));
        if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
        patch = json{{part, patch}};
        if (dot == std::string::npos) break;
        end = dot;
    }
    merge_config(tree, patch);
}

RunConfig config_from_json(const json& tree) {
    RunConfig c;
    c.effective = tree;
    try {
        c.seed = tree.at("seed").get<uint64_t>();
        c.train_dir = tree.at("data").at("train").get<std::string>();
        c.val_dir = tree.at("data").at("val").get<std::string>();

        const json& m = tree.at("model");
        c.model.backbone.stem_channels = m.at("stem_channels").get<int>();
        c.model.backbone.channels = m.at("channels").get<int>();
        c.model.backbone.num_stages = m.at("num_stages").get<int>();
        c.model.head_channels = m.at("head_channels").get<int>();
        c.model.head_depth = m.at("head_depth").get<int>();
        c.model.kernel_dim = m.at("kernel_dim").get<int>();
        c.model.kernel_coords = m.at("kernel_coords").get<bool>();
        c.model.encoder_coords = m.at("encoder_coords").get<bool>();
        c.model.encoder_mode = parse_encoder_mode(m.at("encoder_mode").get<std::string>());
        c.model.thing_prior = m.at("thing_prior").get<double>();
        for (int v : {c.model.backbone.stem_channels, c.model.backbone.channels, c.model.backbone.num_stages,
                      c.model.head_channels, c.model.head_depth, c.model.kernel_dim}) {
            if (v < 1) throw ConfigError("model sizes must be positive");
        }
        if (!(c.model.thing_prior > 0 && c.model.thing_prior < 1)) throw ConfigError("model.thing_prior must lie in (0, 1)");

        const json& g = tree.at("geometry");
        c.geometry.scale_bounds = g.at("scale_bounds").get<std::vector<double>>();
        const std::string center = g.at("center").get<std::string>();
        if (center == "mass") c.geometry.center = CenterType::Mass;
        else if (center == "box") c.geometry.center = CenterType::Box;
        else throw ConfigError("geometry.center must be mass or box, got '" + center + "'");
        c.geometry.strides.clear();
        for (int s = 0; s < c.model.backbone.num_stages; ++s) c.geometry.strides.push_back(c.model.backbone.stride(s));

        const json& t = tree.at("train");
        TrainConfig& tc = c.train;
        tc.seed = c.seed;
        tc.iterations = t.at("iterations").get<int>();
        tc.lr = t.at("lr").get<double>();
        tc.poly_power = t.at("poly_power").get<double>();
        tc.weight_decay = t.at("weight_decay").get<double>();
        tc.momentum = t.at("momentum").get<double>();
        tc.batch_size = t.at("batch_size").get<int>();
        tc.flip = t.at("flip").get<bool>();
        tc.warmup_iters = t.at("warmup_iters").get<int>();
        tc.warmup_factor = t.at("warmup_factor").get<double>();
        tc.clip_norm = t.at("clip_norm").get<double>();
        tc.eval_every = t.at("eval_every").get<int>();
        tc.objective.k = t.at("k").get<int>();
        tc.objective.lambda_pos = t.at("lambda_pos").get<double>();
        tc.objective.lambda_seg = t.at("lambda_seg").get<double>();
        const std::string norm = t.at("thing_norm").get<std::string>();
        if (norm == "categories") tc.objective.position.thing_norm = ThingNorm::Categories;
        else if (norm == "instances") tc.objective.position.thing_norm = ThingNorm::Instances;
        else throw ConfigError("train.thing_norm must be categories or instances, got '" + norm + "'");
        tc.objective.position.focal.alpha = t.at("focal_alpha").get<double>();
        tc.objective.position.focal.beta = t.at("focal_beta").get<double>();
        if (tc.iterations < 0) throw ConfigError("train.iterations must be non-negative");
        if (tc.batch_size < 1) throw ConfigError("train.batch_size must be positive");
        if (tc.objective.k < 1) throw ConfigError("train.k must be positive");
        if (tc.lr < 0 || tc.objective.lambda_pos < 0 || tc.objective.lambda_seg < 0) {
            throw ConfigError("learning rate and loss weights must be non-negative");
        }

        const json& s = tree.at("supervision");
        tc.supervision = parse_supervision_mode(s.at("mode").get<std::string>());
        c.points_file = s.at("points_file").get<std::string>();
        tc.points.n = s.at("n").get<int>();
        tc.points.boundary_ratio = s.at("boundary_ratio").get<double>();
        tc.points.shape = parse_shape_mode(s.at("shape").get<std::string>());
        tc.points.augment.enabled = s.at("augment").get<bool>();
        tc.points.augment.things = s.at("augment_things").get<bool>();
        tc.points.augment.iterations = s.at("dilate_iterations").get<int>();
        tc.points.seed = c.seed;
        if (tc.points.n < 1) throw ConfigError("supervision.n must be positive");
        if (tc.points.boundary_ratio < 0 || tc.points.boundary_ratio > 1) {
            throw ConfigError("supervision.boundary_ratio must lie in [0, 1]");
        }

        const json& in = tree.at("inference");
        InferenceConfig& ic = c.inference;
        ic.score_floor = in.at("score_floor").get<float>();
        ic.fusion.thres = in.at("fusion_threshold").get<double>();
        ic.fusion.class_aware = in.at("class_aware").get<bool>();
        ic.fusion.founder_mode = in.at("founder_mode").get<bool>();
        ic.max_things = in.at("max_things").get<int>();
        ic.mask_threshold = in.at("mask_threshold").get<float>();
        ic.rescore = in.at("rescore").get<bool>();
        ic.stitch = parse_stitch_mode(in.at("stitch").get<std::string>());
        ic.keep_fraction = in.at("keep_fraction").get<double>();
        ic.min_thing_score = in.at("min_thing_score").get<float>();
        ic.min_thing_area = in.at("min_thing_area").get<int>();
        ic.min_stuff_area = in.at("min_stuff_area").get<int>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          bool use_env) {
    json tree = default_config();
    if (file) {
        std::ifstream in(*file);
        if (!in) throw IoError("cannot open configuration file " + file->string());
        json user = json::parse(in, nullptr, false);
        if (user.is_discarded()) throw ConfigError("configuration file " + file->string() + " is not valid JSON");
        merge_config(tree, user);
    }
    for (const auto& o : overrides) apply_override(tree, o);
    if (use_env) {
        if (const char* env = std::getenv("PFCN_SEED"); env && *env) {
            char* end = nullptr;
            const unsigned long long v = std::strtoull(env, &end, 10);
            if (*end != '\0') throw ConfigError(std::string("PFCN_SEED is not an integer: ") + env);
            tree["seed"] = v;
        }
    }
    return config_from_json(tree);
}

void write_effective_config(const RunConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << cfg.effective.dump(2) << "\n";
}

}  // namespace pfcn

// Command-line front end: dataset generation, training, inference,
// evaluation, point simulation and curve plotting.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pfcn/config.hpp"
#include "pfcn/evaluation.hpp"
#include "pfcn/pipeline.hpp"
#include "pfcn/plot.hpp"
#include "pfcn/png_io.hpp"
#include "pfcn/point_supervision.hpp"
#include "pfcn/synth_data.hpp"

namespace fs = std::filesystem;
using namespace pfcn;

namespace {

struct ConfigArgs {
    std::string file;
    std::vector<std::string> overrides;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "JSON configuration file");
        app->add_option("--set", overrides, "Override a configuration key (a.b=value)");
    }
    RunConfig load(const std::optional<fs::path>& fallback = std::nullopt) const {
        std::optional<fs::path> path;
        if (!file.empty()) path = file;
        else if (fallback && fs::exists(*fallback)) path = *fallback;
        return load_run_config(path, overrides);
    }
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::unique_ptr<PanopticModel<float>> load_model(const RunConfig& cfg, const Taxonomy& tax, const fs::path& ckpt) {
    auto model = make_model(cfg, tax);
    load_checkpoint(model->params(), ckpt);
    return model;
}

int cmd_make_synth(const fs::path& out, int count, int first, uint64_t seed, int min_objects, int max_objects,
                   int size) {
    SceneSpec spec;
    spec.seed = seed;
    spec.min_objects = min_objects;
    spec.max_objects = max_objects;
    spec.image_size = size;
    if (count < 0 || min_objects < 0 || max_objects < min_objects || size < 16) {
        throw ConfigError("invalid scene parameters");
    }
    write_dataset(make_synthetic_dataset(spec, count, first), out);
    std::printf("wrote %d scenes to %s\n", count, out.string().c_str());
    return 0;
}

int cmd_train(const ConfigArgs& ca, const fs::path& out, int workers) {
    RunConfig cfg = ca.load();
    if (cfg.train_dir.empty()) throw ConfigError("data.train is not set");
    Dataset train = read_dataset(cfg.train_dir);
    std::optional<Dataset> val;
    if (!cfg.val_dir.empty()) val = read_dataset(cfg.val_dir);
    std::optional<PointAnnotationFile> points;
    std::vector<std::vector<PointAnnotation>> point_lists;
    TrainingOptions opts;
    opts.workers = workers;
    if (cfg.train.supervision == SupervisionMode::Points && !cfg.points_file.empty()) {
        points = read_point_annotations(cfg.points_file);
        if (points->names != train.names) throw ValidationError("point annotation file does not match the training set");
        point_lists = points->images;
        opts.points = &point_lists;
    }
    const int every = std::max(1, cfg.train.iterations / 20);
    opts.progress = [every](const StepLoss& l) {
        if (l.iteration % every == 0) {
            std::printf("iter %5d  L %.4f  pos_th %.4f  pos_st %.4f  seg %.4f  lr %.5f\n", l.iteration, l.total,
                        l.pos_thing, l.pos_stuff, l.seg, l.lr);
            std::fflush(stdout);
        }
    };
    TrainingRun run = train_and_evaluate(cfg, train, val ? &*val : nullptr, out, opts);
    if (run.report) std::printf("%s", format_table(*run.report, val->taxonomy).c_str());
    std::printf("checkpoint written to %s\n", (out / "checkpoint.bin").string().c_str());
    return 0;
}

int cmd_evaluate(const ConfigArgs& ca, const fs::path& gt_dir, const std::string& pred_dir, const std::string& ckpt,
                 const std::string& out_json, const std::string& stitch, int workers) {
    Dataset gt = read_dataset(gt_dir);
    MetricReport report;
    if (!pred_dir.empty()) {
        std::vector<std::string> names;
        auto preds = read_predictions(pred_dir, &names);
        if (names != gt.names) throw ValidationError("prediction image names do not match the ground truth");
        report = evaluate_predictions(preds, gt);
    } else if (!ckpt.empty()) {
        RunConfig cfg = ca.load(fs::path(ckpt).parent_path() / "config.json");
        if (!stitch.empty()) cfg.inference.stitch = parse_stitch_mode(stitch);
        auto model = load_model(cfg, gt.taxonomy, ckpt);
        report = evaluate_model(*model, gt, cfg.inference, workers);
    } else {
        throw ConfigError("evaluate needs --pred or --checkpoint");
    }
    std::printf("%s", format_table(report, gt.taxonomy).c_str());
    std::printf("PQ %.1f\n", report.all.pq);
    if (!out_json.empty()) {
        std::ofstream out(out_json);
        out << report_to_json(report, gt.taxonomy) << "\n";
        if (!out) throw IoError("cannot write " + out_json);
    }
    return 0;
}

int cmd_infer(const ConfigArgs& ca, const fs::path& data_dir, const fs::path& ckpt, const fs::path& out, bool vis,
              int workers) {
    RunConfig cfg = ca.load(ckpt.parent_path() / "config.json");
    Dataset data = read_dataset(data_dir);
    auto model = load_model(cfg, data.taxonomy, ckpt);
    auto results = infer_dataset(*model, data, cfg.inference, workers);
    std::vector<PanopticSegmentation> preds;
    for (auto& r : results) preds.push_back(r.panoptic);
    write_predictions(data.taxonomy, data.names, preds, out);
    if (vis) {
        for (size_t i = 0; i < preds.size(); ++i) {
            write_rgb_png(out / (data.names[i] + "_vis.png"), colorize(preds[i], data.taxonomy));
        }
    }
    std::printf("wrote %zu predictions to %s\n", preds.size(), out.string().c_str());
    return 0;
}

int cmd_simulate_points(const fs::path& data_dir, const fs::path& out, int n, double ratio, const std::string& shape,
                        bool augment, uint64_t seed, const std::string& targets_dir) {
    Dataset data = read_dataset(data_dir);
    PointSupervisionConfig pc;
    pc.n = n;
    pc.boundary_ratio = ratio;
    pc.shape = parse_shape_mode(shape);
    pc.augment.enabled = augment;
    pc.seed = seed;
    if (n < 1) throw ConfigError("--n must be positive");
    if (ratio < 0 || ratio > 1) throw ConfigError("--boundary-ratio must lie in [0, 1]");
    PointAnnotationFile file;
    file.n = n;
    file.boundary_ratio = ratio;
    file.seed = seed;
    file.names = data.names;
    file.images = simulate_dataset_points(data, pc);
    write_point_annotations(out, file);
    int64_t instances = 0, points = 0;
    for (const auto& img : file.images) {
        instances += static_cast<int64_t>(img.size());
        for (const auto& a : img) points += static_cast<int64_t>(a.points.size());
    }
    if (!targets_dir.empty()) {
        fs::create_directories(targets_dir);
        for (size_t i = 0; i < data.size(); ++i) {
            const auto& sc = data.scenes[i];
            PointTargetResult r = build_training_targets(file.images[i], sc.image.h, sc.image.w, pc.shape, pc.augment,
                                                         data.taxonomy);
            PanopticSegmentation seg;
            seg.id_map = IdMap(sc.image.h, sc.image.w, 0);
            for (size_t p = 0; p < r.targets.labels.data.size(); ++p) {
                const int j = r.targets.labels.data[p];
                if (j >= 0) seg.id_map.data[p] = file.images[i][j].instance_id;
            }
            for (const auto& a : file.images[i]) seg.segments.push_back({a.instance_id, a.category, a.kind, 1.0, 0});
            write_rgb_png(fs::path(targets_dir) / (data.names[i] + "_targets.png"), colorize(seg, data.taxonomy));
        }
    }
    std::printf("wrote %lld points for %lld instances (%.1f s annotation time at %.1f s/instance)\n",
                static_cast<long long>(points), static_cast<long long>(instances), 0.9 * static_cast<double>(points),
                annotation_cost_seconds(n));
    return 0;
}

int cmd_plot(const std::vector<std::string>& metrics, const std::vector<double>& xs, const std::string& x_label,
             const fs::path& out) {
    if (metrics.empty()) throw ConfigError("plot needs at least one metrics file");
    if (metrics.size() != xs.size()) {
        throw ConfigError("plot needs one --x value per metrics file (" + std::to_string(metrics.size()) + " files, " +
                          std::to_string(xs.size()) + " values)");
    }
    std::vector<CurvePoint> pts;
    for (size_t i = 0; i < metrics.size(); ++i) {
        MetricReport r = report_from_json(read_text(metrics[i]));
        pts.push_back({xs[i], r.all.pq, r.things.pq, r.stuff.pq});
    }
    write_pq_curve(pts, x_label, out);
    std::printf("wrote %s.png and %s.csv\n", out.string().c_str(), out.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Panoptic segmentation with generated kernels on synthetic scenes"};
    app.require_subcommand(1);
    int workers = 1;
    app.add_option("--workers", workers, "Threads for per-image work")->check(CLI::PositiveNumber);

    auto* synth = app.add_subcommand("make-synth", "Generate a synthetic panoptic dataset");
    std::string synth_out;
    int synth_count = 200, synth_first = 0, min_obj = 1, max_obj = 6, size = 128;
    uint64_t synth_seed = 0;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--count", synth_count, "Number of scenes");
    synth->add_option("--first-index", synth_first, "Index of the first scene");
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--min-objects", min_obj, "Minimum things per scene");
    synth->add_option("--max-objects", max_obj, "Maximum things per scene");
    synth->add_option("--size", size, "Image side length");

    auto* train = app.add_subcommand("train", "Train a model");
    ConfigArgs train_cfg;
    std::string train_out;
    train_cfg.attach(train);
    train->add_option("--out", train_out, "Run directory")->required();

    auto* eval = app.add_subcommand("evaluate", "Compute PQ/SQ/RQ and mIoU");
    ConfigArgs eval_cfg;
    std::string eval_gt, eval_pred, eval_ckpt, eval_json, eval_stitch;
    eval_cfg.attach(eval);
    eval->add_option("--gt", eval_gt, "Ground-truth dataset directory")->required();
    eval->add_option("--pred", eval_pred, "Prediction directory");
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint to run inference with");
    eval->add_option("--json", eval_json, "Write the report as JSON");
    eval->add_option("--stitch", eval_stitch, "heuristic or argmax");

    auto* infer = app.add_subcommand("infer", "Write panoptic predictions");
    ConfigArgs infer_cfg;
    std::string infer_data, infer_ckpt, infer_out;
    bool infer_vis = false;
    infer_cfg.attach(infer);
    infer->add_option("--data", infer_data, "Dataset directory")->required();
    infer->add_option("--checkpoint", infer_ckpt, "Checkpoint")->required();
    infer->add_option("--out", infer_out, "Output directory")->required();
    infer->add_flag("--vis", infer_vis, "Also write colour visualisations");

    auto* sim = app.add_subcommand("simulate-points", "Convert full masks to point annotations");
    std::string sim_data, sim_out, sim_shape = "concave", sim_targets;
    int sim_n = 10;
    double sim_ratio = 0.0;
    bool sim_augment = false;
    uint64_t sim_seed = 0;
    sim->add_option("--data", sim_data, "Dataset directory")->required();
    sim->add_option("--out", sim_out, "Output JSON file")->required();
    sim->add_option("--n", sim_n, "Points per instance");
    sim->add_option("--boundary-ratio", sim_ratio, "Share of points on the instance boundary");
    sim->add_option("--shape", sim_shape, "Target shape: convex or concave");
    sim->add_flag("--augment", sim_augment, "Dilate stuff targets");
    sim->add_option("--seed", sim_seed, "Sampling seed");
    sim->add_option("--targets-dir", sim_targets, "Write target visualisations here");

    auto* plot = app.add_subcommand("plot", "Plot PQ curves from metric files");
    std::vector<std::string> plot_metrics;
    std::vector<double> plot_x;
    std::string plot_label = "N", plot_out;
    plot->add_option("--metrics", plot_metrics, "Metric JSON files")->required();
    plot->add_option("--x", plot_x, "x value for each metrics file")->required();
    plot->add_option("--x-label", plot_label, "x axis label");
    plot->add_option("--out", plot_out, "Output prefix (writes .png and .csv)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*synth) return cmd_make_synth(synth_out, synth_count, synth_first, synth_seed, min_obj, max_obj, size);
        if (*train) return cmd_train(train_cfg, train_out, workers);
        if (*eval) return cmd_evaluate(eval_cfg, eval_gt, eval_pred, eval_ckpt, eval_json, eval_stitch, workers);
        if (*infer) return cmd_infer(infer_cfg, infer_data, infer_ckpt, infer_out, infer_vis, workers);
        if (*sim) return cmd_simulate_points(sim_data, sim_out, sim_n, sim_ratio, sim_shape, sim_augment, sim_seed, sim_targets);
        if (*plot) return cmd_plot(plot_metrics, plot_x, plot_label, plot_out);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}

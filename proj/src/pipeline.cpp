#include "pfcn/pipeline.hpp"

#include <fstream>
#include <thread>

namespace pfcn {

std::unique_ptr<PanopticModel<float>> make_model(const RunConfig& cfg, const Taxonomy& taxonomy) {
    ModelConfig mc = cfg.model;
    mc.num_things = taxonomy.num_things();
    mc.num_stuff = taxonomy.num_stuff();
    auto model = std::make_unique<PanopticModel<float>>(mc);
    model->init(cfg.seed);
    return model;
}

StageGeometry make_geometry(const RunConfig& cfg, const Taxonomy& taxonomy, int image_h, int image_w) {
    StageGeometry g = cfg.geometry;
    g.image_h = image_h;
    g.image_w = image_w;
    g.num_things = taxonomy.num_things();
    g.num_stuff = taxonomy.num_stuff();
    return g;
}

std::vector<InferenceResult> infer_dataset(const PanopticModel<float>& model, const Dataset& data,
                                           const InferenceConfig& cfg, int workers) {
    std::vector<InferenceResult> out(data.size());
    auto work = [&](size_t begin, size_t step) {
        for (size_t i = begin; i < data.size(); i += step) {
            out[i] = run_inference(model, image_to_tensor<float>(data.scenes[i].image), data.taxonomy, cfg);
        }
    };
    const size_t n = static_cast<size_t>(std::max(1, workers));
    if (n == 1) {
        work(0, 1);
        return out;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(n);
    for (size_t t = 0; t < n; ++t) {
        threads.emplace_back([&, t] {
            try {
                work(t, n);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : threads) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

MetricReport evaluate_predictions(const std::vector<PanopticSegmentation>& preds, const Dataset& data) {
    if (preds.size() != data.size()) {
        throw ValidationError("got " + std::to_string(preds.size()) + " predictions for " +
                              std::to_string(data.size()) + " images");
    }
    PqAccumulator acc(data.taxonomy);
    for (size_t i = 0; i < preds.size(); ++i) acc.add(preds[i], data.scenes[i].gt);
    return acc.report();
}

MetricReport evaluate_model(const PanopticModel<float>& model, const Dataset& data, const InferenceConfig& cfg,
                            int workers) {
    auto results = infer_dataset(model, data, cfg, workers);
    std::vector<PanopticSegmentation> preds;
    preds.reserve(results.size());
    for (auto& r : results) preds.push_back(std::move(r.panoptic));
    return evaluate_predictions(preds, data);
}

TrainingRun train_and_evaluate(const RunConfig& cfg, const Dataset& train, const Dataset* val,
                               const std::optional<std::filesystem::path>& out_dir, const TrainingOptions& opts) {
    if (train.size() == 0) throw InputError("training set is empty");
    TrainingRun run;
    run.model = make_model(cfg, train.taxonomy);
    const StageGeometry geom =
        make_geometry(cfg, train.taxonomy, train.scenes.front().image.h, train.scenes.front().image.w);
    std::vector<TrainSample> samples = prepare_samples(train, cfg.train, geom, opts.points);

    std::ofstream log;
    std::ofstream eval_log;
    TrainHooks hooks;
    hooks.progress = opts.progress;
    if (out_dir) {
        std::filesystem::create_directories(*out_dir);
        write_effective_config(cfg, *out_dir / "config.json");
        log.open(*out_dir / "loss_log.jsonl");
        if (!log) throw IoError("cannot write " + (*out_dir / "loss_log.jsonl").string());
        hooks.loss_log = &log;
        hooks.dump_dir = *out_dir;
        if (val) {
            eval_log.open(*out_dir / "eval_log.jsonl");
            hooks.evaluate = [&](int it, const PanopticModel<float>& m) {
                MetricReport r = evaluate_model(m, *val, cfg.inference, opts.workers);
                nlohmann::json j{{"iteration", it}, {"PQ", r.all.pq}, {"PQ_th", r.things.pq}, {"PQ_st", r.stuff.pq}};
                eval_log << j.dump() << "\n" << std::flush;
            };
        }
    }
    run.losses = run_training(*run.model, samples, cfg.train, hooks);
    if (out_dir) save_checkpoint(run.model->params(), *out_dir / "checkpoint.bin");
    if (val) {
        run.report = evaluate_model(*run.model, *val, cfg.inference, opts.workers);
        if (out_dir) {
            std::ofstream m(*out_dir / "metrics.json");
            m << report_to_json(*run.report, val->taxonomy) << "\n";
            if (!m) throw IoError("cannot write " + (*out_dir / "metrics.json").string());
        }
    }
    return run;
}

}  // namespace pfcn

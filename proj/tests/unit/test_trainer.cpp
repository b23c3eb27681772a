#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "pfcn/error.hpp"
#include "pfcn/synth_data.hpp"
#include "pfcn/trainer.hpp"

using namespace pfcn;

namespace {

ModelConfig tiny_model() {
    ModelConfig mc;
    mc.backbone.stem_channels = 8;
    mc.backbone.channels = 16;
    mc.head_channels = 16;
    mc.kernel_dim = 8;
    return mc;
}

struct Fixture {
    Dataset data;
    StageGeometry geom;
    TrainConfig cfg;
    std::vector<TrainSample> samples;

    explicit Fixture(int images = 4) {
        SceneSpec spec;
        spec.image_size = 64;
        spec.min_radius = 6;
        spec.max_radius = 12;
        data = make_synthetic_dataset(spec, images);
        geom.image_h = geom.image_w = 64;
        geom.scale_bounds = {16.0, 32.0};
        cfg.batch_size = 2;
        cfg.iterations = 10;
        samples = prepare_samples(data, cfg, geom);
    }
};

std::vector<float> flat(const PanopticModel<float>& m) {
    std::vector<float> out;
    for (const auto& p : m.params().all()) out.insert(out.end(), p->value.begin(), p->value.end());
    return out;
}

}  // namespace

TEST_CASE("poly schedule") {
    CHECK(poly_lr(0.01, 0, 100, 0.9) == doctest::Approx(0.01));
    CHECK(poly_lr(0.01, 50, 100, 0.9) == doctest::Approx(0.005359).epsilon(1e-4));
    CHECK(poly_lr(0.01, 100, 100, 0.9) == 0.0);
    TrainConfig cfg;
    cfg.iterations = 100;
    cfg.warmup_iters = 10;
    CHECK(scheduled_lr(cfg, 0) == doctest::Approx(0.01 * 0.001));
    CHECK(scheduled_lr(cfg, 10) == doctest::Approx(poly_lr(0.01, 10, 100, 0.9)));
    CHECK(scheduled_lr(cfg, 5) < scheduled_lr(cfg, 10));
    for (int t = 11; t < 100; ++t) CHECK(scheduled_lr(cfg, t) < scheduled_lr(cfg, t - 1));
}

TEST_CASE("samples carry targets for the image and its mirror") {
    Fixture f;
    REQUIRE(f.samples.size() == 4);
    for (const auto& s : f.samples) {
        CHECK(s.image.c == 3);
        CHECK(s.image.h == 64);
        CHECK(s.flipped_image.w == 64);
        CHECK(s.image.at(0, 5, 0) == s.flipped_image.at(0, 5, 63));
    }
    TrainConfig pts = f.cfg;
    pts.supervision = SupervisionMode::Points;
    auto ann = simulate_dataset_points(f.data, pts.points);
    REQUIRE(ann.size() == 4);
    auto again = simulate_dataset_points(f.data, pts.points);
    for (size_t i = 0; i < ann.size(); ++i)
        for (size_t j = 0; j < ann[i].size(); ++j) CHECK(ann[i][j].points == again[i][j].points);
    CHECK(prepare_samples(f.data, pts, f.geom, &ann).size() == 4);
}

TEST_CASE("zero learning rate leaves the model and loss unchanged") {
    Fixture f;
    PanopticModel<float> model(tiny_model());
    model.init(1);
    const auto before = flat(model);
    TrainConfig cfg = f.cfg;
    cfg.lr = 0;
    Trainer tr(model, cfg);
    std::vector<const TrainSample*> batch{&f.samples[0], &f.samples[1]};
    auto a = tr.step(batch, {false, false}, 0);
    auto b = tr.step(batch, {false, false}, 1);
    CHECK(a.total == b.total);
    CHECK(flat(model) == before);
    CHECK(std::isfinite(a.total));
    CHECK(a.total == doctest::Approx(a.pos_thing + a.pos_stuff + 3 * a.seg).epsilon(1e-6));
}

TEST_CASE("fifty steps on a tiny batch reduce the loss") {
    Fixture f(2);
    PanopticModel<float> model(tiny_model());
    model.init(2);
    TrainConfig cfg = f.cfg;
    cfg.iterations = 50;
    cfg.warmup_iters = 5;
    Trainer tr(model, cfg);
    std::vector<const TrainSample*> batch{&f.samples[0], &f.samples[1]};
    double first = 0, last = 0;
    for (int t = 0; t < 50; ++t) {
        auto l = tr.step(batch, {false, false}, t);
        if (t == 0) first = l.total;
        last = l.total;
    }
    CHECK(last < 0.7 * first);
}

TEST_CASE("training is deterministic and zero iterations keeps the initialisation") {
    Fixture f;
    TrainConfig cfg = f.cfg;
    cfg.iterations = 4;
    cfg.seed = 7;
    PanopticModel<float> a(tiny_model()), b(tiny_model());
    a.init(cfg.seed);
    b.init(cfg.seed);
    std::ostringstream la, lb;
    TrainHooks ha, hb;
    ha.loss_log = &la;
    hb.loss_log = &lb;
    auto ra = run_training(a, f.samples, cfg, ha);
    auto rb = run_training(b, f.samples, cfg, hb);
    REQUIRE(ra.size() == 4);
    for (size_t i = 0; i < ra.size(); ++i) CHECK(ra[i].total == rb[i].total);
    CHECK(flat(a) == flat(b));
    CHECK(la.str() == lb.str());
    CHECK(la.str().find("\"iteration\"") != std::string::npos);

    PanopticModel<float> c(tiny_model());
    c.init(3);
    const auto init = flat(c);
    cfg.iterations = 0;
    CHECK(run_training(c, f.samples, cfg).empty());
    CHECK(flat(c) == init);
}

TEST_CASE("non-finite values abort training") {
    Fixture f(1);
    auto dir = std::filesystem::temp_directory_path() / "pfcn_trainer_dump";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    {
        // A NaN logit bias poisons the loss itself: a diagnostics file is written.
        PanopticModel<float> model(tiny_model());
        model.init(4);
        model.params().get("position_head.final.bias").value[0] = std::numeric_limits<float>::quiet_NaN();
        Trainer tr(model, f.cfg);
        tr.set_dump_dir(dir);
        CHECK_THROWS_AS(tr.step({&f.samples[0]}, {false}, 0), TrainingError);
        CHECK(std::filesystem::exists(dir / "nonfinite_dump.json"));
    }
    {
        // A NaN stem weight is flushed to zero by the rectifiers in the
        // forward pass but still reaches its own gradient.
        PanopticModel<float> model(tiny_model());
        model.init(4);
        model.params().get("backbone.stem.0.conv.weight").value[0] = std::numeric_limits<float>::quiet_NaN();
        Trainer tr(model, f.cfg);
        tr.set_dump_dir(dir);
        try {
            tr.step({&f.samples[0]}, {false}, 0);
            FAIL("expected a TrainingError");
        } catch (const TrainingError& e) {
            CHECK(std::string(e.what()).find("backbone.stem.0.conv.weight") != std::string::npos);
        }
    }
    std::filesystem::remove_all(dir);
}

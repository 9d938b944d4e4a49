#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <memory>
#include <random>
#include <set>

#include "nvtk/hierarchy.hpp"

using namespace nvtk;
using namespace nvtk::hierarchy;

namespace {

// distinct linear one-step regimes: x' = x + s*v, v' = R(angle)*v, which
// traces bounded circular orbits and is exactly linear
Eigen::Matrix4d regime_matrix(int which) {
    const double angle = which == 1 ? -0.175 : 0.035;
    const double step = which == 2 ? 4.0 : 1.0;
    Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
    A(0, 2) = step;
    A(1, 3) = step;
    A(2, 2) = std::cos(angle);
    A(2, 3) = -std::sin(angle);
    A(3, 2) = std::sin(angle);
    A(3, 3) = std::cos(angle);
    return A;
}

std::vector<Sample> regime_samples(int which, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1e-3);
    const Eigen::Matrix4d A = regime_matrix(which);
    std::vector<Sample> out;
    Eigen::Vector4d x(double(which) * 3.0, 0.0, 0.5, 0.3);
    for (std::size_t i = 0; i < n; ++i) {
        Eigen::Vector4d next = A * x;
        next += Eigen::Vector4d(noise(rng), noise(rng), noise(rng), noise(rng));
        out.push_back({x, next});
        x = next;
    }
    return out;
}

PredictorFactory ridge_factory() {
    return [] { return std::make_unique<RidgePredictor>(); };
}

} // namespace

TEST_CASE("two regimes with a threshold between them spawn exactly one extra level") {
    auto corpus = regime_samples(0, 300, 1);
    const auto b = regime_samples(1, 300, 2);
    corpus.insert(corpus.end(), b.begin(), b.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 300; ++i) v0.push_back(i);

    HierarchyConfig cfg;
    cfg.theta = 0.05; // noise-level innovations sit far below, regime-B far above
    cfg.max_levels = 6;
    const auto model = build(corpus, v0, ridge_factory(), cfg);
    CHECK(model.levels.size() == 2);

    // the second level recovers regime B: it predicts B samples well
    const auto& l1 = *model.levels[1].predictor;
    std::size_t good = 0;
    for (const auto& s : b) good += l1.innovate(s, l1.predict(s)) < 0.05;
    CHECK(double(good) / double(b.size()) >= 0.9);

    // post-build the whole corpus is explained under the level-selecting rule
    double mean_innov = 0.0;
    for (const auto& s : corpus) mean_innov += hierarchy_innovation(model, s);
    mean_innov /= double(corpus.size());
    CHECK(mean_innov < cfg.theta);
}

TEST_CASE("a threshold above every cluster mean keeps a single level") {
    auto corpus = regime_samples(0, 300, 3);
    const auto b = regime_samples(1, 300, 4);
    corpus.insert(corpus.end(), b.begin(), b.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 300; ++i) v0.push_back(i);

    HierarchyConfig cfg;
    cfg.theta = 1e9;
    const auto model = build(corpus, v0, ridge_factory(), cfg);
    CHECK(model.levels.size() == 1);
}

TEST_CASE("raising theta never adds levels") {
    auto corpus = regime_samples(0, 250, 5);
    const auto b = regime_samples(1, 250, 6);
    const auto c = regime_samples(2, 250, 7);
    corpus.insert(corpus.end(), b.begin(), b.end());
    corpus.insert(corpus.end(), c.begin(), c.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 250; ++i) v0.push_back(i);

    std::size_t prev_levels = 100;
    for (double theta : {0.02, 0.2, 2.0, 1e9}) {
        HierarchyConfig cfg;
        cfg.theta = theta;
        cfg.max_levels = 8;
        const auto model = build(corpus, v0, ridge_factory(), cfg);
        CHECK(model.levels.size() <= prev_levels);
        prev_levels = model.levels.size();
    }
}

TEST_CASE("training samples from the seed subset evaluate as normal") {
    auto corpus = regime_samples(0, 400, 8);
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 400; ++i) v0.push_back(i);
    HierarchyConfig cfg;
    const auto model = build(corpus, v0, ridge_factory(), cfg);

    std::size_t normal = 0;
    for (const auto& s : corpus) {
        const auto ev = evaluate(model, s);
        normal += !ev.abnormal;
    }
    CHECK(double(normal) / double(corpus.size()) >= 0.98);
}

TEST_CASE("zero innovation at any level forces a normal decision") {
    auto corpus = regime_samples(0, 300, 9);
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 300; ++i) v0.push_back(i);
    HierarchyConfig cfg;
    cfg.y_threshold = 0.0; // everything with positive innovation would trip the gate
    const auto model = build(corpus, v0, ridge_factory(), cfg);

    // craft a sample the level-0 predictor reproduces exactly, far from support
    const auto& ridge = dynamic_cast<const RidgePredictor&>(*model.levels[0].predictor);
    Sample s;
    s.state = Eigen::Vector4d(400.0, -400.0, 3.0, -2.0);
    Eigen::Matrix<double, 5, 1> phi;
    phi << s.state(0), s.state(1), s.state(2), s.state(3), 1.0;
    s.next = ridge.weights() * phi;

    const auto ev = evaluate(model, s);
    CHECK(ev.level_innovations[0] <= 1e-12);
    CHECK(!ev.abnormal);
    CHECK(ev.claimed_level == 0);
}

TEST_CASE("a held-out regime is flagged abnormal") {
    auto corpus = regime_samples(0, 300, 10);
    const auto b = regime_samples(1, 300, 11);
    corpus.insert(corpus.end(), b.begin(), b.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 300; ++i) v0.push_back(i);

    HierarchyConfig cfg;
    cfg.theta = 0.05;
    const auto model = build(corpus, v0, ridge_factory(), cfg);

    const auto held_out = regime_samples(2, 300, 12);
    std::size_t abnormal = 0;
    for (const auto& s : held_out) abnormal += evaluate(model, s).abnormal;
    CHECK(double(abnormal) / double(held_out.size()) >= 0.9);
}

TEST_CASE("manifest round trip preserves decisions") {
    namespace fs = std::filesystem;
    auto corpus = regime_samples(0, 200, 13);
    const auto b = regime_samples(1, 200, 14);
    corpus.insert(corpus.end(), b.begin(), b.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 200; ++i) v0.push_back(i);
    HierarchyConfig cfg;
    cfg.theta = 0.05;
    const auto model = build(corpus, v0, ridge_factory(), cfg);

    const auto dir = fs::temp_directory_path() / "nvtk_hier_test";
    fs::create_directories(dir);
    const auto manifest = (dir / "hier.json").string();
    save(model, manifest);
    const auto back = load(manifest);
    REQUIRE(back.levels.size() == model.levels.size());
    CHECK(back.theta == model.theta);
    CHECK(back.y_threshold == model.y_threshold);

    const auto probes = regime_samples(2, 50, 15);
    for (const auto& s : probes) {
        const auto e1 = evaluate(model, s);
        const auto e2 = evaluate(back, s);
        CHECK(e1.abnormal == e2.abnormal);
        CHECK(e1.y == doctest::Approx(e2.y));
    }
    fs::remove_all(dir);
}

namespace {

// ridge predictor that keeps a copy of whatever it was trained on
struct RecordingPredictor final : Predictor {
    std::shared_ptr<std::vector<std::vector<Sample>>> log;
    RidgePredictor inner;
    explicit RecordingPredictor(std::shared_ptr<std::vector<std::vector<Sample>>> l) : log(std::move(l)) {}
    void train(std::span<const Sample> subset) override {
        log->emplace_back(subset.begin(), subset.end());
        inner.train(subset);
    }
    Eigen::Vector4d predict(const Sample& sample) const override { return inner.predict(sample); }
    double innovate(const Sample& sample, const Eigen::Vector4d& prediction) const override {
        return inner.innovate(sample, prediction);
    }
    std::string kind() const override { return inner.kind(); }
};

} // namespace

TEST_CASE("levels train on pairwise-disjoint subsets") {
    auto corpus = regime_samples(0, 200, 21);
    const auto b = regime_samples(1, 200, 22);
    const auto c = regime_samples(2, 200, 23);
    corpus.insert(corpus.end(), b.begin(), b.end());
    corpus.insert(corpus.end(), c.begin(), c.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 200; ++i) v0.push_back(i);

    auto log = std::make_shared<std::vector<std::vector<Sample>>>();
    HierarchyConfig cfg;
    cfg.theta = 0.05;
    cfg.max_levels = 8;
    const auto model = build(corpus, v0, [log] { return std::make_unique<RecordingPredictor>(log); }, cfg);
    REQUIRE(log->size() == model.levels.size());
    REQUIRE(log->size() >= 2);

    // samples are continuous orbits with noise, so exact state equality
    // identifies a sample uniquely
    auto key = [](const Sample& s) {
        return std::make_pair(std::make_pair(s.state(0), s.state(1)), std::make_pair(s.state(2), s.state(3)));
    };
    std::set<decltype(key(corpus[0]))> seen;
    for (const auto& subset : *log) {
        for (const auto& sample : subset) {
            CHECK(seen.insert(key(sample)).second); // never trained twice
        }
    }
}

TEST_CASE("merged spawns train one level on every qualifying cluster") {
    auto corpus = regime_samples(0, 200, 31);
    const auto b = regime_samples(1, 200, 32);
    const auto c = regime_samples(2, 200, 33);
    corpus.insert(corpus.end(), b.begin(), b.end());
    corpus.insert(corpus.end(), c.begin(), c.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 200; ++i) v0.push_back(i);

    auto log = std::make_shared<std::vector<std::vector<Sample>>>();
    HierarchyConfig cfg;
    cfg.theta = 0.05;
    cfg.max_levels = 8;
    cfg.merge_spawns = true;
    const auto model = build(corpus, v0, [log] { return std::make_unique<RecordingPredictor>(log); }, cfg);
    REQUIRE(model.levels.size() >= 2);
    CHECK(model.levels.size() <= 8);

    // the first spawned level must mix the slow-turn and fast regimes, which
    // separate cleanly by per-step displacement
    const auto& spawned = (*log)[1];
    bool has_slow = false, has_fast = false;
    for (const auto& s : spawned) {
        const double step = (s.next.head<2>() - s.state.head<2>()).norm();
        has_slow = has_slow || step < 1.0;
        has_fast = has_fast || step > 1.5;
    }
    CHECK(has_slow);
    CHECK(has_fast);
}

TEST_CASE("a zero threshold still terminates at the level cap") {
    auto corpus = regime_samples(0, 150, 24);
    const auto b = regime_samples(1, 150, 25);
    corpus.insert(corpus.end(), b.begin(), b.end());
    std::vector<std::size_t> v0;
    for (std::size_t i = 0; i < 150; ++i) v0.push_back(i);
    HierarchyConfig cfg;
    cfg.theta = 0.0; // every cluster qualifies
    cfg.max_levels = 4;
    const auto model = build(corpus, v0, ridge_factory(), cfg);
    CHECK(model.levels.size() <= 4);
    CHECK(model.levels.size() >= 2);
}

TEST_CASE("build validates its inputs") {
    const auto corpus = regime_samples(0, 50, 16);
    HierarchyConfig cfg;
    CHECK_THROWS_AS(build({}, {0}, ridge_factory(), cfg), ValidationError);
    CHECK_THROWS_AS(build(corpus, {}, ridge_factory(), cfg), ValidationError);
    CHECK_THROWS_AS(build(corpus, {999}, ridge_factory(), cfg), ValidationError);
}

TEST_CASE("consecutive states become one-step samples") {
    std::vector<Eigen::Vector4d> states{Eigen::Vector4d(0, 0, 1, 0), Eigen::Vector4d(1, 0, 1, 0),
                                        Eigen::Vector4d(2, 0, 1, 0)};
    const auto samples = samples_from_states(states);
    REQUIRE(samples.size() == 2);
    CHECK(samples[0].state == states[0]);
    CHECK(samples[0].next == states[1]);
    CHECK(samples[1].next == states[2]);
}

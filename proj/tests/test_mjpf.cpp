#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "nvtk/mjpf.hpp"

using namespace nvtk;
using namespace nvtk::mjpf;

namespace {

// one superstate with a huge validity radius and guaranteed self-transition
swdbn::SharedLevelModel single_state_model(const Eigen::Vector2d& control, double q, double r) {
    swdbn::SharedLevelModel model;
    model.model = swdbn::LinearModel::make(1.0, q, r);
    model.weights = swdbn::SomWeights{};

    swdbn::Superstate s;
    s.id = 0;
    s.xi = swdbn::State(0.0, 0.0, control(0), control(1));
    s.covariance = 0.01 * Eigen::Matrix4d::Identity();
    s.control = control;
    s.psi = 1e9;
    model.vocabulary.push_back(s);

    model.transitions.n_states = 1;
    model.transitions.dwell_bin_upper = {};
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(2, 2);
    P(0, 0) = 1.0;
    P(1, 0) = 1.0; // dummy re-acquires the only state
    model.transitions.matrices = {P};
    return model;
}

} // namespace

TEST_CASE("the controlled prediction applies the expected matrices") {
    const auto m = swdbn::LinearModel::make(1.0, 1e-4, 1e-4);
    const swdbn::State x(5.0, 5.0, 9.0, 9.0);
    const Eigen::Vector2d u(2.0, -1.0);
    const swdbn::State pred = m.A * x + m.B * u;
    CHECK(pred(0) == 7.0);
    CHECK(pred(1) == 4.0);
    CHECK(pred(2) == 2.0);
    CHECK(pred(3) == -1.0);
}

TEST_CASE("an exactly predicted observation has zero abnormality") {
    auto model = single_state_model({1.0, 0.0}, 1e-4, 1e-4);
    MjpfConfig cfg;
    cfg.n_particles = 8;
    cfg.resample_threshold = 0.0;
    Mjpf filter(model, cfg);
    // particles start at xi = (0,0,1,0); prediction puts the position at (1,0)
    const auto step = filter.step(Eigen::Vector2d(1.0, 0.0));
    CHECK(step.abnormality == 0.0);
    for (double v : step.particle_innovations) CHECK(v == 0.0);
    CHECK(step.map_superstate == 0);
}

TEST_CASE("a single-superstate filter reduces to one kalman filter") {
    const Eigen::Vector2d u(0.05, -0.02);
    auto model = single_state_model(u, 1e-4, 1e-4);
    MjpfConfig cfg;
    cfg.n_particles = 50;
    cfg.resample_threshold = 0.0; // disabled
    cfg.seed = 3;
    Mjpf filter(model, cfg);

    // reference filter with the same initialization
    swdbn::State mean = model.vocabulary[0].xi;
    Eigen::Matrix4d cov = model.vocabulary[0].covariance + 1e-6 * Eigen::Matrix4d::Identity();
    const auto& lm = model.model;

    std::mt19937_64 rng(11);
    std::normal_distribution<double> noise(0.0, 0.01);
    Eigen::Vector2d pos(0.0, 0.0);
    for (int k = 0; k < 500; ++k) {
        pos += u;
        const Eigen::Vector2d z = pos + Eigen::Vector2d(noise(rng), noise(rng));
        filter.step(z);

        const swdbn::State x_pred = lm.A * mean + lm.B * u;
        const Eigen::Matrix4d P_pred = lm.A * cov * lm.A.transpose() + lm.Q;
        const Eigen::Matrix2d S = lm.H * P_pred * lm.H.transpose() + lm.R;
        const Eigen::Matrix<double, 4, 2> K = P_pred * lm.H.transpose() * S.inverse();
        mean = x_pred + K * (z - lm.H * x_pred);
        cov = (Eigen::Matrix4d::Identity() - K * lm.H) * P_pred;
        cov = 0.5 * (cov + cov.transpose().eval());

        CHECK((filter.posterior_mean() - mean).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("weights stay normalized across steps") {
    auto model = single_state_model({0.1, 0.0}, 1e-4, 1e-4);
    MjpfConfig cfg;
    cfg.n_particles = 32;
    Mjpf filter(model, cfg);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 0.02);
    Eigen::Vector2d pos(0.0, 0.0);
    for (int k = 0; k < 50; ++k) {
        pos += Eigen::Vector2d(0.1, 0.0);
        filter.step(pos + Eigen::Vector2d(noise(rng), noise(rng)));
        double total = 0.0;
        for (const auto& p : filter.particles()) {
            CHECK(p.weight >= 0.0);
            total += p.weight;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("dummy fallback keeps the filter finite when no superstate is valid") {
    auto model = single_state_model({0.5, 0.5}, 1e-4, 1e-4);
    model.vocabulary[0].psi = 0.0; // validity always fails
    MjpfConfig cfg;
    cfg.n_particles = 16;
    Mjpf filter(model, cfg);
    for (int k = 0; k < 30; ++k) {
        const auto step = filter.step(Eigen::Vector2d(double(k), 0.0));
        CHECK(std::isfinite(step.abnormality));
        CHECK(step.abnormality >= 0.0);
        CHECK(step.map_superstate == kDummy);
    }
}

TEST_CASE("systematic resampling approximately preserves the posterior mean") {
    // two-superstate model so particles genuinely diverge
    swdbn::SharedLevelModel model;
    model.model = swdbn::LinearModel::make(1.0, 1e-3, 1e-3);
    model.weights = swdbn::SomWeights{};
    for (int i = 0; i < 2; ++i) {
        swdbn::Superstate s;
        s.id = i;
        s.xi = swdbn::State(0.0, 0.0, i == 0 ? 0.1 : -0.1, 0.0);
        s.covariance = 0.01 * Eigen::Matrix4d::Identity();
        s.control = Eigen::Vector2d(i == 0 ? 0.1 : -0.1, 0.0);
        s.psi = 1e9;
        model.vocabulary.push_back(s);
    }
    model.transitions.n_states = 2;
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(3, 3);
    P(0, 0) = 0.9;
    P(0, 1) = 0.1;
    P(1, 0) = 0.1;
    P(1, 1) = 0.9;
    P(2, 0) = 0.5;
    P(2, 1) = 0.5;
    model.transitions.matrices = {P};

    MjpfConfig always;
    always.n_particles = 1000;
    always.resample_threshold = 2.0; // resample every step
    always.seed = 7;
    MjpfConfig never = always;
    never.resample_threshold = 0.0;

    Mjpf fa(model, always);
    Mjpf fn(model, never);
    std::mt19937_64 rng(13);
    std::normal_distribution<double> noise(0.0, 0.03);
    Eigen::Vector2d pos(0.0, 0.0);
    double max_gap = 0.0;
    for (int k = 0; k < 60; ++k) {
        pos += Eigen::Vector2d(0.1, 0.0);
        const Eigen::Vector2d z = pos + Eigen::Vector2d(noise(rng), noise(rng));
        fa.step(z);
        fn.step(z);
        max_gap = std::max(max_gap,
                           (fa.posterior_mean().head<2>() - fn.posterior_mean().head<2>()).norm());
    }
    CHECK(max_gap <= 0.05); // Monte-Carlo agreement at 1k particles
}

TEST_CASE("runs are deterministic for a fixed seed") {
    auto model = single_state_model({0.1, 0.0}, 1e-4, 1e-4);
    std::vector<io::TrajectoryRecord> obs;
    std::mt19937_64 rng(17);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (int k = 0; k < 100; ++k)
        obs.push_back({k, 0.1 * k + noise(rng), noise(rng)});
    MjpfConfig cfg;
    cfg.n_particles = 64;
    cfg.seed = 21;
    const auto a = run(obs, model, cfg);
    const auto b = run(obs, model, cfg);
    CHECK(a.values == b.values);
    CHECK(a.superstates == b.superstates);
}

TEST_CASE("euclidean norm option reports plain innovation lengths") {
    auto model = single_state_model({1.0, 0.0}, 1e-4, 1e-4);
    MjpfConfig cfg;
    cfg.n_particles = 4;
    cfg.norm = AbnormalityNorm::Euclidean;
    Mjpf filter(model, cfg);
    // prediction lands at (1,0); observe (1.3, 0.4) -> innovation norm 0.5
    const auto step = filter.step(Eigen::Vector2d(1.3, 0.4));
    CHECK(step.abnormality == doctest::Approx(0.5));
}

TEST_CASE("empty vocabulary and bad observations are rejected") {
    swdbn::SharedLevelModel empty;
    empty.model = swdbn::LinearModel::make(1.0, 1e-4, 1e-4);
    MjpfConfig cfg;
    CHECK_THROWS_AS(Mjpf(empty, cfg), ValidationError);

    auto model = single_state_model({0.0, 0.0}, 1e-4, 1e-4);
    Mjpf filter(model, cfg);
    CHECK_THROWS_AS(filter.step(Eigen::Vector2d(std::nan(""), 0.0)), ValidationError);
}

TEST_CASE("run reports the failing step index") {
    auto model = single_state_model({0.1, 0.0}, 1e-4, 1e-4);
    std::vector<io::TrajectoryRecord> obs{{0, 0.1, 0.0}, {1, 0.2, 0.0}, {2, std::nan(""), 0.0}};
    try {
        run(obs, model, MjpfConfig{});
        FAIL("expected a validation error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("step 2") != std::string::npos);
    }
}

TEST_CASE("signal csv round trip") {
    AbnormalitySignal signal;
    signal.values = {0.5, 1.25, 0.0};
    signal.superstates = {3, -1, 7};
    const auto path = (std::filesystem::temp_directory_path() / "nvtk_sig.csv").string();
    write_signal_csv(path, signal);
    const auto back = read_signal_csv(path);
    CHECK(back.values == signal.values);
    CHECK(back.superstates == signal.superstates);
    std::filesystem::remove(path);
}

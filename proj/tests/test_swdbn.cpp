#include <doctest.h>

#include <cmath>
#include <random>

#include "nvtk/sim.hpp"
#include "nvtk/swdbn.hpp"

using namespace nvtk;
using namespace nvtk::swdbn;

TEST_CASE("the zero-force dynamics keep position and annihilate velocity") {
    const auto m = LinearModel::make(1.0, 1e-4, 1e-4);
    const State x(1.0, 2.0, 3.0, 4.0);
    const State pred = m.A * x;
    CHECK(pred(0) == 1.0);
    CHECK(pred(1) == 2.0);
    CHECK(pred(2) == 0.0);
    CHECK(pred(3) == 0.0);
}

TEST_CASE("static observations drive innovations to zero") {
    std::vector<io::TrajectoryRecord> obs;
    for (int k = 0; k < 50; ++k) obs.push_back({k, 5.0, 5.0});
    const auto steps = ukf_filter(obs, LinearModel::make(1.0, 1e-4, 1e-9));
    const auto& last = steps.back();
    CHECK(last.innovation.norm() <= 1e-9);
    CHECK(last.velocity.norm() <= 1e-9);
    CHECK(last.estimate(0) == doctest::Approx(5.0));
}

TEST_CASE("constant motion yields unit innovation velocity") {
    // closed form: with R -> 0 the update pins the estimate to the observation,
    // so the innovation is exactly the per-sample displacement
    std::vector<io::TrajectoryRecord> obs;
    for (int k = 0; k < 100; ++k) obs.push_back({k, double(k), 0.0});
    const auto steps = ukf_filter(obs, LinearModel::make(1.0, 1e-2, 1e-12));
    const auto& last = steps.back();
    CHECK(last.velocity(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(last.velocity(1) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("filter covariance stays symmetric and near-psd") {
    sim::ScenarioSpec spec;
    spec.noise_sigma = 0.05;
    spec.seed = 5;
    spec.laps = 2;
    const auto data = sim::simulate(spec);
    const auto steps = ukf_filter(data.trajectory, LinearModel::make(1.0, 1e-2, 2.5e-3));
    for (const auto& s : steps) {
        CHECK((s.covariance - s.covariance.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(s.covariance);
        CHECK(eig.eigenvalues().minCoeff() >= -1e-9);
    }
}

TEST_CASE("non-finite observations are rejected") {
    std::vector<io::TrajectoryRecord> obs{{0, 0.0, 0.0}, {1, std::nan(""), 0.0}};
    CHECK_THROWS_AS(ukf_filter(obs, LinearModel::make(1.0, 1e-4, 1e-4)), ValidationError);
    CHECK_THROWS_AS(ukf_filter(std::vector<io::TrajectoryRecord>{{0, 0.0, 0.0}},
                               LinearModel::make(1.0, 1e-4, 1e-4)),
                    ValidationError);
}

TEST_CASE("weighted distance favors velocity differences") {
    SomWeights w{0.75, 0.25};
    CHECK(weighted_distance(State(0, 0, 1, 0), State::Zero(), w) == doctest::Approx(std::sqrt(0.75)));
    CHECK(weighted_distance(State(1, 0, 0, 0), State::Zero(), w) == doctest::Approx(std::sqrt(0.25)));

    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int t = 0; t < 20; ++t) {
        const State a(g(rng), g(rng), g(rng), g(rng));
        const State b(g(rng), g(rng), g(rng), g(rng));
        CHECK(weighted_distance(a, b, w) == doctest::Approx(weighted_distance(b, a, w)));
        CHECK(weighted_distance(a, a, w) == 0.0);
    }
}

TEST_CASE("som separates two velocity clusters onto a 1x2 grid") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> jitter(0.0, 1e-4);
    std::vector<State> states;
    State mean_a = State::Zero(), mean_b = State::Zero();
    for (int i = 0; i < 200; ++i) {
        State a(1.0 + jitter(rng), 1.0 + jitter(rng), 2.0 + jitter(rng), 0.0 + jitter(rng));
        State b(1.0 + jitter(rng), 1.0 + jitter(rng), -2.0 + jitter(rng), 0.0 + jitter(rng));
        states.push_back(a);
        states.push_back(b);
        mean_a += a;
        mean_b += b;
    }
    mean_a /= 200.0;
    mean_b /= 200.0;

    SomConfig cfg;
    cfg.rows = 1;
    cfg.cols = 2;
    cfg.epochs = 40;
    cfg.sigma_end = 0.05;
    cfg.seed = 13;
    const auto som = som_train(states, cfg);

    // per-cluster means under the same weighted distance are the oracle
    const double d0a = weighted_distance(som.neurons[0], mean_a, cfg.weights);
    const double d0b = weighted_distance(som.neurons[0], mean_b, cfg.weights);
    const State& n_a = d0a < d0b ? som.neurons[0] : som.neurons[1];
    const State& n_b = d0a < d0b ? som.neurons[1] : som.neurons[0];
    CHECK(weighted_distance(n_a, mean_a, cfg.weights) <= 1e-6);
    CHECK(weighted_distance(n_b, mean_b, cfg.weights) <= 1e-6);
}

TEST_CASE("som objective is non-increasing across epochs") {
    sim::ScenarioSpec spec;
    spec.noise_sigma = 0.01;
    spec.laps = 3;
    spec.seed = 2;
    const auto data = sim::simulate(spec);
    const auto steps = ukf_filter(data.trajectory, LinearModel::make(1.0, 1e-2, 1e-4));
    const auto states = generalized_states(steps);

    SomConfig cfg;
    cfg.rows = 6;
    cfg.cols = 8;
    cfg.epochs = 25;
    cfg.seed = 3;
    const auto som = som_train(states, cfg);
    REQUIRE(som.epoch_objective.size() == 25);
    for (std::size_t e = 1; e < som.epoch_objective.size(); ++e)
        CHECK(som.epoch_objective[e] <= som.epoch_objective[e - 1] + 1e-12);
}

TEST_CASE("identical states collapse to a single effective neuron") {
    std::vector<State> states(50, State(1.0, 2.0, 0.5, -0.5));
    SomConfig cfg;
    cfg.rows = 1;
    cfg.cols = 3;
    cfg.epochs = 10;
    const auto som = som_train(states, cfg);
    for (int a : som.assignments) CHECK(a == som.assignments.front());

    const auto vocab = build_vocabulary(states, som.assignments, som, cfg.weights);
    int empties = 0;
    for (const auto& s : vocab) {
        if (s.empty) {
            ++empties;
            CHECK(s.control == Eigen::Vector2d::Zero());
        }
    }
    CHECK(empties == 2);
}

TEST_CASE("validity radius follows the adjacent-distance statistics") {
    // hand-built som: 1x3 grid with neuron distances 1 and 3 under beta weighting
    SomResult som;
    som.rows = 1;
    som.cols = 3;
    // beta = 0.25 -> position distance scales by sqrt(0.25) = 0.5, so place
    // neurons 2 and 6 position-units apart to get weighted distances 1 and 3
    som.neurons = {State(0, 0, 0, 0), State(2, 0, 0, 0), State(8, 0, 0, 0)};
    std::vector<State> states = som.neurons;
    std::vector<int> assignments{0, 1, 2};
    SomWeights w{0.75, 0.25};

    const auto vocab = build_vocabulary(states, assignments, som, w, PsiAdjacency::Grid4);
    // end neurons see one neighbor each: psi = that distance
    CHECK(vocab[0].psi == doctest::Approx(1.0));
    CHECK(vocab[2].psi == doctest::Approx(3.0));
    // middle neuron sees {1, 3}: mean 2, population std 1 -> psi = 5
    CHECK(vocab[1].psi == doctest::Approx(5.0));
}

TEST_CASE("vocabulary statistics come from the assigned states") {
    std::vector<State> states{State(0, 0, 1, 0), State(2, 0, 3, 0), State(10, 10, -1, -1)};
    SomResult som;
    som.rows = 1;
    som.cols = 2;
    som.neurons = {State(1, 0, 2, 0), State(10, 10, -1, -1)};
    const auto vocab = build_vocabulary(states, {0, 0, 1}, som, SomWeights{});
    CHECK(vocab[0].xi(0) == doctest::Approx(1.0));
    CHECK(vocab[0].xi(2) == doctest::Approx(2.0));
    CHECK(vocab[0].control(0) == doctest::Approx(2.0)); // mean velocity
    CHECK(vocab[0].covariance(0, 0) == doctest::Approx(1.0)); // population covariance
    CHECK(vocab[1].control(1) == doctest::Approx(-1.0));
    CHECK(!vocab[0].empty);
}

TEST_CASE("transition learning matches hand counts") {
    SUBCASE("short sequence without smoothing") {
        const auto model = learn_transitions({1, 1, 2, 2}, 3, {}, 0.0);
        REQUIRE(model.matrices.size() == 1);
        const auto& P = model.matrices[0];
        CHECK(P(1, 1) == doctest::Approx(0.5));
        CHECK(P(1, 2) == doctest::Approx(0.5));
        CHECK(P(2, 2) == doctest::Approx(1.0));
    }
    SUBCASE("rows are stochastic with smoothing and dwell bins") {
        std::mt19937_64 rng(17);
        std::uniform_int_distribution<int> state(0, 4);
        std::vector<int> seq;
        for (int i = 0; i < 400; ++i) seq.push_back(state(rng));
        const auto model = learn_transitions(seq, 5, {2, 5}, 1.0);
        REQUIRE(model.matrices.size() == 3);
        for (const auto& P : model.matrices)
            for (int r = 0; r < P.rows(); ++r) CHECK(P.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("constant sequence self-transitions") {
        const auto model = learn_transitions({3, 3, 3, 3, 3}, 4, {2}, 0.0);
        for (const auto& P : model.matrices) CHECK(P(3, 3) == doctest::Approx(1.0));
    }
    SUBCASE("dwell bins route counts by time in state") {
        // state 0 held for 4 steps then a jump: the 0->1 transition happens at dwell 4
        const auto model = learn_transitions({0, 0, 0, 0, 1}, 2, {2}, 0.0);
        // bin 0 is dwell<=2 (two 0->0 events at dwell 1 and 2)
        CHECK(model.matrices[0](0, 0) == doctest::Approx(1.0));
        // bin 1 is dwell>2: one 0->0 at dwell 3 and the 0->1 at dwell 4
        CHECK(model.matrices[1](0, 0) == doctest::Approx(0.5));
        CHECK(model.matrices[1](0, 1) == doctest::Approx(0.5));
    }
}

TEST_CASE("trained vocabulary keeps training states within psi") {
    sim::ScenarioSpec spec;
    spec.noise_sigma = 0.01;
    spec.laps = 5;
    spec.seed = 0;
    const auto data = sim::simulate(spec);

    SharedLevelConfig cfg;
    cfg.som.seed = 0;
    const auto model = train_shared_level(data.trajectory, cfg);

    const auto steps =
        ukf_filter(data.trajectory, LinearModel::make(cfg.dt, cfg.ukf_process_noise, cfg.observation_noise));
    const auto states = generalized_states(steps);
    std::size_t inside = 0;
    for (const auto& x : states) {
        const int s = nearest_superstate(model, x);
        if (weighted_distance(x, model.vocabulary[std::size_t(s)].xi, model.weights) <=
            model.vocabulary[std::size_t(s)].psi)
            ++inside;
    }
    CHECK(double(inside) / double(states.size()) >= 0.99);
}

TEST_CASE("shared-level model json round trip") {
    sim::ScenarioSpec spec;
    spec.noise_sigma = 0.01;
    spec.laps = 2;
    const auto data = sim::simulate(spec);
    SharedLevelConfig cfg;
    cfg.som.rows = 4;
    cfg.som.cols = 5;
    const auto model = train_shared_level(data.trajectory, cfg);
    const auto back = model_from_json(to_json(model));
    REQUIRE(back.vocabulary.size() == model.vocabulary.size());
    for (std::size_t i = 0; i < back.vocabulary.size(); ++i) {
        CHECK(back.vocabulary[i].xi == model.vocabulary[i].xi);
        CHECK(back.vocabulary[i].psi == model.vocabulary[i].psi);
        CHECK(back.vocabulary[i].empty == model.vocabulary[i].empty);
    }
    REQUIRE(back.transitions.matrices.size() == model.transitions.matrices.size());
    for (std::size_t b = 0; b < back.transitions.matrices.size(); ++b)
        CHECK((back.transitions.matrices[b] - model.transitions.matrices[b]).cwiseAbs().maxCoeff() == 0.0);
}

#include <doctest.h>

#include <cmath>
#include <random>

#include "nvtk/ocsvm.hpp"
#include "qp_oracle.hpp"

using namespace nvtk;
using namespace nvtk::ocsvm;

namespace {

std::vector<std::vector<double>> gaussian_cloud(std::size_t n, std::size_t d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::vector<double>> X(n, std::vector<double>(d));
    for (auto& row : X)
        for (auto& v : row) v = gauss(rng);
    return X;
}

// mirror of the solver's preprocessing so the oracle sees the same dual
std::vector<std::vector<double>> standardize(const std::vector<std::vector<double>>& X) {
    const std::size_t n = X.size(), d = X.front().size();
    std::vector<double> mean(d, 0.0), sd(d, 0.0);
    for (const auto& row : X)
        for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    for (auto& m : mean) m /= double(n);
    for (const auto& row : X)
        for (std::size_t j = 0; j < d; ++j) sd[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
    for (auto& s : sd) s = std::sqrt(s / double(n));
    std::vector<std::vector<double>> Z = X;
    for (auto& row : Z)
        for (std::size_t j = 0; j < d; ++j) row[j] = (row[j] - mean[j]) / (sd[j] > 0 ? sd[j] : 1.0);
    return Z;
}

double rbf(const std::vector<double>& a, const std::vector<double>& b, double gamma) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-gamma * s);
}

} // namespace

TEST_CASE("decision values match the dense qp oracle on 20 points") {
    const auto X = gaussian_cloud(20, 4, 101);
    OcSvmConfig cfg;
    cfg.nu = 0.1;
    cfg.kernel = {KernelType::Rbf, 0.5};
    cfg.tolerance = 1e-9;
    const auto model = train(X, cfg);

    const auto Z = standardize(X);
    const std::size_t n = Z.size();
    std::vector<double> Q(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) Q[i * n + j] = rbf(Z[i], Z[j], 0.5);
    const auto oracle = qp_oracle::solve(Q, n, 1.0 / (cfg.nu * double(n)));

    CHECK(model.rho == doctest::Approx(oracle.rho).epsilon(1e-4));
    // compare decision values on the training points and on fresh points
    const auto probes = gaussian_cloud(10, 4, 202);
    auto oracle_score = [&](const std::vector<double>& x_raw) {
        // standardize with the training statistics
        std::vector<double> mean(4, 0.0), sd(4, 0.0);
        for (const auto& row : X)
            for (std::size_t j = 0; j < 4; ++j) mean[j] += row[j];
        for (auto& m : mean) m /= double(X.size());
        for (const auto& row : X)
            for (std::size_t j = 0; j < 4; ++j) sd[j] += (row[j] - mean[j]) * (row[j] - mean[j]);
        for (auto& s : sd) s = std::sqrt(s / double(X.size()));
        std::vector<double> z(4);
        for (std::size_t j = 0; j < 4; ++j) z[j] = (x_raw[j] - mean[j]) / (sd[j] > 0 ? sd[j] : 1.0);
        double f = -oracle.rho;
        for (std::size_t i = 0; i < n; ++i) f += oracle.alpha[i] * rbf(Z[i], z, 0.5);
        return f;
    };
    for (const auto& x : X) CHECK(score(model, x) == doctest::Approx(oracle_score(x)).epsilon(1e-4));
    for (const auto& x : probes) CHECK(score(model, x) == doctest::Approx(oracle_score(x)).epsilon(1e-4));
}

TEST_CASE("nu = 1 makes every point a bounded support vector") {
    const auto X = gaussian_cloud(15, 3, 7);
    OcSvmConfig cfg;
    cfg.nu = 1.0;
    const auto model = train(X, cfg);
    CHECK(model.support_vectors.size() == X.size());
    for (double a : model.coefficients) CHECK(a == doctest::Approx(1.0 / 15.0).epsilon(1e-9));
}

TEST_CASE("duplicating the dataset keeps the decision function") {
    const auto X = gaussian_cloud(30, 3, 53);
    auto XX = X;
    XX.insert(XX.end(), X.begin(), X.end());
    OcSvmConfig cfg;
    cfg.nu = 0.2;
    cfg.kernel = {KernelType::Rbf, 0.7};
    cfg.tolerance = 1e-9;
    const auto m1 = train(X, cfg);
    const auto m2 = train(XX, cfg);
    for (const auto& x : gaussian_cloud(20, 3, 59))
        CHECK(score(m1, x) == doctest::Approx(score(m2, x)).epsilon(1e-4));
}

TEST_CASE("interior support vectors score zero") {
    const auto X = gaussian_cloud(40, 3, 71);
    OcSvmConfig cfg;
    cfg.nu = 0.25;
    cfg.kernel = {KernelType::Rbf, 0.5};
    cfg.tolerance = 1e-10;
    const auto model = train(X, cfg);
    const double C = 1.0 / (cfg.nu * double(X.size()));
    int interior = 0;
    for (std::size_t i = 0; i < model.coefficients.size(); ++i) {
        if (model.coefficients[i] > 1e-6 && model.coefficients[i] < C - 1e-6) {
            ++interior;
            // raw-space score of the stored (standardized) support vector
            std::vector<double> raw(model.dim());
            for (std::size_t j = 0; j < raw.size(); ++j)
                raw[j] = model.support_vectors[i][j] * model.feature_scale[j] + model.feature_mean[j];
            CHECK(score(model, raw) == doctest::Approx(0.0).epsilon(1e-4));
        }
    }
    CHECK(interior > 0);
}

TEST_CASE("nu bounds the training outlier fraction") {
    const auto X = gaussian_cloud(200, 5, 83);
    for (double nu : {0.05, 0.1, 0.3}) {
        OcSvmConfig cfg;
        cfg.nu = nu;
        cfg.kernel = {KernelType::Rbf, 0.0}; // defaults to 1/d
        cfg.tolerance = 1e-9;
        const auto model = train(X, cfg);
        // margin support vectors sit at f = 0 up to solver precision, so a
        // strictly negative score needs a matching numerical cutoff
        std::size_t outliers = 0;
        for (const auto& x : X) outliers += score(model, x) < -1e-6;
        CHECK(double(outliers) / double(X.size()) <= nu + 2.0 / double(X.size()));
    }
}

TEST_CASE("coefficients satisfy the dual constraints") {
    const auto X = gaussian_cloud(60, 4, 97);
    OcSvmConfig cfg;
    cfg.nu = 0.15;
    const auto model = train(X, cfg);
    const double C = 1.0 / (cfg.nu * double(X.size()));
    double sum = 0.0;
    for (double a : model.coefficients) {
        CHECK(a > 0.0);
        CHECK(a <= C + 1e-12);
        sum += a;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("far-away points score near minus rho under rbf") {
    const auto X = gaussian_cloud(50, 3, 113);
    OcSvmConfig cfg;
    cfg.nu = 0.1;
    cfg.kernel = {KernelType::Rbf, 0.5};
    const auto model = train(X, cfg);
    const std::vector<double> far{100.0, -100.0, 100.0};
    CHECK(score(model, far) == doctest::Approx(-model.rho).epsilon(1e-9));
    CHECK(!classify(model, far));
}

TEST_CASE("linear kernel trains and scores") {
    auto X = gaussian_cloud(30, 2, 131);
    OcSvmConfig cfg;
    cfg.nu = 0.2;
    cfg.kernel = {KernelType::Linear, 0.0};
    const auto model = train(X, cfg);
    CHECK(std::isfinite(score(model, X.front())));
}

TEST_CASE("input validation") {
    OcSvmConfig cfg;
    CHECK_THROWS_AS(train({{1.0, 2.0}}, cfg), ValidationError);
    CHECK_THROWS_AS(train({{1.0}, {1.0, 2.0}}, cfg), ValidationError);
    CHECK_THROWS_AS(train({{1.0}, {std::nan("")}}, cfg), ValidationError);
    cfg.nu = 0.0;
    CHECK_THROWS_AS(train({{1.0}, {2.0}}, cfg), ConfigError);

    cfg.nu = 0.5;
    const auto model = train({{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}}, cfg);
    CHECK_THROWS_AS(score(model, {1.0}), ValidationError);
}

TEST_CASE("training is deterministic") {
    const auto X = gaussian_cloud(50, 4, 211);
    OcSvmConfig cfg;
    cfg.nu = 0.15;
    const auto a = train(X, cfg);
    const auto b = train(X, cfg);
    CHECK(to_json(a) == to_json(b));
}

TEST_CASE("model json round trip preserves scores") {
    const auto X = gaussian_cloud(25, 3, 139);
    OcSvmConfig cfg;
    cfg.nu = 0.2;
    const auto model = train(X, cfg);
    const auto back = model_from_json(to_json(model));
    for (const auto& x : gaussian_cloud(10, 3, 149)) CHECK(score(model, x) == score(back, x));
}

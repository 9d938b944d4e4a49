#include <doctest.h>

#include <cmath>
#include <random>

#include "nvtk/evalkit.hpp"

using namespace nvtk;
using evalkit::ScoredSample;

namespace {

// brute-force pairwise concordance with half credit for ties
double concordance_auc(const std::vector<ScoredSample>& samples) {
    double num = 0.0;
    std::size_t pairs = 0;
    for (const auto& p : samples) {
        if (!p.label) continue;
        for (const auto& n : samples) {
            if (n.label) continue;
            ++pairs;
            if (p.score > n.score)
                num += 1.0;
            else if (p.score == n.score)
                num += 0.5;
        }
    }
    return num / double(pairs);
}

} // namespace

TEST_CASE("perfect separation gives auc 1 and eer 0") {
    std::vector<ScoredSample> s{{0.9, true}, {0.8, true}, {0.4, false}, {0.3, false}};
    const auto curve = evalkit::roc(s);
    CHECK(evalkit::auc(curve) == doctest::Approx(1.0));
    CHECK(evalkit::eer(curve) == doctest::Approx(0.0));
}

TEST_CASE("half-concordant example gives auc 0.5") {
    std::vector<ScoredSample> s{{0.9, true}, {0.3, true}, {0.8, false}, {0.4, false}};
    CHECK(evalkit::auc(evalkit::roc(s)) == doctest::Approx(0.5));
    CHECK(concordance_auc(s) == doctest::Approx(0.5));
}

TEST_CASE("trapezoid auc equals the concordance count with ties") {
    std::mt19937 rng(17);
    std::uniform_int_distribution<int> score(0, 20); // forces plenty of ties
    std::bernoulli_distribution label(0.4);
    std::vector<ScoredSample> s;
    for (int i = 0; i < 1000; ++i) s.push_back({double(score(rng)) / 20.0, label(rng)});
    const double a = evalkit::auc(evalkit::roc(s));
    const double b = concordance_auc(s);
    CHECK(std::abs(a - b) <= 1e-12);
}

TEST_CASE("auc is invariant under strictly increasing transforms") {
    std::mt19937 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<ScoredSample> s, t;
    for (int i = 0; i < 400; ++i) {
        const bool label = i % 3 == 0;
        const double v = gauss(rng) + (label ? 0.7 : 0.0);
        s.push_back({v, label});
        t.push_back({std::exp(2.0 * v) + 5.0, label});
    }
    CHECK(evalkit::auc(evalkit::roc(s)) == doctest::Approx(evalkit::auc(evalkit::roc(t))).epsilon(1e-12));
}

TEST_CASE("roc is monotone and spans the unit square") {
    std::mt19937 rng(29);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<ScoredSample> s;
    for (int i = 0; i < 300; ++i) s.push_back({gauss(rng), i % 2 == 0});
    const auto curve = evalkit::roc(s);
    REQUIRE(curve.points.size() >= 2);
    CHECK(curve.points.front().fpr == 0.0);
    CHECK(curve.points.front().tpr == 0.0);
    CHECK(curve.points.back().fpr == 1.0);
    CHECK(curve.points.back().tpr == 1.0);
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        CHECK(curve.points[i].fpr >= curve.points[i - 1].fpr);
        CHECK(curve.points[i].tpr >= curve.points[i - 1].tpr);
    }
}

TEST_CASE("symmetric scores put eer near one half") {
    std::mt19937 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<ScoredSample> s;
    for (int i = 0; i < 4000; ++i) s.push_back({gauss(rng), i % 2 == 0});
    const double e = evalkit::eer(evalkit::roc(s));
    CHECK(e == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("single-class input is an error") {
    std::vector<ScoredSample> s{{0.5, true}, {0.2, true}};
    CHECK_THROWS_AS(evalkit::roc(s), NumericError);
}

TEST_CASE("frame level takes the max cell and aligns labels") {
    io::ScalarMap zero;
    zero.width = 2;
    zero.height = 2;
    zero.values = {0.0f, 0.0f, 0.0f, 0.0f};
    io::ScalarMap hot = zero;
    hot.values[2] = 0.9f;
    io::ScalarMap hot_permuted = zero;
    hot_permuted.values[1] = 0.9f;

    const auto set = evalkit::frame_level({zero, hot, hot_permuted}, {0, 1, 1});
    CHECK(set[0].score == 0.0);
    CHECK(set[1].score == doctest::Approx(0.9));
    CHECK(set[2].score == set[1].score); // max is permutation invariant

    CHECK_THROWS_AS(evalkit::frame_level({zero}, {0, 1}), ValidationError);
}

TEST_CASE("pixel level enforces the 40 percent rule exactly") {
    // 100 ground-truth pixels; detections covering 39 and 40 of them
    std::vector<std::uint8_t> gt(200, 0);
    for (int i = 0; i < 100; ++i) gt[std::size_t(i)] = 1;
    std::vector<std::uint8_t> det39(200, 0), det40(200, 0), exact(200, 0);
    for (int i = 0; i < 39; ++i) det39[std::size_t(i)] = 1;
    for (int i = 0; i < 40; ++i) det40[std::size_t(i)] = 1;
    exact = gt;
    std::vector<std::uint8_t> empty(200, 0);

    const auto out = evalkit::pixel_level({det39, det40, exact, empty}, {gt, gt, gt, empty});
    CHECK(out[0] == evalkit::PixelOutcome::FalsePositive);
    CHECK(out[1] == evalkit::PixelOutcome::TruePositive);
    CHECK(out[2] == evalkit::PixelOutcome::TruePositive);
    CHECK(out[3] == evalkit::PixelOutcome::Excluded);
}

TEST_CASE("signal normalization and threshold calibration") {
    const auto n = evalkit::normalize_signal({2.0, 4.0, 8.0});
    CHECK(n.values == std::vector<double>{0.25, 0.5, 1.0});
    CHECK(!n.all_zero);

    const auto c = evalkit::normalize_signal({3.0, 3.0, 3.0});
    CHECK(c.values == std::vector<double>{1.0, 1.0, 1.0});

    const auto z = evalkit::normalize_signal({0.0, 0.0});
    CHECK(z.all_zero);
    CHECK(z.values == std::vector<double>{0.0, 0.0});

    std::vector<double> ramp;
    for (int i = 1; i <= 100; ++i) ramp.push_back(double(i));
    CHECK(evalkit::calibrate_threshold(ramp, 95.0) == 95.0);
}

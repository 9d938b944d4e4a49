#include "nvtk/ocsvm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "nvtk/kernels.hpp"

namespace nvtk::ocsvm {

namespace {

double kernel_eval(const KernelConfig& k, const std::vector<double>& a, const std::vector<double>& b) {
    switch (k.type) {
    case KernelType::Linear:
        return kernels::dot(a.data(), b.data(), a.size());
    case KernelType::Rbf:
        return std::exp(-k.gamma * kernels::sqdist(a.data(), b.data(), a.size()));
    }
    return 0.0;
}

} // namespace

OcSvmModel train(const std::vector<std::vector<double>>& X, const OcSvmConfig& cfg) {
    const std::size_t n = X.size();
    if (n < 2) throw ValidationError("ocsvm: need at least 2 training vectors");
    if (cfg.nu <= 0.0 || cfg.nu > 1.0) throw ConfigError("ocsvm: nu must be in (0, 1]");
    const std::size_t d = X.front().size();
    for (const auto& row : X) {
        if (row.size() != d) throw ValidationError("ocsvm: dimension mismatch in training data");
        for (double v : row)
            if (!std::isfinite(v)) throw ValidationError("ocsvm: non-finite feature");
    }

    OcSvmModel model;
    model.nu = cfg.nu;
    model.kernel = cfg.kernel;
    if (model.kernel.type == KernelType::Rbf && model.kernel.gamma <= 0.0)
        model.kernel.gamma = 1.0 / double(d);

    // standardize in place; constant features pass through with scale 1
    model.feature_mean.assign(d, 0.0);
    model.feature_scale.assign(d, 1.0);
    for (const auto& row : X)
        for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] += row[j];
    for (std::size_t j = 0; j < d; ++j) model.feature_mean[j] /= double(n);
    std::vector<double> var(d, 0.0);
    for (const auto& row : X)
        for (std::size_t j = 0; j < d; ++j) {
            const double c = row[j] - model.feature_mean[j];
            var[j] += c * c;
        }
    for (std::size_t j = 0; j < d; ++j) {
        const double sd = std::sqrt(var[j] / double(n));
        model.feature_scale[j] = sd > 0.0 ? sd : 1.0;
    }
    std::vector<std::vector<double>> Z(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) Z[i][j] = (X[i][j] - model.feature_mean[j]) / model.feature_scale[j];

    std::vector<double> Q(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) {
            const double v = kernel_eval(model.kernel, Z[i], Z[j]);
            Q[i * n + j] = v;
            Q[j * n + i] = v;
        }

    const double C = 1.0 / (cfg.nu * double(n));
    std::vector<double> alpha(n, 0.0);
    // feasible start: fill the first floor(nu*n) coefficients to the box bound
    {
        double remaining = 1.0;
        for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
            alpha[i] = std::min(C, remaining);
            remaining -= alpha[i];
        }
    }
    std::vector<double> grad(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double g = 0.0;
        for (std::size_t j = 0; j < n; ++j) g += Q[i * n + j] * alpha[j];
        grad[i] = g;
    }

    const double bound_eps = 1e-12;
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        // maximal violating pair: raise the smallest gradient below the box
        // bound, lower the largest gradient with positive mass
        std::size_t up = n, dn = n;
        double g_up = std::numeric_limits<double>::infinity();
        double g_dn = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] < C - bound_eps && grad[i] < g_up) {
                g_up = grad[i];
                up = i;
            }
            if (alpha[i] > bound_eps && grad[i] > g_dn) {
                g_dn = grad[i];
                dn = i;
            }
        }
        if (up == n || dn == n || g_dn - g_up < cfg.tolerance) break;

        double denom = Q[up * n + up] + Q[dn * n + dn] - 2.0 * Q[up * n + dn];
        if (denom <= 1e-12) denom = 1e-12;
        double delta = (g_dn - g_up) / denom;
        delta = std::min({delta, C - alpha[up], alpha[dn]});
        alpha[up] += delta;
        alpha[dn] -= delta;
        for (std::size_t i = 0; i < n; ++i) grad[i] += delta * (Q[i * n + up] - Q[i * n + dn]);
    }

    // rho = gradient level on free vectors; fall back to the bound midpoint
    {
        double sum = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (alpha[i] > bound_eps && alpha[i] < C - bound_eps) {
                sum += grad[i];
                ++cnt;
            }
        }
        if (cnt > 0) {
            model.rho = sum / double(cnt);
        } else {
            double lo = -std::numeric_limits<double>::infinity();
            double hi = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                if (alpha[i] > bound_eps) lo = std::max(lo, grad[i]);
                if (alpha[i] < C - bound_eps) hi = std::min(hi, grad[i]);
            }
            if (!std::isfinite(lo)) lo = hi;
            if (!std::isfinite(hi)) hi = lo;
            model.rho = 0.5 * (lo + hi);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > bound_eps) {
            model.support_vectors.push_back(Z[i]);
            model.coefficients.push_back(alpha[i]);
        }
    }
    return model;
}

double score(const OcSvmModel& model, const std::vector<double>& x) {
    if (x.size() != model.dim())
        throw ValidationError("ocsvm: input dimension " + std::to_string(x.size()) + ", model expects " +
                              std::to_string(model.dim()));
    std::vector<double> z(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (!std::isfinite(x[j])) throw ValidationError("ocsvm: non-finite input feature");
        z[j] = (x[j] - model.feature_mean[j]) / model.feature_scale[j];
    }
    double f = -model.rho;
    for (std::size_t i = 0; i < model.support_vectors.size(); ++i)
        f += model.coefficients[i] * kernel_eval(model.kernel, model.support_vectors[i], z);
    return f;
}

bool classify(const OcSvmModel& model, const std::vector<double>& x) { return score(model, x) >= 0.0; }

std::string to_json(const OcSvmModel& model) {
    nlohmann::json j;
    j["format"] = "nvtk-ocsvm";
    j["version"] = 1;
    j["nu"] = model.nu;
    j["rho"] = model.rho;
    j["kernel"]["type"] = model.kernel.type == KernelType::Linear ? "linear" : "rbf";
    j["kernel"]["gamma"] = model.kernel.gamma;
    j["mean"] = model.feature_mean;
    j["scale"] = model.feature_scale;
    j["support_vectors"] = model.support_vectors;
    j["coefficients"] = model.coefficients;
    return j.dump(2);
}

OcSvmModel model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("ocsvm: invalid model JSON");
    if (j.value("format", "") != "nvtk-ocsvm") throw ParseError("ocsvm: not an ocsvm model file");
    if (j.value("version", 0) != 1) throw ParseError("ocsvm: unsupported model version");
    OcSvmModel m;
    m.nu = j.at("nu").get<double>();
    m.rho = j.at("rho").get<double>();
    const std::string kt = j.at("kernel").at("type").get<std::string>();
    if (kt == "linear")
        m.kernel.type = KernelType::Linear;
    else if (kt == "rbf")
        m.kernel.type = KernelType::Rbf;
    else
        throw ParseError("ocsvm: unknown kernel type \"" + kt + "\"");
    m.kernel.gamma = j.at("kernel").at("gamma").get<double>();
    m.feature_mean = j.at("mean").get<std::vector<double>>();
    m.feature_scale = j.at("scale").get<std::vector<double>>();
    m.support_vectors = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    if (m.support_vectors.size() != m.coefficients.size())
        throw ValidationError("ocsvm: coefficient count mismatch");
    for (const auto& sv : m.support_vectors)
        if (sv.size() != m.feature_mean.size()) throw ValidationError("ocsvm: support vector dimension mismatch");
    return m;
}

void save(const OcSvmModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << to_json(model) << '\n';
}

OcSvmModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

} // namespace nvtk::ocsvm

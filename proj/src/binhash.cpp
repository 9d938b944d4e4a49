#include "nvtk/binhash.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace nvtk::binhash {

namespace {

Eigen::MatrixXd sign_matrix(const Eigen::MatrixXd& m) {
    return m.unaryExpr([](double v) { return v > 0.0 ? 1.0 : -1.0; });
}

Eigen::MatrixXd random_orthogonal(int k, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd g(k, k);
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) g(i, j) = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    return qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
}

double orthogonality_error(const Eigen::MatrixXd& R) {
    return (R.transpose() * R - Eigen::MatrixXd::Identity(R.cols(), R.cols())).cwiseAbs().maxCoeff();
}

void check_orthogonal(const Eigen::MatrixXd& R, const char* what) {
    if (orthogonality_error(R) > 1e-8)
        throw NumericError(std::string("itq: ") + what + " lost orthogonality");
}

} // namespace

ItqFit fit(const Eigen::MatrixXd& X_in, int k, const ItqOptions& opts) {
    if (k < 1) throw ConfigError("itq: bits must be >= 1");
    if (k > 64) throw ConfigError("itq: bits must be <= 64");
    if (opts.iterations < 0) throw ConfigError("itq: iterations must be >= 0");

    Eigen::MatrixXd X = X_in;
    if (std::size_t(X.rows()) > opts.max_train_rows) {
        // uniform subsample without replacement, kept in row order
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(X.rows()));
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = Eigen::Index(i);
        Rng rng = make_rng(opts.seed ^ 0x9e3779b97f4a7c15ull);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(opts.max_train_rows);
        std::sort(idx.begin(), idx.end());
        Eigen::MatrixXd sub(Eigen::Index(opts.max_train_rows), X.cols());
        for (Eigen::Index i = 0; i < sub.rows(); ++i) sub.row(i) = X.row(idx[std::size_t(i)]);
        X = std::move(sub);
    }

    const Eigen::Index n = X.rows();
    const Eigen::Index d = X.cols();
    if (n <= k) throw ValidationError("itq: need more than k training rows");
    if (d < k) throw ValidationError("itq: feature dimension below k");
    if (!X.allFinite()) throw ValidationError("itq: non-finite training data");

    ItqFit fit;
    ItqModel& model = fit.model;
    model.bits = k;
    model.mean = X.colwise().mean();
    Eigen::MatrixXd Z = X.rowwise() - model.mean.transpose();

    Eigen::MatrixXd cov = (Z.transpose() * Z) / double(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("itq: eigendecomposition failed");

    // ascending order from Eigen; count usable directions against a relative floor
    const Eigen::VectorXd evals = eig.eigenvalues();
    const double floor = std::max(evals(d - 1), 0.0) * 1e-10 + 1e-300;
    int rank = 0;
    for (Eigen::Index i = 0; i < d; ++i)
        if (evals(i) > floor) ++rank;
    if (rank < k)
        throw NumericError("itq: rank-deficient data, achievable k = " + std::to_string(rank));

    model.projection.resize(d, k);
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd dir = eig.eigenvectors().col(d - 1 - j);
        // deterministic sign: largest-magnitude entry positive
        Eigen::Index arg;
        dir.cwiseAbs().maxCoeff(&arg);
        if (dir(arg) < 0.0) dir = -dir;
        model.projection.col(j) = dir;
    }
    check_orthogonal(model.projection, "projection");

    Eigen::MatrixXd V = Z * model.projection; // n x k
    model.rotation = opts.init == RotationInit::Identity ? Eigen::MatrixXd::Identity(k, k)
                                                         : random_orthogonal(k, opts.seed);

    fit.losses.reserve(std::size_t(opts.iterations));
    for (int it = 0; it < opts.iterations; ++it) {
        Eigen::MatrixXd VR = V * model.rotation;
        Eigen::MatrixXd B = sign_matrix(VR);
        fit.losses.push_back((B - VR).squaredNorm());
        // Procrustes: maximize tr(R' V'B); with B'V = U S W', R = W U'
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(B.transpose() * V, Eigen::ComputeFullU | Eigen::ComputeFullV);
        model.rotation = svd.matrixV() * svd.matrixU().transpose();
        fit.rotation_orthogonality.push_back(orthogonality_error(model.rotation));
        check_orthogonal(model.rotation, "rotation");
    }
    return fit;
}

BinaryCode encode(const ItqModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.mean.size())
        throw ValidationError("itq: input dimension " + std::to_string(x.size()) + ", model expects " +
                              std::to_string(model.mean.size()));
    const Eigen::VectorXd r = model.rotation.transpose() * (model.projection.transpose() * (x - model.mean));
    BinaryCode code;
    code.bits.resize(std::size_t(model.bits));
    for (int i = 0; i < model.bits; ++i) code.bits[std::size_t(i)] = r(i) > 0.0 ? 1 : 0;
    return code;
}

std::uint64_t code_index(const BinaryCode& code) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < code.bits.size(); ++i)
        if (code.bits[i]) v |= (std::uint64_t(1) << i);
    return v;
}

std::string code_to_hex(const BinaryCode& code) {
    const int digits = (int(code.bits.size()) + 3) / 4;
    const std::uint64_t v = code_index(code);
    std::string out(std::size_t(digits), '0');
    for (int i = 0; i < digits; ++i) {
        const unsigned nib = unsigned(v >> (4 * (digits - 1 - i))) & 0xf;
        out[std::size_t(i)] = "0123456789abcdef"[nib];
    }
    return out;
}

BinaryCode hex_to_code(const std::string& hex, int k) {
    if (k < 1 || k > 64) throw ConfigError("itq: bits must be in [1, 64]");
    std::uint64_t v = 0;
    for (char c : hex) {
        unsigned nib;
        if (c >= '0' && c <= '9')
            nib = unsigned(c - '0');
        else if (c >= 'a' && c <= 'f')
            nib = unsigned(c - 'a') + 10;
        else if (c >= 'A' && c <= 'F')
            nib = unsigned(c - 'A') + 10;
        else
            throw ParseError("itq: invalid hex code \"" + hex + "\"");
        v = (v << 4) | nib;
    }
    if (k < 64 && v >= (std::uint64_t(1) << k))
        throw ValidationError("itq: code \"" + hex + "\" exceeds " + std::to_string(k) + " bits");
    BinaryCode code;
    code.bits.resize(std::size_t(k));
    for (int i = 0; i < k; ++i) code.bits[std::size_t(i)] = (v >> i) & 1;
    return code;
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw ParseError("itq: empty matrix in model file");
    Eigen::MatrixXd m(Eigen::Index(rows.size()), Eigen::Index(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) throw ParseError("itq: ragged matrix in model file");
        for (std::size_t jj = 0; jj < rows[i].size(); ++jj) m(Eigen::Index(i), Eigen::Index(jj)) = rows[i][jj];
    }
    return m;
}

} // namespace

std::string to_json(const ItqModel& model) {
    nlohmann::json j;
    j["format"] = "nvtk-itq";
    j["version"] = 1;
    j["bits"] = model.bits;
    j["mean"] = std::vector<double>(model.mean.data(), model.mean.data() + model.mean.size());
    j["projection"] = matrix_to_json(model.projection);
    j["rotation"] = matrix_to_json(model.rotation);
    return j.dump(2);
}

ItqModel model_from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("itq: invalid model JSON");
    if (j.value("format", "") != "nvtk-itq") throw ParseError("itq: not an itq model file");
    if (j.value("version", 0) != 1) throw ParseError("itq: unsupported model version");
    ItqModel m;
    m.bits = j.at("bits").get<int>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    m.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), Eigen::Index(mean.size()));
    m.projection = matrix_from_json(j.at("projection"));
    m.rotation = matrix_from_json(j.at("rotation"));
    if (m.projection.cols() != m.bits || m.rotation.rows() != m.bits || m.rotation.cols() != m.bits)
        throw ValidationError("itq: inconsistent model dimensions");
    return m;
}

void save(const ItqModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot create file");
    out << to_json(model) << '\n';
}

ItqModel load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

} // namespace nvtk::binhash

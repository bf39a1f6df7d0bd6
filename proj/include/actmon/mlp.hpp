#pragma once

// Feed-forward network with tanh hidden layers and a softmax output, trained
// by full-batch gradient descent on mean cross-entropy.

#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/features.hpp"
#include "actmon/train_config.hpp"

namespace actmon {

struct MlpModel {
    Schema schema = Schema::Shock;
    std::vector<int> layer_sizes;          // input, hidden..., output
    std::vector<Eigen::MatrixXd> weights;  // layer l: sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;
    std::vector<std::string> class_names;
    // z-score parameters from the training data, applied before layer 0
    Eigen::VectorXd input_mean;
    Eigen::VectorXd input_scale;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
};

struct MlpGradient {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
};

/// Xavier-uniform weights and zero biases drawn from the seeded RNG, identity
/// standardization.
inline MlpModel mlp_init(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw Error(ErrorKind::Parameter, "MLP needs an input and an output layer");
    for (int s : layer_sizes)
        if (s < 1) throw Error(ErrorKind::Parameter, "layer sizes must be positive");
    MlpModel m;
    m.layer_sizes = layer_sizes;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int in = layer_sizes[l], out = layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        Eigen::MatrixXd w(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) w(i, j) = dist(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Eigen::VectorXd::Zero(out));
    }
    m.input_mean = Eigen::VectorXd::Zero(layer_sizes.front());
    m.input_scale = Eigen::VectorXd::Ones(layer_sizes.front());
    for (int c = 0; c < layer_sizes.back(); ++c) m.class_names.push_back(std::to_string(c));
    return m;
}

namespace detail {

/// Row-wise softmax.
inline Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& z) {
    Eigen::MatrixXd p(z.rows(), z.cols());
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const double mx = z.row(r).maxCoeff();
        Eigen::RowVectorXd e = (z.row(r).array() - mx).exp();
        p.row(r) = e / e.sum();
    }
    return p;
}

/// Returns layer activations; the last entry holds class probabilities.
/// Rows of `x` must already be standardized.
inline std::vector<Eigen::MatrixXd> forward_all(const MlpModel& m, const Eigen::MatrixXd& x) {
    std::vector<Eigen::MatrixXd> acts{x};
    const std::size_t layers = m.weights.size();
    for (std::size_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd z = acts.back() * m.weights[l].transpose();
        z.rowwise() += m.biases[l].transpose();
        acts.push_back(l + 1 == layers ? softmax_rows(z) : Eigen::MatrixXd(z.array().tanh()));
    }
    return acts;
}

inline Eigen::MatrixXd standardize(const MlpModel& m, const Eigen::MatrixXd& raw) {
    Eigen::MatrixXd x = raw.rowwise() - m.input_mean.transpose();
    return x.array().rowwise() / m.input_scale.transpose().array();
}

}  // namespace detail

inline Eigen::MatrixXd to_matrix(std::span<const FeatureVector> xs) {
    if (xs.empty()) return {};
    Eigen::MatrixXd out(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(xs.front().size()));
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < xs[i].size(); ++j) out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = xs[i][j];
    return out;
}

/// Mean cross-entropy of standardized inputs `x` against integer labels, and
/// its gradient by backpropagation.
inline double mlp_loss_and_gradient(const MlpModel& m, const Eigen::MatrixXd& x, std::span<const int> labels,
                                    MlpGradient* grad) {
    const auto acts = detail::forward_all(m, x);
    const Eigen::MatrixXd& p = acts.back();
    const auto n = static_cast<double>(x.rows());
    double loss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) loss -= std::log(std::max(p(i, labels[i]), 1e-300));
    loss /= n;
    if (grad == nullptr) return loss;

    const std::size_t layers = m.weights.size();
    grad->weights.assign(layers, {});
    grad->biases.assign(layers, {});
    Eigen::MatrixXd delta = p;
    for (Eigen::Index i = 0; i < x.rows(); ++i) delta(i, labels[i]) -= 1.0;
    delta /= n;
    for (std::size_t l = layers; l-- > 0;) {
        grad->weights[l] = delta.transpose() * acts[l];
        grad->biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Eigen::MatrixXd back = delta * m.weights[l];
            delta = back.array() * (1.0 - acts[l].array().square());
        }
    }
    return loss;
}

struct MlpTrainResult {
    MlpModel model;
    double final_loss = 0.0;
};

/// Full-batch gradient descent. Layer sizes: input, cfg.hidden_units, classes.
inline MlpTrainResult mlp_train(std::span<const FeatureVector> xs, std::span<const int> labels,
                                const std::vector<std::string>& class_names, const TrainConfig& cfg) {
    cfg.validate();
    if (xs.empty() || xs.size() != labels.size()) throw Error(ErrorKind::Data, "MLP needs equal-length, non-empty data");
    const int classes = static_cast<int>(class_names.size());
    if (classes < 2) throw Error(ErrorKind::Data, "MLP needs at least 2 classes");
    std::vector<bool> present(static_cast<std::size_t>(classes), false);
    for (int y : labels) {
        if (y < 0 || y >= classes) throw Error(ErrorKind::Data, "label out of range");
        present[static_cast<std::size_t>(y)] = true;
    }
    int distinct = 0;
    for (bool b : present) distinct += b ? 1 : 0;
    if (distinct < 2) throw Error(ErrorKind::Data, "training data contains a single class");
    const Schema schema = xs.front().schema;
    for (const auto& x : xs)
        if (x.schema != schema || x.size() != xs.front().size()) throw Error(ErrorKind::Schema, "inhomogeneous MLP data");

    const int dim = static_cast<int>(xs.front().size());
    MlpTrainResult res;
    MlpModel& m = res.model;
    m = mlp_init({dim, cfg.hidden_units, classes}, cfg.seed);
    m.schema = schema;
    m.class_names = class_names;

    const Eigen::MatrixXd raw = to_matrix(xs);
    m.input_mean = raw.colwise().mean().transpose();
    Eigen::VectorXd sd = ((raw.rowwise() - m.input_mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
        if (!(sd(j) > 1e-12)) sd(j) = 1.0;
    m.input_scale = sd;
    const Eigen::MatrixXd x = detail::standardize(m, raw);

    MlpGradient g;
    for (int it = 0; it < cfg.mlp_iterations; ++it) {
        mlp_loss_and_gradient(m, x, labels, &g);
        for (std::size_t l = 0; l < m.weights.size(); ++l) {
            m.weights[l] -= cfg.learning_rate * g.weights[l];
            m.biases[l] -= cfg.learning_rate * g.biases[l];
        }
    }
    res.final_loss = mlp_loss_and_gradient(m, x, labels, nullptr);
    return res;
}

/// Class probabilities for one feature vector.
inline std::vector<double> mlp_predict(const MlpModel& m, const FeatureVector& x) {
    if (x.schema != m.schema || static_cast<int>(x.size()) != m.input_dim())
        throw Error(ErrorKind::Schema, "feature vector does not match MLP input");
    Eigen::MatrixXd row(1, m.input_dim());
    for (int j = 0; j < m.input_dim(); ++j) row(0, j) = x[static_cast<std::size_t>(j)];
    const auto acts = detail::forward_all(m, detail::standardize(m, row));
    const auto& p = acts.back();
    return std::vector<double>(p.data(), p.data() + p.size());
}

inline std::size_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& w) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(w.cols()));
        for (Eigen::Index j = 0; j < w.cols(); ++j) r[static_cast<std::size_t>(j)] = w(i, j);
        rows.push_back(r);
    }
    return rows;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j, int expected) {
    auto v = j.get<std::vector<double>>();
    if (static_cast<int>(v.size()) != expected) throw Error(ErrorKind::CorruptModel, "MLP vector has wrong length");
    return Eigen::Map<Eigen::VectorXd>(v.data(), expected);
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const MlpModel& m) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        std::vector<double> b(m.biases[l].data(), m.biases[l].data() + m.biases[l].size());
        layers.push_back({{"weights", detail::matrix_to_json(m.weights[l])}, {"biases", b}});
    }
    j = {{"type", "mlp"},
         {"schema", schema_manifest(m.schema)},
         {"activation", "tanh"},
         {"output", "softmax"},
         {"layer_sizes", m.layer_sizes},
         {"class_names", m.class_names},
         {"standardization",
          {{"mean", std::vector<double>(m.input_mean.data(), m.input_mean.data() + m.input_mean.size())},
           {"scale", std::vector<double>(m.input_scale.data(), m.input_scale.data() + m.input_scale.size())}}},
         {"layers", layers}};
}

inline void from_json(const nlohmann::json& j, MlpModel& m) {
    try {
        if (j.at("type") != "mlp" || j.at("activation") != "tanh" || j.at("output") != "softmax")
            throw Error(ErrorKind::CorruptModel, "not a tanh/softmax MLP document");
        m.schema = check_manifest(j.at("schema"));
        m.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
        if (m.layer_sizes.size() < 2 || m.layer_sizes.front() != static_cast<int>(schema_length(m.schema)))
            throw Error(ErrorKind::CorruptModel, "MLP input layer disagrees with schema");
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        if (static_cast<int>(m.class_names.size()) != m.layer_sizes.back())
            throw Error(ErrorKind::CorruptModel, "class name count disagrees with output layer");
        m.input_mean = detail::vector_from_json(j.at("standardization").at("mean"), m.input_dim());
        m.input_scale = detail::vector_from_json(j.at("standardization").at("scale"), m.input_dim());
        const auto& layers = j.at("layers");
        if (layers.size() + 1 != m.layer_sizes.size()) throw Error(ErrorKind::CorruptModel, "MLP layer count mismatch");
        m.weights.clear();
        m.biases.clear();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const int in = m.layer_sizes[l], out = m.layer_sizes[l + 1];
            const auto rows = layers[l].at("weights").get<std::vector<std::vector<double>>>();
            if (static_cast<int>(rows.size()) != out) throw Error(ErrorKind::CorruptModel, "MLP weight rows mismatch");
            Eigen::MatrixXd w(out, in);
            for (int r = 0; r < out; ++r) {
                if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != in)
                    throw Error(ErrorKind::CorruptModel, "MLP weight cols mismatch");
                for (int c = 0; c < in; ++c) w(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            }
            m.weights.push_back(std::move(w));
            m.biases.push_back(detail::vector_from_json(layers[l].at("biases"), out));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptModel, std::string("MLP document: ") + e.what());
    }
    for (const auto& w : m.weights)
        if (!w.allFinite()) throw Error(ErrorKind::CorruptModel, "MLP weights not finite");
}

}  // namespace actmon

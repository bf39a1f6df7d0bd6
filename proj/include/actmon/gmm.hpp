#pragma once

// Diagonal-covariance Gaussian mixtures fitted by expectation-maximization.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/features.hpp"
#include "actmon/train_config.hpp"

namespace actmon {

struct GmmComponent {
    double weight = 1.0;
    std::vector<double> mean;
    std::vector<double> var;  // diagonal covariance

    bool operator==(const GmmComponent&) const = default;
};

struct GmmModel {
    std::string class_label;
    Schema schema = Schema::Activity;
    std::size_t dim = 0;
    std::vector<GmmComponent> components;

    bool operator==(const GmmModel&) const = default;
};

struct GmmFitResult {
    GmmModel model;
    std::vector<double> loglik;  // total data log-likelihood before each M-step
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) m = std::max(m, x);
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

inline double log_gaussian_diag(std::span<const double> x, const GmmComponent& c) {
    constexpr double log_2pi = 1.8378770664093454835606594728112;  // log(2*pi)
    double acc = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = x[d] - c.mean[d];
        acc += log_2pi + std::log(c.var[d]) + diff * diff / c.var[d];
    }
    return -0.5 * acc;
}

}  // namespace detail

/// log p(x | model), evaluated with log-sum-exp so it stays finite.
inline double gmm_loglik(const GmmModel& m, std::span<const double> x) {
    if (x.size() != m.dim) throw Error(ErrorKind::Schema, "feature dimension does not match GMM");
    std::vector<double> terms;
    terms.reserve(m.components.size());
    for (const auto& c : m.components) terms.push_back(std::log(c.weight) + detail::log_gaussian_diag(x, c));
    return detail::log_sum_exp(terms);
}

inline double gmm_loglik(const GmmModel& m, const FeatureVector& x) {
    if (x.schema != m.schema) throw Error(ErrorKind::Schema, "feature schema does not match GMM");
    return gmm_loglik(m, std::span(x.values));
}

namespace detail {

/// Farthest-point-first seeding: the first centre is drawn with the seeded
/// RNG; every next centre is the sample farthest (variance-normalized) from
/// the centres chosen so far, lowest index on ties.
inline std::vector<std::size_t> farthest_point_seeds(const std::vector<std::vector<double>>& xs,
                                                     const std::vector<double>& scale, int k,
                                                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
    std::vector<std::size_t> seeds{pick(rng)};
    std::vector<double> best(xs.size(), std::numeric_limits<double>::infinity());
    while (static_cast<int>(seeds.size()) < k) {
        const auto& c = xs[seeds.back()];
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double d = 0.0;
            for (std::size_t j = 0; j < c.size(); ++j) d += (xs[i][j] - c[j]) * (xs[i][j] - c[j]) / scale[j];
            best[i] = std::min(best[i], d);
        }
        std::size_t arg = 0;
        for (std::size_t i = 1; i < xs.size(); ++i)
            if (best[i] > best[arg]) arg = i;
        seeds.push_back(arg);
    }
    return seeds;
}

}  // namespace detail

inline GmmFitResult gmm_fit_detailed(std::span<const FeatureVector> samples, int k, const TrainConfig& cfg) {
    cfg.validate();
    if (k < 1) throw Error(ErrorKind::Parameter, "k must be >= 1");
    if (samples.size() < static_cast<std::size_t>(k))
        throw Error(ErrorKind::Data, "need at least k samples to fit " + std::to_string(k) + " components");
    const Schema schema = samples.front().schema;
    const std::size_t dim = samples.front().size();
    if (dim == 0) throw Error(ErrorKind::Data, "zero-dimensional features");
    std::vector<std::vector<double>> xs;
    xs.reserve(samples.size());
    for (const auto& s : samples) {
        if (s.schema != schema || s.size() != dim) throw Error(ErrorKind::Schema, "inhomogeneous GMM training data");
        xs.push_back(s.values);
    }
    const std::size_t n = xs.size();
    const double floor = cfg.variance_floor;

    std::vector<double> gmean(dim, 0.0), gvar(dim, 0.0);
    for (const auto& x : xs)
        for (std::size_t d = 0; d < dim; ++d) gmean[d] += x[d];
    for (double& v : gmean) v /= static_cast<double>(n);
    for (const auto& x : xs)
        for (std::size_t d = 0; d < dim; ++d) gvar[d] += (x[d] - gmean[d]) * (x[d] - gmean[d]);
    for (double& v : gvar) v = std::max(v / static_cast<double>(n), floor);

    GmmFitResult res;
    GmmModel& m = res.model;
    m.schema = schema;
    m.dim = dim;
    for (std::size_t idx : detail::farthest_point_seeds(xs, gvar, k, cfg.seed))
        m.components.push_back({1.0 / k, xs[idx], gvar});

    std::vector<double> resp(n * static_cast<std::size_t>(k));
    std::vector<double> terms(static_cast<std::size_t>(k));
    for (int it = 0; it < cfg.max_iterations; ++it) {
        // E-step
        double ll = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int c = 0; c < k; ++c)
                terms[c] = std::log(m.components[c].weight) + detail::log_gaussian_diag(xs[i], m.components[c]);
            const double lse = detail::log_sum_exp(terms);
            ll += lse;
            for (int c = 0; c < k; ++c) resp[i * k + c] = std::exp(terms[c] - lse);
        }
        if (!res.loglik.empty()) {
            const double prev = res.loglik.back();
            if (ll - prev < cfg.tolerance * std::max(1.0, std::abs(prev))) {
                res.loglik.push_back(ll);
                res.converged = true;
                break;
            }
        }
        res.loglik.push_back(ll);

        // M-step
        for (int c = 0; c < k; ++c) {
            double nk = 0.0;
            for (std::size_t i = 0; i < n; ++i) nk += resp[i * k + c];
            auto& comp = m.components[c];
            if (nk < 1e-12) {
                // starved component: keep its parameters, give it a token weight
                comp.weight = 1e-12;
                continue;
            }
            std::fill(comp.mean.begin(), comp.mean.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t d = 0; d < dim; ++d) comp.mean[d] += resp[i * k + c] * xs[i][d];
            for (double& v : comp.mean) v /= nk;
            std::fill(comp.var.begin(), comp.var.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t d = 0; d < dim; ++d) {
                    const double diff = xs[i][d] - comp.mean[d];
                    comp.var[d] += resp[i * k + c] * diff * diff;
                }
            for (double& v : comp.var) v = std::max(v / nk, floor);
            comp.weight = nk / static_cast<double>(n);
        }
        double wsum = 0.0;
        for (const auto& c : m.components) wsum += c.weight;
        for (auto& c : m.components) c.weight /= wsum;
        res.iterations = it + 1;
    }
    return res;
}

inline GmmModel gmm_fit(std::span<const FeatureVector> samples, int k, const TrainConfig& cfg) {
    return gmm_fit_detailed(samples, k, cfg).model;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const GmmModel& m) {
    nlohmann::json comps = nlohmann::json::array();
    for (const auto& c : m.components) comps.push_back({{"weight", c.weight}, {"mean", c.mean}, {"var", c.var}});
    j = {{"type", "gmm"}, {"class_label", m.class_label}, {"schema", schema_manifest(m.schema)},
         {"dim", m.dim},  {"components", comps}};
}

inline void from_json(const nlohmann::json& j, GmmModel& m) {
    try {
        if (j.at("type") != "gmm") throw Error(ErrorKind::CorruptModel, "not a GMM document");
        m.class_label = j.at("class_label").get<std::string>();
        m.schema = check_manifest(j.at("schema"));
        m.dim = j.at("dim").get<std::size_t>();
        m.components.clear();
        for (const auto& c : j.at("components"))
            m.components.push_back({c.at("weight").get<double>(), c.at("mean").get<std::vector<double>>(),
                                    c.at("var").get<std::vector<double>>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptModel, std::string("GMM document: ") + e.what());
    }
    if (m.dim != schema_length(m.schema) || m.components.empty())
        throw Error(ErrorKind::CorruptModel, "GMM dimension or component count invalid");
    double wsum = 0.0;
    for (const auto& c : m.components) {
        if (c.mean.size() != m.dim || c.var.size() != m.dim || !(c.weight > 0.0))
            throw Error(ErrorKind::CorruptModel, "GMM component malformed");
        for (double v : c.var)
            if (!(v > 0.0)) throw Error(ErrorKind::CorruptModel, "GMM variance not positive");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw Error(ErrorKind::CorruptModel, "GMM weights do not sum to 1");
}

}  // namespace actmon

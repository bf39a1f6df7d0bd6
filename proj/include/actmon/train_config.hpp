#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"

namespace actmon {

/// Shared knobs for GMM (EM) and MLP (gradient descent) training. A fixed
/// seed makes training deterministic.
struct TrainConfig {
    int max_iterations = 200;  // EM iterations; MLP uses mlp_iterations
    double tolerance = 1e-6;   // relative log-likelihood improvement
    std::uint64_t seed = 1;
    int k = 2;
    double variance_floor = 1e-6;
    double learning_rate = 0.05;
    int mlp_iterations = 5000;
    int hidden_units = 16;

    void validate() const {
        if (max_iterations < 0 || mlp_iterations < 0) throw Error(ErrorKind::Parameter, "iterations must be >= 0");
        if (!(tolerance > 0.0) || !(variance_floor > 0.0) || !(learning_rate > 0.0))
            throw Error(ErrorKind::Parameter, "tolerance, variance floor and learning rate must be positive");
        if (k < 1 || hidden_units < 1) throw Error(ErrorKind::Parameter, "k and hidden_units must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"max_iterations", c.max_iterations}, {"tolerance", c.tolerance},   {"seed", c.seed},
         {"k", c.k},                           {"variance_floor", c.variance_floor},
         {"learning_rate", c.learning_rate},   {"mlp_iterations", c.mlp_iterations},
         {"hidden_units", c.hidden_units}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    TrainConfig d;
    c.max_iterations = j.value("max_iterations", d.max_iterations);
    c.tolerance = j.value("tolerance", d.tolerance);
    c.seed = j.value("seed", d.seed);
    c.k = j.value("k", d.k);
    c.variance_floor = j.value("variance_floor", d.variance_floor);
    c.learning_rate = j.value("learning_rate", d.learning_rate);
    c.mlp_iterations = j.value("mlp_iterations", d.mlp_iterations);
    c.hidden_units = j.value("hidden_units", d.hidden_units);
}

}  // namespace actmon

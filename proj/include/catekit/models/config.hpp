// Estimator kinds and training / architecture configuration.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace catekit {

enum class EstimatorKind { tlearner, tarnet, cfr_mmd, dragonnet, cevae };

inline const char* to_string(EstimatorKind k) {
    switch (k) {
        case EstimatorKind::tlearner: return "tlearner";
        case EstimatorKind::tarnet: return "tarnet";
        case EstimatorKind::cfr_mmd: return "cfr_mmd";
        case EstimatorKind::dragonnet: return "dragonnet";
        case EstimatorKind::cevae: return "cevae";
    }
    return "?";
}

inline EstimatorKind parse_estimator_kind(const std::string& s) {
    if (s == "tlearner") return EstimatorKind::tlearner;
    if (s == "tarnet") return EstimatorKind::tarnet;
    if (s == "cfr_mmd") return EstimatorKind::cfr_mmd;
    if (s == "dragonnet") return EstimatorKind::dragonnet;
    if (s == "cevae") return EstimatorKind::cevae;
    throw std::invalid_argument("unknown estimator kind: " + s);
}

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t max_epochs = 2000;
    std::size_t patience = 50;
    double min_delta = 0.0;  // validation improvement below this does not reset patience
    double dropout_hidden = 0.1;
    double dropout_pre_output = 0.5;
    double weight_decay_scale = 1.0;  // decay = scale / n_train
    std::size_t mc_samples = 100;
    std::size_t batch_size = 100;
    double validation_fraction = 0.3;
    std::uint64_t seed = 0;

    void validate() const {
        if (learning_rate <= 0.0) throw std::invalid_argument("learning_rate must be positive");
        if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
        if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
        if (mc_samples == 0) throw std::invalid_argument("mc_samples must be positive");
        if (validation_fraction <= 0.0 || validation_fraction >= 1.0) {
            throw std::invalid_argument("validation_fraction must be in (0,1)");
        }
        if (dropout_hidden < 0.0 || dropout_hidden >= 1.0 || dropout_pre_output < 0.0 ||
            dropout_pre_output >= 1.0) {
            throw std::invalid_argument("dropout probabilities must be in [0,1)");
        }
        if (weight_decay_scale < 0.0) throw std::invalid_argument("weight_decay_scale must be >= 0");
    }
};

struct ModelConfig {
    std::size_t tlearner_depth = 5;
    std::size_t tlearner_width = 200;
    std::size_t trunk_depth = 3;
    std::size_t trunk_width = 200;
    std::size_t head_depth = 2;
    std::size_t head_width = 100;
    double mmd_weight = 1.0;     // used when kind == cfr_mmd
    double mmd_bandwidth = 0.0;  // RBF bandwidth; 0 = per-batch median heuristic
    std::size_t cevae_hidden_depth = 2;
    std::size_t cevae_hidden_width = 200;
    std::size_t latent_dim = 20;
    bool negative_sampling = false;
    double cevae_learning_rate = 0.0;  // 0 = inherit TrainConfig.learning_rate

    void validate() const {
        if (tlearner_depth == 0 || trunk_depth == 0 || head_depth == 0 || cevae_hidden_depth == 0) {
            throw std::invalid_argument("network depths must be positive");
        }
        if (tlearner_width == 0 || trunk_width == 0 || head_width == 0 || cevae_hidden_width == 0) {
            throw std::invalid_argument("network widths must be positive");
        }
        if (latent_dim == 0) throw std::invalid_argument("latent_dim must be positive");
        if (mmd_weight < 0.0) throw std::invalid_argument("mmd_weight must be >= 0");
    }
};

}  // namespace catekit

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "bflsim/data.hpp"
#include "bflsim/params.hpp"

namespace bfl {

enum class ModelKind { logistic, mlp };

// Parameter layout. logistic: row c = [w_c(0..F-1), b_c].
// mlp: hidden rows [W1_j(0..F-1), b1_j] for j < H, then output rows
// [W2_c(0..H-1), b2_c]. ReLU hidden activation, softmax output.
struct ModelSpec {
    ModelKind kind = ModelKind::logistic;
    std::size_t feature_dim = 0;
    std::size_t num_classes = 0;
    std::size_t hidden_dim = 32;

    std::size_t param_dim() const noexcept;
    void validate() const;
};

enum class InitKind { zeros, he_normal };

struct TrainConfig {
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t local_steps = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct LossGrad {
    double loss = 0.0;
    ParamVector gradient;
};

// Loss and gradient of some model on a batch; lets SGD run against stub
// models in tests.
using GradientFn = std::function<LossGrad(std::span<const double> params, const Dataset& batch)>;

struct LocalResult {
    ParamVector params;
    double mean_loss = 0.0;  // mean minibatch loss over the local steps
};

namespace model {

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

ParamVector initial_params(const ModelSpec& spec, InitKind init, std::uint64_t seed);

/// Mean softmax cross-entropy over the batch and its exact gradient.
LossGrad loss_and_gradient(const ModelSpec& spec, std::span<const double> params, const Dataset& batch);

// Same, restricted to data rows listed in `rows`.
LossGrad loss_and_gradient(const ModelSpec& spec, std::span<const double> params, const Dataset& data,
                           std::span<const std::size_t> rows);

// Class scores for one sample.
std::vector<double> logits(const ModelSpec& spec, std::span<const double> params, std::span<const double> x);

// argmax of logits, ties toward the smallest class id.
std::uint32_t predict(const ModelSpec& spec, std::span<const double> params, std::span<const double> x);

/// `local_steps` SGD steps from `start`, each on a fresh minibatch of
/// min(batch_size, |data|) distinct rows. The minibatch stream is keyed by
/// (cfg.seed, round, client_id).
LocalResult local_train(const GradientFn& fn, const ParamVector& start, const Dataset& data, const TrainConfig& cfg,
                        std::uint64_t round, std::uint64_t client_id);

LocalResult local_train(const ModelSpec& spec, const ParamVector& start, const Dataset& data, const TrainConfig& cfg,
                        std::uint64_t round, std::uint64_t client_id);

ParamVector local_update(const ModelSpec& spec, const ParamVector& global_params, const Dataset& data,
                         const TrainConfig& cfg, std::uint64_t round, std::uint64_t client_id);

/// Fraction of misclassified samples.
double test_error(const ModelSpec& spec, std::span<const double> params, const Dataset& test);

}  // namespace model
}  // namespace bfl

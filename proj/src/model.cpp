#include "bflsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "bflsim/errors.hpp"
#include "bflsim/rng.hpp"

namespace bfl {

std::size_t ModelSpec::param_dim() const noexcept {
    switch (kind) {
        case ModelKind::logistic:
            return (feature_dim + 1) * num_classes;
        case ModelKind::mlp:
            return (feature_dim + 1) * hidden_dim + (hidden_dim + 1) * num_classes;
    }
    return 0;
}

void ModelSpec::validate() const {
    if (feature_dim == 0 || num_classes < 2) {
        throw ConfigError("model needs feature_dim >= 1 and num_classes >= 2");
    }
    if (kind == ModelKind::mlp && hidden_dim == 0) {
        throw ConfigError("mlp hidden_dim must be positive");
    }
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be positive");
    }
    if (batch_size == 0) {
        throw ConfigError("batch_size must be positive");
    }
}

namespace model {

namespace {

void check_params(const ModelSpec& spec, std::span<const double> params) {
    if (params.size() != spec.param_dim()) {
        throw DimensionError("model expects " + std::to_string(spec.param_dim()) + " parameters, got " +
                             std::to_string(params.size()));
    }
}

void check_data(const ModelSpec& spec, const Dataset& data) {
    if (data.feature_dim != spec.feature_dim) {
        throw DimensionError("model feature_dim " + std::to_string(spec.feature_dim) + " vs data " +
                             std::to_string(data.feature_dim));
    }
}

// out[r] = W[r, 0..in) . x + W[r, in] for every row r.
void affine(std::span<const double> weights, std::size_t rows, std::size_t in, std::span<const double> x,
            std::span<double> out) {
    const std::size_t stride = in + 1;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* w = weights.data() + r * stride;
        double s = w[in];
        for (std::size_t k = 0; k < in; ++k) {
            s += w[k] * x[k];
        }
        out[r] = s;
    }
}

// Replaces logits by softmax probabilities; returns log-sum-exp. Loss is
// taken as lse - z_y so it stays accurate when p_y underflows.
double softmax_inplace(std::span<double> z) {
    const double zmax = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (auto& v : z) {
        v = std::exp(v - zmax);
        sum += v;
    }
    for (auto& v : z) {
        v /= sum;
    }
    return zmax + std::log(sum);
}

struct Workspace {
    std::vector<double> hidden;
    std::vector<double> scores;
    std::vector<double> dhidden;
};

// Adds the gradient of one sample's loss into `grad`; returns that loss.
double accumulate_sample(const ModelSpec& spec, std::span<const double> params, std::span<const double> x,
                         std::uint32_t y, std::span<double> grad, Workspace& ws) {
    const std::size_t f = spec.feature_dim;
    const std::size_t m = spec.num_classes;
    ws.scores.resize(m);

    if (spec.kind == ModelKind::logistic) {
        affine(params, m, f, x, ws.scores);
        const double z_y = ws.scores[y];
        const double sample_loss = softmax_inplace(ws.scores) - z_y;
        for (std::size_t c = 0; c < m; ++c) {
            const double dz = ws.scores[c] - (c == y ? 1.0 : 0.0);
            double* g = grad.data() + c * (f + 1);
            for (std::size_t k = 0; k < f; ++k) {
                g[k] += dz * x[k];
            }
            g[f] += dz;
        }
        return sample_loss;
    }

    const std::size_t h = spec.hidden_dim;
    const auto w1 = params.first((f + 1) * h);
    const auto w2 = params.subspan((f + 1) * h);
    ws.hidden.resize(h);
    ws.dhidden.assign(h, 0.0);

    affine(w1, h, f, x, ws.hidden);
    for (auto& v : ws.hidden) {
        v = std::max(v, 0.0);
    }
    affine(w2, m, h, ws.hidden, ws.scores);

    const double z_y = ws.scores[y];
    const double lse = softmax_inplace(ws.scores);
    const double sample_loss = lse - z_y;

    auto g1 = grad.first((f + 1) * h);
    auto g2 = grad.subspan((f + 1) * h);
    for (std::size_t c = 0; c < m; ++c) {
        const double dz = ws.scores[c] - (c == y ? 1.0 : 0.0);
        const double* w = w2.data() + c * (h + 1);
        double* g = g2.data() + c * (h + 1);
        for (std::size_t j = 0; j < h; ++j) {
            g[j] += dz * ws.hidden[j];
            ws.dhidden[j] += dz * w[j];
        }
        g[h] += dz;
    }
    for (std::size_t j = 0; j < h; ++j) {
        if (ws.hidden[j] <= 0.0) {
            continue;
        }
        const double da = ws.dhidden[j];
        double* g = g1.data() + j * (f + 1);
        for (std::size_t k = 0; k < f; ++k) {
            g[k] += da * x[k];
        }
        g[f] += da;
    }
    return sample_loss;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::logistic ? "logistic" : "mlp";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "logistic") {
        return ModelKind::logistic;
    }
    if (name == "mlp") {
        return ModelKind::mlp;
    }
    throw ConfigError("unknown model kind '" + std::string(name) + "'");
}

ParamVector initial_params(const ModelSpec& spec, InitKind init, std::uint64_t seed) {
    spec.validate();
    ParamVector out(spec.param_dim(), 0.0);
    if (init == InitKind::zeros) {
        return out;
    }
    auto engine = rng::make_engine(seed, rng::Stream::init);
    // He-normal weights per layer; biases stay zero.
    auto fill_layer = [&](std::span<double> layer, std::size_t rows, std::size_t in) {
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t k = 0; k < in; ++k) {
                layer[r * (in + 1) + k] = normal(engine);
            }
        }
    };
    const std::size_t f = spec.feature_dim;
    if (spec.kind == ModelKind::logistic) {
        fill_layer(out, spec.num_classes, f);
    } else {
        const std::size_t h = spec.hidden_dim;
        std::span<double> all(out);
        fill_layer(all.first((f + 1) * h), h, f);
        fill_layer(all.subspan((f + 1) * h), spec.num_classes, h);
    }
    return out;
}

LossGrad loss_and_gradient(const ModelSpec& spec, std::span<const double> params, const Dataset& data,
                           std::span<const std::size_t> rows) {
    check_params(spec, params);
    check_data(spec, data);
    if (rows.empty()) {
        throw InsufficientPopulationError("loss_and_gradient: empty batch");
    }
    LossGrad out;
    out.gradient.assign(params.size(), 0.0);
    Workspace ws;
    double total = 0.0;
    for (std::size_t i : rows) {
        const auto y = data.labels[i];
        if (y >= spec.num_classes) {
            throw ConsistencyError("label " + std::to_string(y) + " outside model's class range");
        }
        total += accumulate_sample(spec, params, data.row(i), y, out.gradient, ws);
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (auto& g : out.gradient) {
        g *= inv;
    }
    out.loss = total * inv;
    return out;
}

LossGrad loss_and_gradient(const ModelSpec& spec, std::span<const double> params, const Dataset& batch) {
    std::vector<std::size_t> rows(batch.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return loss_and_gradient(spec, params, batch, rows);
}

std::vector<double> logits(const ModelSpec& spec, std::span<const double> params, std::span<const double> x) {
    check_params(spec, params);
    if (x.size() != spec.feature_dim) {
        throw DimensionError("sample has " + std::to_string(x.size()) + " features, model expects " +
                             std::to_string(spec.feature_dim));
    }
    std::vector<double> scores(spec.num_classes);
    if (spec.kind == ModelKind::logistic) {
        affine(params, spec.num_classes, spec.feature_dim, x, scores);
        return scores;
    }
    const std::size_t f = spec.feature_dim;
    const std::size_t h = spec.hidden_dim;
    std::vector<double> hidden(h);
    affine(params.first((f + 1) * h), h, f, x, hidden);
    for (auto& v : hidden) {
        v = std::max(v, 0.0);
    }
    affine(params.subspan((f + 1) * h), spec.num_classes, h, hidden, scores);
    return scores;
}

std::uint32_t predict(const ModelSpec& spec, std::span<const double> params, std::span<const double> x) {
    const auto scores = logits(spec, params, x);
    // max_element returns the first maximum, i.e. the smallest class id.
    return static_cast<std::uint32_t>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

LocalResult local_train(const GradientFn& fn, const ParamVector& start, const Dataset& data, const TrainConfig& cfg,
                        std::uint64_t round, std::uint64_t client_id) {
    cfg.validate();
    LocalResult out{start, 0.0};
    if (cfg.local_steps == 0) {
        return out;
    }
    if (data.empty()) {
        throw InsufficientPopulationError("local_update: client " + std::to_string(client_id) +
                                          " has no local data");
    }
    auto engine = rng::make_engine(cfg.seed, rng::Stream::local_training, {round, client_id});
    const std::size_t b = std::min(cfg.batch_size, data.size());

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < cfg.local_steps; ++step) {
        // Partial Fisher-Yates: the first b entries become a uniform sample.
        for (std::size_t i = 0; i < b; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
            std::swap(order[i], order[pick(engine)]);
        }
        const Dataset batch = data.subset(std::span<const std::size_t>(order).first(b));
        const LossGrad lg = fn(out.params, batch);
        if (lg.gradient.size() != out.params.size()) {
            throw DimensionError("gradient length does not match parameter length");
        }
        for (std::size_t k = 0; k < out.params.size(); ++k) {
            out.params[k] -= cfg.learning_rate * lg.gradient[k];
        }
        loss_sum += lg.loss;
    }
    out.mean_loss = loss_sum / static_cast<double>(cfg.local_steps);
    params::require_finite(out.params, "locally trained model");
    return out;
}

LocalResult local_train(const ModelSpec& spec, const ParamVector& start, const Dataset& data, const TrainConfig& cfg,
                        std::uint64_t round, std::uint64_t client_id) {
    check_params(spec, start);
    const GradientFn fn = [&spec](std::span<const double> p, const Dataset& batch) {
        return loss_and_gradient(spec, p, batch);
    };
    return local_train(fn, start, data, cfg, round, client_id);
}

ParamVector local_update(const ModelSpec& spec, const ParamVector& global_params, const Dataset& data,
                         const TrainConfig& cfg, std::uint64_t round, std::uint64_t client_id) {
    return local_train(spec, global_params, data, cfg, round, client_id).params;
}

double test_error(const ModelSpec& spec, std::span<const double> params, const Dataset& test) {
    if (test.empty()) {
        throw ConfigError("test_error: empty test set");
    }
    check_params(spec, params);
    check_data(spec, test);
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        if (predict(spec, params, test.row(i)) != test.labels[i]) {
            ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(test.size());
}

}  // namespace model
}  // namespace bfl

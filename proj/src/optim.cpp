#include "gravilon/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "gravilon/error.hpp"

namespace gravilon::optim {

std::size_t layout_size(const Layout& layout) {
    return std::accumulate(layout.begin(), layout.end(), std::size_t{0},
                           [](std::size_t acc, const Segment& s) { return acc + s.size(); });
}

template <typename Tag>
FlatVector<Tag>::FlatVector(std::vector<double> values, Layout layout)
    : values_(std::move(values)), layout_(std::move(layout)) {
    if (layout_size(layout_) != values_.size()) {
        std::ostringstream msg;
        msg << "flat vector of length " << values_.size() << " does not match layout of size "
            << layout_size(layout_);
        throw ContractError(msg.str());
    }
}

template <typename Tag>
FlatVector<Tag> FlatVector<Tag>::plain(std::vector<double> values) {
    Layout layout{{"x", values.size(), 1}};
    return FlatVector(std::move(values), std::move(layout));
}

template class FlatVector<ParamsTag>;
template class FlatVector<GradsTag>;

namespace {

constexpr Method kAllMethods[] = {Method::sgd,    Method::adagrad,  Method::adam,
                                  Method::adamax, Method::nadam,    Method::rmsprop,
                                  Method::gravilon, Method::gravilon_momentum};

void require_finite(std::span<const double> values, const char* what) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            std::ostringstream msg;
            msg << what << " entry " << i << " is not finite";
            throw InvalidInput(msg.str());
        }
    }
}

void require_finite_loss(double loss) {
    if (!std::isfinite(loss)) throw InvalidInput("loss is not finite");
    if (loss < 0.0) throw InvalidInput("loss must be nonnegative");
}

void check_inputs(const FlatParams& params, const FlatGrads& grads) {
    if (params.layout() != grads.layout()) {
        throw ContractError("parameter and gradient layouts differ");
    }
    require_finite(grads.values(), "gradient");
    require_finite(params.values(), "parameter");
}

void require_method(const OptimizerState& state, Method expected) {
    if (state.method != expected) {
        std::ostringstream msg;
        msg << "optimizer state is for " << to_string(state.method) << ", expected "
            << to_string(expected);
        throw ContractError(msg.str());
    }
}

std::vector<double>& buffer(std::optional<std::vector<double>>& slot, std::size_t n,
                            double fill = 0.0) {
    if (!slot) slot.emplace(n, fill);
    if (slot->size() != n) throw ContractError("optimizer buffer size does not match parameters");
    return *slot;
}

}  // namespace

std::string_view to_string(Method method) {
    switch (method) {
        case Method::sgd: return "sgd";
        case Method::adagrad: return "adagrad";
        case Method::adam: return "adam";
        case Method::adamax: return "adamax";
        case Method::nadam: return "nadam";
        case Method::rmsprop: return "rmsprop";
        case Method::gravilon: return "gravilon";
        case Method::gravilon_momentum: return "gravilon_momentum";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    for (Method m : kAllMethods) {
        if (to_string(m) == name) return m;
    }
    throw InvalidInput("unknown optimizer method '" + std::string(name) + "'");
}

HyperParams default_hyper(Method method) {
    HyperParams h;
    switch (method) {
        case Method::sgd:
            h.alpha = 1e-3;
            break;
        case Method::adagrad:
            h.alpha = 1e-3;
            h.initial_accumulator = 0.1;
            h.epsilon = 1e-7;
            break;
        case Method::adam:
        case Method::adamax:
        case Method::nadam:
            h.alpha = 1e-3;
            h.beta1 = 0.9;
            h.beta2 = 0.999;
            h.epsilon = 1e-7;
            break;
        case Method::rmsprop:
            h.alpha = 1e-3;
            h.rho = 0.9;
            h.epsilon = 1e-7;
            break;
        case Method::gravilon:
            break;
        case Method::gravilon_momentum:
            h.momentum = 0.9;
            h.weight_decay = 5e-4;
            h.beta_scale = 50.0;
            break;
    }
    return h;
}

OptimizerState make_state(Method method, const HyperParams& hyper) {
    OptimizerState state;
    state.method = method;
    state.hyper = hyper;
    return state;
}

OptimizerState make_state(Method method) { return make_state(method, default_hyper(method)); }

OptimizerState gravilon() { return make_state(Method::gravilon, HyperParams{}); }

OptimizerState gravilon_momentum(double momentum, double weight_decay, double beta_scale) {
    HyperParams h;
    h.momentum = momentum;
    h.weight_decay = weight_decay;
    h.beta_scale = beta_scale;
    return make_state(Method::gravilon_momentum, h);
}

OptimizerState sgd(double alpha) {
    HyperParams h;
    h.alpha = alpha;
    return make_state(Method::sgd, h);
}

OptimizerState adagrad(double alpha, double initial_accumulator, double epsilon) {
    HyperParams h;
    h.alpha = alpha;
    h.initial_accumulator = initial_accumulator;
    h.epsilon = epsilon;
    return make_state(Method::adagrad, h);
}

namespace {
HyperParams adam_family(double alpha, double beta1, double beta2, double epsilon) {
    HyperParams h;
    h.alpha = alpha;
    h.beta1 = beta1;
    h.beta2 = beta2;
    h.epsilon = epsilon;
    return h;
}
}  // namespace

OptimizerState adam(double alpha, double beta1, double beta2, double epsilon) {
    return make_state(Method::adam, adam_family(alpha, beta1, beta2, epsilon));
}

OptimizerState adamax(double alpha, double beta1, double beta2, double epsilon) {
    return make_state(Method::adamax, adam_family(alpha, beta1, beta2, epsilon));
}

OptimizerState nadam(double alpha, double beta1, double beta2, double epsilon) {
    return make_state(Method::nadam, adam_family(alpha, beta1, beta2, epsilon));
}

OptimizerState rmsprop(double alpha, double rho, double epsilon) {
    HyperParams h;
    h.alpha = alpha;
    h.rho = rho;
    h.epsilon = epsilon;
    return make_state(Method::rmsprop, h);
}

double squared_norm(std::span<const double> values) {
    double sum = 0.0;
    for (double v : values) sum += v * v;
    return sum;
}

namespace {
double beta_from(double loss, double grad_sq) {
    if (loss == 0.0 || !(grad_sq > kZeroGradientFloor)) return 0.0;
    return loss / grad_sq;
}
}  // namespace

double gravilon_beta(double loss, const FlatGrads& grads) {
    require_finite_loss(loss);
    require_finite(grads.values(), "gradient");
    return beta_from(loss, squared_norm(grads.values()));
}

FlatParams gravilon_step(const FlatParams& params, const FlatGrads& grads, double loss) {
    check_inputs(params, grads);
    const double beta = gravilon_beta(loss, grads);
    FlatParams next = params;
    auto out = next.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= beta * g[i];
    return next;
}

StepResult gravilon_momentum_step(OptimizerState state, const FlatParams& params,
                                  const FlatGrads& grads, double loss) {
    require_method(state, Method::gravilon_momentum);
    check_inputs(params, grads);
    require_finite_loss(loss);
    const auto& h = state.hyper;
    const std::size_t n = params.size();
    auto theta = params.values();
    auto g = grads.values();

    std::vector<double> regularized(n);
    for (std::size_t i = 0; i < n; ++i) regularized[i] = g[i] + h.weight_decay * theta[i];
    const double beta = h.beta_scale * beta_from(loss, squared_norm(regularized));

    auto& buf = buffer(state.momentum_buf, n);
    FlatParams next = params;
    auto out = next.values();
    for (std::size_t i = 0; i < n; ++i) {
        buf[i] = h.momentum * buf[i] + regularized[i];
        out[i] -= beta * buf[i];
    }
    ++state.step_count;
    return {std::move(state), std::move(next), beta};
}

StepResult sgd_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads) {
    require_method(state, Method::sgd);
    check_inputs(params, grads);
    const double alpha = state.hyper.alpha;
    FlatParams next = params;
    auto out = next.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= alpha * g[i];
    ++state.step_count;
    return {std::move(state), std::move(next), alpha};
}

StepResult adagrad_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads) {
    require_method(state, Method::adagrad);
    check_inputs(params, grads);
    const auto& h = state.hyper;
    auto& acc = buffer(state.accumulator, params.size(), h.initial_accumulator);
    FlatParams next = params;
    auto out = next.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        acc[i] += g[i] * g[i];
        out[i] -= h.alpha * g[i] / (std::sqrt(acc[i]) + h.epsilon);
    }
    ++state.step_count;
    return {std::move(state), std::move(next), h.alpha};
}

StepResult adam_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads) {
    require_method(state, Method::adam);
    check_inputs(params, grads);
    const auto& h = state.hyper;
    const std::size_t n = params.size();
    auto& m = buffer(state.moment1, n);
    auto& v = buffer(state.moment2, n);
    const auto t = static_cast<double>(++state.step_count);
    const double m_correction = 1.0 - std::pow(h.beta1, t);
    const double v_correction = 1.0 - std::pow(h.beta2, t);

    FlatParams next = params;
    auto out = next.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        const double m_hat = m[i] / m_correction;
        const double v_hat = v[i] / v_correction;
        out[i] -= h.alpha * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
    return {std::move(state), std::move(next), h.alpha};
}

StepResult adamax_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads) {
    require_method(state, Method::adamax);
    check_inputs(params, grads);
    const auto& h = state.hyper;
    const std::size_t n = params.size();
    auto& m = buffer(state.moment1, n);
    auto& u = buffer(state.moment2, n);
    const auto t = static_cast<double>(++state.step_count);
    const double rate = h.alpha / (1.0 - std::pow(h.beta1, t));

    FlatParams next = params;
    auto out = next.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        u[i] = std::max(h.beta2 * u[i], std::abs(g[i]));
        out[i] -= rate * m[i] / (u[i] + h.epsilon);
    }
    return {std::move(state), std::move(next), h.alpha};
}

namespace {
// Nadam momentum schedule, mu_t = beta1 * (1 - 0.5 * 0.96^(t / 250)).
double nadam_mu(double beta1, double t) { return beta1 * (1.0 - 0.5 * std::pow(0.96, t * 0.004)); }
}  // namespace

StepResult nadam_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads) {
    require_method(state, Method::nadam);
    check_inputs(params, grads);
    const auto& h = state.hyper;
    const std::size_t n = params.size();
    auto& m = buffer(state.moment1, n);
    auto& v = buffer(state.moment2, n);
    const auto t = static_cast<double>(++state.step_count);
    const double mu_t = nadam_mu(h.beta1, t);
    const double mu_next = nadam_mu(h.beta1, t + 1.0);
    state.momentum_product *= mu_t;
    const double product = state.momentum_product;
    const double product_next = product * mu_next;
    const double v_correction = 1.0 - std::pow(h.beta2, t);

    FlatParams next = params;
    auto out = next.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        const double m_hat =
            mu_next * m[i] / (1.0 - product_next) + (1.0 - mu_t) * g[i] / (1.0 - product);
        const double v_hat = v[i] / v_correction;
        out[i] -= h.alpha * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
    return {std::move(state), std::move(next), h.alpha};
}

StepResult rmsprop_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads) {
    require_method(state, Method::rmsprop);
    check_inputs(params, grads);
    const auto& h = state.hyper;
    auto& v = buffer(state.moment2, params.size());
    FlatParams next = params;
    auto out = next.values();
    auto g = grads.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        v[i] = h.rho * v[i] + (1.0 - h.rho) * g[i] * g[i];
        out[i] -= h.alpha * g[i] / (std::sqrt(v[i]) + h.epsilon);
    }
    ++state.step_count;
    return {std::move(state), std::move(next), h.alpha};
}

StepResult step(OptimizerState state, const FlatParams& params, const FlatGrads& grads,
                double loss) {
    switch (state.method) {
        case Method::sgd: return sgd_step(std::move(state), params, grads);
        case Method::adagrad: return adagrad_step(std::move(state), params, grads);
        case Method::adam: return adam_step(std::move(state), params, grads);
        case Method::adamax: return adamax_step(std::move(state), params, grads);
        case Method::nadam: return nadam_step(std::move(state), params, grads);
        case Method::rmsprop: return rmsprop_step(std::move(state), params, grads);
        case Method::gravilon_momentum:
            return gravilon_momentum_step(std::move(state), params, grads, loss);
        case Method::gravilon: {
            const double beta = gravilon_beta(loss, grads);
            FlatParams next = gravilon_step(params, grads, loss);
            ++state.step_count;
            return {std::move(state), std::move(next), beta};
        }
    }
    throw ContractError("unhandled optimizer method");
}

FlatGrads clip_gradient(const FlatGrads& grads, double threshold) {
    if (!(threshold > 0.0) || !std::isfinite(threshold)) {
        throw InvalidInput("clip threshold must be a positive finite number");
    }
    require_finite(grads.values(), "gradient");
    const double norm = std::sqrt(squared_norm(grads.values()));
    // A few ulps of slack so that clipping an already clipped vector is a no-op.
    if (norm <= threshold * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())) return grads;
    FlatGrads clipped = grads;
    const double scale = threshold / norm;
    for (double& g : clipped.values()) g *= scale;
    return clipped;
}

}  // namespace gravilon::optim

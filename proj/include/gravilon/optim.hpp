#pragma once

// Optimizer update rules over flat parameter/gradient vectors.
//
// Every rule is a pure function: it takes the optimizer state by value,
// returns the advanced state together with the new parameters, and never
// touches anything else. Recurrences implemented (g is the gradient, t the
// 1-based step index, all operations elementwise):
//
//   Gravilon   beta = f / |g|^2                 theta -= beta * g
//   GravilonM  g' = g + wd * theta
//              beta = scale * f / |g'|^2
//              buf = mu * buf + g'              theta -= beta * buf
//   SGD        theta -= alpha * g
//   Adagrad    acc += g^2                       theta -= alpha * g / (sqrt(acc) + eps)
//              (acc starts at initial_accumulator)
//   Adam       m = b1 m + (1-b1) g,  v = b2 v + (1-b2) g^2
//              m^ = m / (1-b1^t),    v^ = v / (1-b2^t)
//              theta -= alpha * m^ / (sqrt(v^) + eps)
//   Adamax     m = b1 m + (1-b1) g,  u = max(b2 u, |g|)
//              theta -= alpha / (1-b1^t) * m / (u + eps)
//   Nadam      mu_t = b1 (1 - 0.5 * 0.96^(t/250)),  P_t = mu_1 ... mu_t
//              m, v as Adam
//              m^ = mu_{t+1} m / (1 - P_t mu_{t+1}) + (1 - mu_t) g / (1 - P_t)
//              v^ = v / (1-b2^t)
//              theta -= alpha * m^ / (sqrt(v^) + eps)
//   RMSprop    v = rho v + (1-rho) g^2          theta -= alpha * g / (sqrt(v) + eps)
//
// For the Gravilon rules the loss f must be nonnegative with minima at height
// zero; beta is then the distance along -g at which the tangent plane of the
// loss surface meets height zero.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gravilon::optim {

struct Segment {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Segment&) const = default;
};

// How a flat vector splits into named matrices.
using Layout = std::vector<Segment>;

std::size_t layout_size(const Layout& layout);

// Flat vector tagged with its role so parameters and gradients cannot be
// swapped by accident.
template <typename Tag>
class FlatVector {
public:
    FlatVector() = default;
    FlatVector(std::vector<double> values, Layout layout);

    // Single n x 1 segment named "x"; convenient for scalar and analytic problems.
    static FlatVector plain(std::vector<double> values);

    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator[](std::size_t i) { return values_[i]; }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    std::vector<double> release() && { return std::move(values_); }
    const Layout& layout() const { return layout_; }

    bool operator==(const FlatVector&) const = default;

private:
    std::vector<double> values_;
    Layout layout_;
};

struct ParamsTag;
struct GradsTag;
using FlatParams = FlatVector<ParamsTag>;
using FlatGrads = FlatVector<GradsTag>;

enum class Method { sgd, adagrad, adam, adamax, nadam, rmsprop, gravilon, gravilon_momentum };

std::string_view to_string(Method method);
// Accepts the names produced by to_string. Throws InvalidInput otherwise.
Method parse_method(std::string_view name);

// Each field is meaningful only for the methods that use it; see default_hyper.
struct HyperParams {
    double alpha = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double rho = 0.0;
    double epsilon = 0.0;
    double initial_accumulator = 0.0;
    double momentum = 0.0;
    double weight_decay = 0.0;
    double beta_scale = 0.0;

    bool operator==(const HyperParams&) const = default;
};

// The MNIST comparison settings: alpha 1e-3 everywhere, beta1 0.9, beta2 0.999,
// eps 1e-7, rho 0.9, Adagrad accumulator 0.1. GravilonM defaults to momentum
// 0.9, weight decay 5e-4 and beta scale 50. Plain Gravilon has none.
HyperParams default_hyper(Method method);

struct OptimizerState {
    Method method = Method::gravilon;
    std::uint64_t step_count = 0;
    std::optional<std::vector<double>> moment1;
    std::optional<std::vector<double>> moment2;
    std::optional<std::vector<double>> accumulator;
    std::optional<std::vector<double>> momentum_buf;
    // Running product of the Nadam momentum schedule.
    double momentum_product = 1.0;
    HyperParams hyper;

    bool operator==(const OptimizerState&) const = default;
};

// Fresh state; buffers are allocated and zeroed (or set to the initial
// accumulator) on the first step, when the parameter size is known.
OptimizerState make_state(Method method, const HyperParams& hyper);
OptimizerState make_state(Method method);

OptimizerState gravilon();
OptimizerState gravilon_momentum(double momentum = 0.9, double weight_decay = 5e-4,
                                 double beta_scale = 50.0);
OptimizerState sgd(double alpha = 1e-3);
OptimizerState adagrad(double alpha = 1e-3, double initial_accumulator = 0.1,
                       double epsilon = 1e-7);
OptimizerState adam(double alpha = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                    double epsilon = 1e-7);
OptimizerState adamax(double alpha = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                      double epsilon = 1e-7);
OptimizerState nadam(double alpha = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                     double epsilon = 1e-7);
OptimizerState rmsprop(double alpha = 1e-3, double rho = 0.9, double epsilon = 1e-7);

struct StepResult {
    OptimizerState state;
    FlatParams params;
    // beta for the Gravilon rules, alpha for the rest.
    double step_scale = 0.0;
};

// Squared norms at or below this are treated as a vanishing gradient.
inline constexpr double kZeroGradientFloor = 0x1.0p-1022;

// loss / |g|^2. Exactly 0 when loss is 0 or when |g|^2 is zero or subnormal
// (no usable direction; the step would be a no-op anyway).
double gravilon_beta(double loss, const FlatGrads& grads);

FlatParams gravilon_step(const FlatParams& params, const FlatGrads& grads, double loss);

StepResult gravilon_momentum_step(OptimizerState state, const FlatParams& params,
                                  const FlatGrads& grads, double loss);

StepResult sgd_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads);
StepResult adagrad_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads);
StepResult adam_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads);
StepResult adamax_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads);
StepResult nadam_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads);
StepResult rmsprop_step(OptimizerState state, const FlatParams& params, const FlatGrads& grads);

// Dispatches on state.method. loss is only read by the Gravilon rules.
StepResult step(OptimizerState state, const FlatParams& params, const FlatGrads& grads,
                double loss);

double squared_norm(std::span<const double> values);

// Global L2-norm clipping over the whole flattened gradient.
FlatGrads clip_gradient(const FlatGrads& grads, double threshold);

}  // namespace gravilon::optim

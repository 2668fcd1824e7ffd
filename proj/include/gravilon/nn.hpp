#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gravilon/data.hpp"
#include "gravilon/matrix.hpp"
#include "gravilon/optim.hpp"

namespace gravilon::nn {

// Fully connected sigmoid network with a softmax output layer. Layer i maps
// width[i] -> width[i + 1] through weights[i] (width[i+1] x width[i]) and
// biases[i] (width[i+1] x 1).
struct ParamSet {
    std::vector<Matrix> weights;
    std::vector<Matrix> biases;

    std::size_t layers() const { return weights.size(); }
    bool operator==(const ParamSet&) const = default;
};

// 784 -> 128 -> 128 -> 10.
inline const std::vector<std::size_t> kMnistWidths{784, 128, 128, 10};

// Glorot-uniform weights, U[-sqrt(6/(fan_in+fan_out)), +sqrt(...)], drawn in
// layer order, row-major, from mt19937_64(seed); biases zero.
ParamSet init_params(std::uint64_t seed, std::span<const std::size_t> widths = kMnistWidths);

ParamSet zero_params(std::span<const std::size_t> widths = kMnistWidths);

// Flat layout: A1, b1, A2, b2, ... named "A<i>" / "b<i>".
optim::Layout layout_of(const ParamSet& params);
optim::FlatParams flatten(const ParamSet& params);
// Writes flat values back into params, which must have a matching layout.
void assign(ParamSet& params, const optim::FlatParams& flat);

// Elementwise 1 / (1 + e^-x), evaluated so that it never overflows.
double sigmoid(double x);
Matrix sigmoid(const Matrix& x);

// Column-wise softmax with per-column max subtraction.
Matrix softmax(const Matrix& x);

struct ForwardTrace {
    Matrix input;                       // features x N
    std::vector<Matrix> pre_activations;  // one per layer, the last are the logits
    std::vector<Matrix> activations;      // hidden sigmoid outputs
    Matrix probs;                       // classes x N, softmax of the logits
};

ForwardTrace forward(const ParamSet& params, const Matrix& batch);

struct LabelBatch {
    std::vector<int> labels;
    Matrix one_hot;  // classes x N
};

LabelBatch make_labels(std::span<const int> labels, std::size_t classes = data::kClasses);

// Probabilities are clamped below at this value before the log.
inline constexpr double kProbabilityFloor = 1e-12;

// Batch mean of -log p[label].
double cross_entropy_loss(const ForwardTrace& trace, const LabelBatch& labels);

// (probs - one_hot) / N, the gradient of the mean loss with respect to the logits.
Matrix output_delta(const ForwardTrace& trace, const LabelBatch& labels);

// Gradient of cross_entropy_loss with respect to every parameter, in layout_of order.
optim::FlatGrads backward(const ParamSet& params, const ForwardTrace& trace,
                          const LabelBatch& labels);

// Argmax per column, lowest index on ties.
std::vector<int> predict(const ParamSet& params, const Matrix& batch);

// Fraction of correctly classified samples. Throws InvalidInput on empty data.
double accuracy(const ParamSet& params, const data::Dataset& data);

struct GradCheckOptions {
    double epsilon = 1e-5;
    std::size_t samples = 50;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<std::size_t> coordinates;
    std::vector<double> analytic;
    std::vector<double> numeric;
};

// |a - n| / max(|a|, |n|), or |a - n| when both magnitudes are below 1e-8.
double relative_error(double analytic, double numeric);

// Central differences of the batch loss (recomputed in long double) at the given flat coordinates,
// compared against the supplied gradient.
GradCheckReport compare_with_finite_differences(const ParamSet& params, const Matrix& batch,
                                                const LabelBatch& labels,
                                                const optim::FlatGrads& grads,
                                                std::span<const std::size_t> coordinates,
                                                double epsilon);

// Samples options.samples distinct coordinates uniformly and checks backward
// against central differences. epsilon must lie in [1e-7, 1e-3].
GradCheckReport grad_check(const ParamSet& params, const Matrix& batch, const LabelBatch& labels,
                           const GradCheckOptions& options = {});

}  // namespace gravilon::nn

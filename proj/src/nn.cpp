#include "gravilon/nn.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "gravilon/error.hpp"
#include "gravilon/random.hpp"

namespace gravilon::nn {

namespace {

void check_widths(std::span<const std::size_t> widths) {
    if (widths.size() < 2) throw InvalidInput("a network needs at least input and output widths");
    for (auto w : widths) {
        if (w == 0) throw InvalidInput("layer widths must be positive");
    }
}

}  // namespace

ParamSet zero_params(std::span<const std::size_t> widths) {
    check_widths(widths);
    ParamSet p;
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        p.weights.emplace_back(widths[i + 1], widths[i]);
        p.biases.emplace_back(widths[i + 1], 1);
    }
    return p;
}

ParamSet init_params(std::uint64_t seed, std::span<const std::size_t> widths) {
    ParamSet p = zero_params(widths);
    Rng rng(seed);
    for (auto& w : p.weights) {
        const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        for (double& x : w.data()) x = uniform(rng, -bound, bound);
    }
    return p;
}

optim::Layout layout_of(const ParamSet& params) {
    optim::Layout layout;
    for (std::size_t i = 0; i < params.layers(); ++i) {
        const auto& w = params.weights[i];
        const auto& b = params.biases[i];
        layout.push_back({"A" + std::to_string(i + 1), w.rows(), w.cols()});
        layout.push_back({"b" + std::to_string(i + 1), b.rows(), b.cols()});
    }
    return layout;
}

optim::FlatParams flatten(const ParamSet& params) {
    auto layout = layout_of(params);
    std::vector<double> values;
    values.reserve(optim::layout_size(layout));
    for (std::size_t i = 0; i < params.layers(); ++i) {
        const auto w = params.weights[i].data();
        const auto b = params.biases[i].data();
        values.insert(values.end(), w.begin(), w.end());
        values.insert(values.end(), b.begin(), b.end());
    }
    return {std::move(values), std::move(layout)};
}

void assign(ParamSet& params, const optim::FlatParams& flat) {
    if (flat.layout() != layout_of(params)) {
        throw ContractError("flat parameter layout does not match the network");
    }
    auto src = flat.values().begin();
    for (std::size_t i = 0; i < params.layers(); ++i) {
        for (Matrix* m : {&params.weights[i], &params.biases[i]}) {
            auto dst = m->data();
            std::copy(src, src + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
            src += static_cast<std::ptrdiff_t>(dst.size());
        }
    }
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix sigmoid(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data()) v = sigmoid(v);
    return out;
}

Matrix softmax(const Matrix& x) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t c = 0; c < x.cols(); ++c) {
        double max = x(0, c);
        for (std::size_t r = 1; r < x.rows(); ++r) max = std::max(max, x(r, c));
        double sum = 0.0;
        for (std::size_t r = 0; r < x.rows(); ++r) {
            out(r, c) = std::exp(x(r, c) - max);
            sum += out(r, c);
        }
        for (std::size_t r = 0; r < x.rows(); ++r) out(r, c) /= sum;
    }
    return out;
}

ForwardTrace forward(const ParamSet& params, const Matrix& batch) {
    if (params.layers() == 0) throw ContractError("empty parameter set");
    if (batch.rows() != params.weights.front().cols()) {
        std::ostringstream msg;
        msg << "batch has " << batch.rows() << " features, network expects "
            << params.weights.front().cols();
        throw ContractError(msg.str());
    }
    ForwardTrace trace;
    trace.input = batch;
    const Matrix* in = &trace.input;
    for (std::size_t i = 0; i < params.layers(); ++i) {
        Matrix z = matmul(params.weights[i], *in);
        add_column_broadcast(z, params.biases[i]);
        trace.pre_activations.push_back(std::move(z));
        if (i + 1 < params.layers()) {
            trace.activations.push_back(sigmoid(trace.pre_activations.back()));
            in = &trace.activations.back();
        }
    }
    trace.probs = softmax(trace.pre_activations.back());
    return trace;
}

LabelBatch make_labels(std::span<const int> labels, std::size_t classes) {
    LabelBatch out;
    out.labels.assign(labels.begin(), labels.end());
    out.one_hot = Matrix(classes, labels.size());
    for (std::size_t j = 0; j < labels.size(); ++j) {
        if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= classes) {
            throw InvalidInput("label out of range");
        }
        out.one_hot(static_cast<std::size_t>(labels[j]), j) = 1.0;
    }
    return out;
}

namespace {
void check_labels(const ForwardTrace& trace, const LabelBatch& labels) {
    if (labels.one_hot.rows() != trace.probs.rows() ||
        labels.one_hot.cols() != trace.probs.cols() ||
        labels.labels.size() != trace.probs.cols()) {
        throw ContractError("label batch does not match the forward trace");
    }
}
}  // namespace

double cross_entropy_loss(const ForwardTrace& trace, const LabelBatch& labels) {
    check_labels(trace, labels);
    const std::size_t n = labels.labels.size();
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double p = trace.probs(static_cast<std::size_t>(labels.labels[j]), j);
        total -= std::log(std::max(p, kProbabilityFloor));
    }
    // -log of a probability that rounds to 1 can come out as -0.
    return std::max(total / static_cast<double>(n), 0.0);
}

Matrix output_delta(const ForwardTrace& trace, const LabelBatch& labels) {
    check_labels(trace, labels);
    Matrix delta = trace.probs;
    const double inv_n = 1.0 / static_cast<double>(labels.labels.size());
    auto d = delta.data();
    auto y = labels.one_hot.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (d[i] - y[i]) * inv_n;
    return delta;
}

optim::FlatGrads backward(const ParamSet& params, const ForwardTrace& trace,
                          const LabelBatch& labels) {
    const std::size_t layers = params.layers();
    if (trace.pre_activations.size() != layers || trace.activations.size() + 1 != layers) {
        throw ContractError("forward trace was produced by a different network");
    }
    for (std::size_t i = 0; i < layers; ++i) {
        if (trace.pre_activations[i].rows() != params.weights[i].rows()) {
            throw ContractError("forward trace was produced by a different network");
        }
    }

    std::vector<Matrix> weight_grads(layers);
    std::vector<Matrix> bias_grads(layers);
    Matrix delta = output_delta(trace, labels);
    for (std::size_t i = layers; i-- > 0;) {
        const Matrix& in = i == 0 ? trace.input : trace.activations[i - 1];
        weight_grads[i] = matmul_a_bt(delta, in);
        bias_grads[i] = row_sums(delta);
        if (i == 0) break;
        Matrix upstream = matmul_at_b(params.weights[i], delta);
        auto u = upstream.data();
        auto s = trace.activations[i - 1].data();
        for (std::size_t k = 0; k < u.size(); ++k) u[k] *= s[k] * (1.0 - s[k]);
        delta = std::move(upstream);
    }

    auto layout = layout_of(params);
    std::vector<double> values;
    values.reserve(optim::layout_size(layout));
    for (std::size_t i = 0; i < layers; ++i) {
        const auto w = weight_grads[i].data();
        const auto b = bias_grads[i].data();
        values.insert(values.end(), w.begin(), w.end());
        values.insert(values.end(), b.begin(), b.end());
    }
    return {std::move(values), std::move(layout)};
}

std::vector<int> predict(const ParamSet& params, const Matrix& batch) {
    const auto trace = forward(params, batch);
    std::vector<int> out(trace.probs.cols());
    for (std::size_t c = 0; c < trace.probs.cols(); ++c) {
        std::size_t best = 0;
        for (std::size_t r = 1; r < trace.probs.rows(); ++r) {
            if (trace.probs(r, c) > trace.probs(best, c)) best = r;
        }
        out[c] = static_cast<int>(best);
    }
    return out;
}

double accuracy(const ParamSet& params, const data::Dataset& data) {
    if (data.size() == 0) throw InvalidInput("accuracy of an empty dataset is undefined");
    constexpr std::size_t kChunk = 1024;
    std::size_t correct = 0;
    std::vector<std::size_t> indices;
    for (std::size_t first = 0; first < data.size(); first += kChunk) {
        const std::size_t count = std::min(kChunk, data.size() - first);
        indices.resize(count);
        for (std::size_t k = 0; k < count; ++k) indices[k] = first + k;
        const auto batch = data::gather(data, indices);
        const auto predicted = predict(params, batch.inputs);
        for (std::size_t k = 0; k < count; ++k) {
            if (predicted[k] == batch.labels[k]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

double relative_error(double analytic, double numeric) {
    const double diff = std::abs(analytic - numeric);
    const double scale = std::max(std::abs(analytic), std::abs(numeric));
    if (scale < 1e-8) return diff;
    return diff / scale;
}

namespace {

// Batch-mean cross entropy in long double, straight loops over the flat
// parameter vector. The finite-difference quotient divides loss rounding
// noise by 2 epsilon; at epsilon = 1e-5 double-precision noise alone reaches
// ~1e-6 relative on small gradient entries, so the reference loss is carried
// in extended precision.
long double reference_loss(const ParamSet& shape, const std::vector<long double>& flat,
                           const Matrix& batch, const LabelBatch& labels) {
    using ld = long double;
    const std::size_t n = batch.cols();
    ld total = 0.0L;
    std::vector<ld> act;
    std::vector<ld> next;
    for (std::size_t j = 0; j < n; ++j) {
        act.resize(batch.rows());
        for (std::size_t i = 0; i < batch.rows(); ++i) act[i] = batch(i, j);
        std::size_t offset = 0;
        for (std::size_t l = 0; l < shape.layers(); ++l) {
            const std::size_t rows = shape.weights[l].rows();
            const std::size_t cols = shape.weights[l].cols();
            const ld* w = flat.data() + offset;
            const ld* b = w + rows * cols;
            offset += rows * cols + rows;
            next.assign(rows, 0.0L);
            for (std::size_t r = 0; r < rows; ++r) {
                ld z = b[r];
                for (std::size_t c = 0; c < cols; ++c) z += w[r * cols + c] * act[c];
                next[r] = l + 1 < shape.layers() ? 1.0L / (1.0L + std::exp(-z)) : z;
            }
            act.swap(next);
        }
        const ld top = *std::max_element(act.begin(), act.end());
        ld sum = 0.0L;
        for (ld z : act) sum += std::exp(z - top);
        const ld p = std::exp(act[static_cast<std::size_t>(labels.labels[j])] - top) / sum;
        total -= std::log(std::max(p, static_cast<ld>(kProbabilityFloor)));
    }
    return total / static_cast<ld>(n);
}

}  // namespace

GradCheckReport compare_with_finite_differences(const ParamSet& params, const Matrix& batch,
                                                const LabelBatch& labels,
                                                const optim::FlatGrads& grads,
                                                std::span<const std::size_t> coordinates,
                                                double epsilon) {
    const auto base = flatten(params);
    if (grads.layout() != base.layout()) {
        throw ContractError("gradient layout does not match the network");
    }
    if (batch.rows() != params.weights.front().cols() || labels.labels.size() != batch.cols()) {
        throw ContractError("grad check batch does not match the network or labels");
    }
    GradCheckReport report;
    std::vector<long double> probe(base.values().begin(), base.values().end());
    for (std::size_t coord : coordinates) {
        if (coord >= base.size()) throw ContractError("grad check coordinate out of range");
        const long double centre = probe[coord];
        probe[coord] = centre + epsilon;
        const long double up = reference_loss(params, probe, batch, labels);
        probe[coord] = centre - epsilon;
        const long double down = reference_loss(params, probe, batch, labels);
        probe[coord] = centre;
        const double numeric = static_cast<double>((up - down) / (2.0L * epsilon));
        const double analytic = grads[coord];
        report.coordinates.push_back(coord);
        report.analytic.push_back(analytic);
        report.numeric.push_back(numeric);
        report.max_relative_error =
            std::max(report.max_relative_error, relative_error(analytic, numeric));
    }
    return report;
}

GradCheckReport grad_check(const ParamSet& params, const Matrix& batch, const LabelBatch& labels,
                           const GradCheckOptions& options) {
    if (options.epsilon < 1e-7 || options.epsilon > 1e-3) {
        throw InvalidInput("grad check epsilon must lie in [1e-7, 1e-3]");
    }
    const auto grads = backward(params, forward(params, batch), labels);
    const std::size_t total = grads.size();
    const std::size_t wanted = std::min(options.samples, total);
    Rng rng(options.seed);
    std::set<std::size_t> chosen;
    while (chosen.size() < wanted) chosen.insert(uniform_index(rng, total));
    const std::vector<std::size_t> coords(chosen.begin(), chosen.end());
    return compare_with_finite_differences(params, batch, labels, grads, coords, options.epsilon);
}

}  // namespace gravilon::nn

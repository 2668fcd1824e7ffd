#include "gravilon/testbed.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

namespace gravilon::testbed {

namespace {

void check_arity(const Objective& obj, std::span<const double> x) {
    if (x.size() != obj.arity) {
        std::ostringstream msg;
        msg << obj.name << " takes " << obj.arity << " coordinates, got " << x.size();
        throw ContractError(msg.str());
    }
}

bool all_finite(std::span<const double> v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

Objective abs_affine(Point slope, double offset) {
    if (slope.empty()) throw InvalidInput("abs_affine needs at least one slope coefficient");
    double slope_sq = 0.0;
    for (double m : slope) slope_sq += m * m;
    if (slope_sq == 0.0) throw InvalidInput("abs_affine slope must be nonzero");

    Objective obj;
    obj.name = "abs_affine";
    obj.arity = slope.size();
    auto residual = [slope, offset](std::span<const double> x) {
        double r = -offset;
        for (std::size_t i = 0; i < slope.size(); ++i) r += slope[i] * x[i];
        return r;
    };
    obj.eval = [residual](std::span<const double> x) { return std::abs(residual(x)); };
    obj.grad = [residual, slope](std::span<const double> x) {
        const double r = residual(x);
        const double sign = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
        Point g(slope.size());
        for (std::size_t i = 0; i < slope.size(); ++i) g[i] = sign * slope[i];
        return g;
    };
    if (slope.size() == 1) obj.minimizers = std::vector<Point>{{offset / slope[0]}};
    return obj;
}

Objective quadratic(Point center) {
    if (center.empty()) throw InvalidInput("quadratic needs at least one coordinate");
    Objective obj;
    obj.name = "quadratic";
    obj.arity = center.size();
    obj.eval = [center](std::span<const double> x) {
        double sum = 0.0;
        for (std::size_t i = 0; i < center.size(); ++i) {
            const double d = x[i] - center[i];
            sum += d * d;
        }
        return sum;
    };
    obj.grad = [center](std::span<const double> x) {
        Point g(center.size());
        for (std::size_t i = 0; i < center.size(); ++i) g[i] = 2.0 * (x[i] - center[i]);
        return g;
    };
    obj.minimizers = std::vector<Point>{center};
    return obj;
}

Objective rosenbrock() {
    Objective obj;
    obj.name = "rosenbrock";
    obj.arity = 2;
    obj.eval = [](std::span<const double> p) {
        const double a = 1.0 - p[0];
        const double b = p[1] - p[0] * p[0];
        return a * a + 100.0 * b * b;
    };
    obj.grad = [](std::span<const double> p) {
        const double b = p[1] - p[0] * p[0];
        return Point{-2.0 * (1.0 - p[0]) - 400.0 * p[0] * b, 200.0 * b};
    };
    obj.minimizers = std::vector<Point>{{1.0, 1.0}};
    return obj;
}

std::vector<Objective> builtin_objectives() {
    return {abs_affine({3.0}, 6.0), quadratic({0.0}), quadratic({1.0, -2.0, 0.5}), rosenbrock()};
}

Objective objective_by_name(const std::string& name, std::size_t arity) {
    if (name == "abs_affine") {
        if (arity != 1) throw InvalidInput("the builtin abs_affine is one-dimensional");
        return abs_affine({3.0}, 6.0);
    }
    if (name == "quadratic") return quadratic(Point(arity, 0.0));
    if (name == "rosenbrock") {
        if (arity != 2) throw InvalidInput("rosenbrock is two-dimensional");
        return rosenbrock();
    }
    throw InvalidInput("unknown objective '" + name + "'");
}

Trajectory run_descent(const Objective& objective, optim::OptimizerState state, const Point& x0,
                       std::size_t max_steps, double stop_tol) {
    if (max_steps == 0) throw InvalidInput("max_steps must be at least 1");
    check_arity(objective, x0);

    Trajectory traj;
    auto params = optim::FlatParams::plain(x0);
    for (std::size_t t = 0;; ++t) {
        const Point x(params.values().begin(), params.values().end());
        const double f = objective.eval(x);
        traj.points.push_back(x);
        traj.values.push_back(f);
        if (!std::isfinite(f) || !all_finite(x)) {
            std::ostringstream msg;
            msg << objective.name << " diverged at step " << t;
            throw DivergedError(msg.str(), std::move(traj));
        }
        if (f < stop_tol || t == max_steps) break;

        auto g = objective.grad(x);
        if (!all_finite(g)) {
            std::ostringstream msg;
            msg << objective.name << " gradient is not finite at step " << t;
            throw DivergedError(msg.str(), std::move(traj));
        }
        auto grads = optim::FlatGrads::plain(std::move(g));
        auto result = optim::step(std::move(state), params, grads, f);
        state = std::move(result.state);
        params = std::move(result.params);
        traj.betas.push_back(result.step_scale);
    }
    return traj;
}

double geometric_rate(const Trajectory& trajectory) {
    const auto& f = trajectory.values;
    if (f.size() < 5) throw UndefinedRateError("geometric rate needs at least five values");
    for (std::size_t t = 0; t < f.size(); ++t) {
        if (!(f[t] > 0.0)) {
            std::ostringstream msg;
            msg << "geometric rate undefined: value at step " << t << " is not positive";
            throw UndefinedRateError(msg.str());
        }
    }
    const auto n = static_cast<double>(f.size());
    double mean_t = 0.0;
    double mean_y = 0.0;
    for (std::size_t t = 0; t < f.size(); ++t) {
        mean_t += static_cast<double>(t);
        mean_y += std::log(f[t]);
    }
    mean_t /= n;
    mean_y /= n;
    double cov = 0.0;
    double var = 0.0;
    for (std::size_t t = 0; t < f.size(); ++t) {
        const double dt = static_cast<double>(t) - mean_t;
        cov += dt * (std::log(f[t]) - mean_y);
        var += dt * dt;
    }
    return std::exp(cov / var);
}

std::optional<std::size_t> first_increase(const Trajectory& trajectory) {
    for (std::size_t t = 1; t < trajectory.values.size(); ++t) {
        if (trajectory.values[t] > trajectory.values[t - 1]) return t;
    }
    return std::nullopt;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
    const std::size_t arity = trajectory.points.empty() ? 0 : trajectory.points.front().size();
    out << "step,f,beta";
    for (std::size_t i = 0; i < arity; ++i) out << ",x" << i;
    out << '\n';
    out << std::setprecision(17);
    for (std::size_t t = 0; t < trajectory.points.size(); ++t) {
        out << t << ',' << trajectory.values[t] << ',';
        if (t < trajectory.betas.size()) out << trajectory.betas[t];
        for (double x : trajectory.points[t]) out << ',' << x;
        out << '\n';
    }
}

double gradient_check(const Objective& objective, std::span<const double> x, double h) {
    check_arity(objective, x);
    const auto g = objective.grad(x);
    Point probe(x.begin(), x.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(x[i]));
        probe[i] = x[i] + step;
        const double up = objective.eval(probe);
        probe[i] = x[i] - step;
        const double down = objective.eval(probe);
        probe[i] = x[i];
        const double numeric = (up - down) / (2.0 * step);
        const double scale = std::max({std::abs(g[i]), std::abs(numeric), 1e-8});
        worst = std::max(worst, std::abs(g[i] - numeric) / scale);
    }
    return worst;
}

}  // namespace gravilon::testbed

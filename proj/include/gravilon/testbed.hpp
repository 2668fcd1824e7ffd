#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gravilon/error.hpp"
#include "gravilon/optim.hpp"

namespace gravilon::testbed {

using Point = std::vector<double>;

// Nonnegative objective whose minima sit at height 0.
struct Objective {
    std::string name;
    std::size_t arity = 0;
    std::function<double(std::span<const double>)> eval;
    std::function<Point(std::span<const double>)> grad;
    double min_value = 0.0;
    std::optional<std::vector<Point>> minimizers;
};

// f(x) = |<m, x> - k|. The gradient at the root is taken to be 0.
Objective abs_affine(Point slope, double offset);
// f(x) = |x - center|^2.
Objective quadratic(Point center);
// f(x, y) = (1 - x)^2 + 100 (y - x^2)^2.
Objective rosenbrock();

// abs_affine({3}, 6), quadratic({0}), quadratic({1, -2, 0.5}), rosenbrock().
std::vector<Objective> builtin_objectives();

// Looks up a builtin by name ("abs_affine", "quadratic", "rosenbrock"). The
// quadratic is centred at the origin of the requested arity.
Objective objective_by_name(const std::string& name, std::size_t arity);

struct Trajectory {
    std::vector<Point> points;
    std::vector<double> values;
    std::vector<double> betas;  // one per step taken
};

// Thrown when the objective or its gradient stops being finite.
class DivergedError : public Error {
public:
    DivergedError(const std::string& what, Trajectory partial)
        : Error(what), partial_(std::move(partial)) {}
    const Trajectory& partial() const { return partial_; }

private:
    Trajectory partial_;
};

class UndefinedRateError : public Error {
public:
    using Error::Error;
};

// Iterates the optimizer on exact values and gradients (no clipping). Stops
// before stepping once f < stop_tol, or after max_steps steps.
Trajectory run_descent(const Objective& objective, optim::OptimizerState state, const Point& x0,
                       std::size_t max_steps, double stop_tol = 0.0);

// exp of the least-squares slope of log f_t against t. Needs at least five
// values, all positive.
double geometric_rate(const Trajectory& trajectory);

// First step t with f_{t} > f_{t-1}, if any.
std::optional<std::size_t> first_increase(const Trajectory& trajectory);

// Columns: step,f,beta,x0..x{n-1}. The beta of the final point is empty.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

// Largest relative discrepancy between objective.grad and central differences at x.
double gradient_check(const Objective& objective, std::span<const double> x, double h = 1e-6);

}  // namespace gravilon::testbed

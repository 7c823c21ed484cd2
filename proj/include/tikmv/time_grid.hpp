#pragma once

#include <cmath>
#include <cstddef>

#include "tikmv/errors.hpp"

namespace tikmv {

/// Uniform discretization of [0, T] into N steps. Node times are computed as
/// n * dt, never accumulated, so t(N) == T up to one rounding.
class TimeGrid {
 public:
  TimeGrid(double horizon, std::size_t steps) : horizon_(horizon), steps_(steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidInput("TimeGrid: horizon must be positive");
    if (steps == 0) throw InvalidInput("TimeGrid: steps must be positive");
    dt_ = horizon / static_cast<double>(steps);
  }

  double horizon() const { return horizon_; }
  std::size_t steps() const { return steps_; }
  std::size_t nodes() const { return steps_ + 1; }
  double dt() const { return dt_; }

  double time(std::size_t n) const { return n == steps_ ? horizon_ : static_cast<double>(n) * dt_; }

  // Index of the node at or left of t (piecewise-constant left lookup), clamped to [0, N].
  std::size_t node_at(double t) const {
    if (t <= 0.0) return 0;
    const double x = std::floor(t / dt_ + 1e-7);
    if (x >= static_cast<double>(steps_)) return steps_;
    return static_cast<std::size_t>(x);
  }

  // Grid with every `stride`-th node; N must be divisible by stride.
  TimeGrid coarsened(std::size_t stride) const {
    if (stride == 0 || steps_ % stride != 0) throw InvalidInput("TimeGrid: stride must divide the step count");
    return TimeGrid(horizon_, steps_ / stride);
  }

  TimeGrid refined(std::size_t factor) const {
    if (factor == 0) throw InvalidInput("TimeGrid: refinement factor must be positive");
    return TimeGrid(horizon_, steps_ * factor);
  }

  friend bool operator==(const TimeGrid& a, const TimeGrid& b) {
    return a.steps_ == b.steps_ && a.horizon_ == b.horizon_;
  }

 private:
  double horizon_;
  std::size_t steps_;
  double dt_;
};

}  // namespace tikmv

#pragma once

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "cleargcd/tensor.hpp"

namespace cleargcd {

/// Maps an input bound on a fresh tape to a scalar.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct CoordCheck {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool pass = false;
  std::string cause;
};

struct GradCheckReport {
  std::vector<CoordCheck> coords;
  double max_rel_error = 0.0;

  bool passed() const {
    return !coords.empty() && std::all_of(coords.begin(), coords.end(), [](const CoordCheck& c) { return c.pass; });
  }
  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(coords.begin(), coords.end(), [](const CoordCheck& c) { return !c.pass; }));
  }
};

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Central-difference stencils: [f(x+h) - f(x-h)] / 2h, or the fourth-order
/// (8[f(x+h) - f(x-h)] - [f(x+2h) - f(x-2h)]) / 12h.
enum class Stencil { kThreePoint, kFivePoint };

/// Compares the taped gradient of `f` at `input` against central differences.
inline GradCheckReport grad_check(const ScalarFn& f, const Tensor& input, double step = 1e-5,
                                  double tolerance = 1e-4, Stencil stencil = Stencil::kThreePoint) {
  auto eval = [&](const Tensor& x) {
    try {
      Tape tape;
      Tensor copy(x.shape(), x.storage());
      return f(tape, tape.constant(std::move(copy))).value().item();
    } catch (const std::exception&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };

  Tensor x(input.shape(), input.storage());
  x.set_requires_grad(true);
  std::vector<double> analytic(x.numel(), 0.0);
  bool forward_ok = true;
  try {
    Tape tape;
    Var loss = f(tape, tape.param(x));
    forward_ok = std::isfinite(loss.value().item());
    if (forward_ok) {
      tape.backward(loss);
      if (x.grad()) analytic = *x.grad();
    }
  } catch (const std::exception&) {
    forward_ok = false;
  }

  GradCheckReport report;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    CoordCheck c;
    c.index = i;
    c.analytic = analytic[i];
    auto shifted = [&](double delta) {
      Tensor t(input.shape(), input.storage());
      t[i] += delta;
      return eval(t);
    };
    const double fp = shifted(step), fm = shifted(-step);
    if (stencil == Stencil::kThreePoint) {
      c.numeric = (fp - fm) / (2.0 * step);
    } else {
      const double fp2 = shifted(2.0 * step), fm2 = shifted(-2.0 * step);
      c.numeric = (8.0 * (fp - fm) - (fp2 - fm2)) / (12.0 * step);
    }
    if (!forward_ok || !std::isfinite(c.numeric)) {
      c.cause = "non-finite forward evaluation";
      c.rel_error = std::numeric_limits<double>::infinity();
    } else {
      c.rel_error = relative_error(c.analytic, c.numeric);
      c.pass = c.rel_error <= tolerance;
      if (!c.pass) c.cause = "gradient mismatch";
    }
    report.max_rel_error = std::max(report.max_rel_error, c.rel_error);
    report.coords.push_back(std::move(c));
  }
  return report;
}

}  // namespace cleargcd

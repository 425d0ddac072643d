#pragma once

#include <cmath>
#include <numbers>
#include <sstream>

#include "supgdlr/supg.hpp"

namespace supgdlr {

/// Closed-form benchmark problem on [0, 1]:
///   u(t, x, w) = exp(x sin(2 pi w (t+1))) sin(2 pi x),
/// diffusion 1e-8, unit advection, reaction 1 + w, forcing chosen so u is the
/// exact solution. Homogeneous Dirichlet values hold by construction.
struct ManufacturedProblem {
  double epsilon = 1e-8;
  double b = 1.0;

  static double u(double t, double x, double w) {
    const double s = std::sin(2.0 * std::numbers::pi * w * (t + 1.0));
    return std::exp(x * s) * std::sin(2.0 * std::numbers::pi * x);
  }

  static double ux(double t, double x, double w) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double s = std::sin(two_pi * w * (t + 1.0));
    return std::exp(x * s) * (s * std::sin(two_pi * x) + two_pi * std::cos(two_pi * x));
  }

  static double uxx(double t, double x, double w) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double s = std::sin(two_pi * w * (t + 1.0));
    return std::exp(x * s) * ((s * s - two_pi * two_pi) * std::sin(two_pi * x) +
                              2.0 * two_pi * s * std::cos(two_pi * x));
  }

  static double ut(double t, double x, double w) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const double s_dot = two_pi * w * std::cos(two_pi * w * (t + 1.0));
    const double s = std::sin(two_pi * w * (t + 1.0));
    return x * s_dot * std::exp(x * s) * std::sin(two_pi * x);
  }

  double f(double t, double x, double w) const {
    return ut(t, x, w) - epsilon * uxx(t, x, w) + b * ux(t, x, w) + (1.0 + w) * u(t, x, w);
  }

  ProblemCoefficients coefficients() const {
    ProblemCoefficients c;
    c.epsilon = epsilon;
    c.b = b;
    c.c = [](double, double w) { return 1.0 + w; };
    c.c0 = 1.0;
    c.c_sup = 2.0;
    c.f = [p = *this](double t, double x, double w) { return p.f(t, x, w); };
    c.u0 = [](double x, double w) { return u(0.0, x, w); };
    return c;
  }

  /// Cross-check the hand-derived derivatives against central finite
  /// differences on a (t, x, w) grid. Second derivatives are differenced from
  /// the first-derivative closed form to stay within floating-point noise.
  void validate_derivatives(int nt = 20, int nx = 20, int nw = 5, double t_max = 1.0,
                            double rel_tol = 1e-6, double fd_step = 1e-6) const {
    auto rel_err = [](double exact, double approx) {
      return std::abs(exact - approx) / std::max(1.0, std::abs(exact));
    };
    for (int it = 0; it < nt; ++it) {
      const double t = t_max * (it + 0.5) / nt;
      for (int ix = 0; ix < nx; ++ix) {
        const double x = (ix + 0.5) / nx;
        for (int iw = 0; iw < nw; ++iw) {
          const double w = static_cast<double>(iw + 1) / nw;
          const double fd_t = (u(t + fd_step, x, w) - u(t - fd_step, x, w)) / (2.0 * fd_step);
          const double fd_x = (u(t, x + fd_step, w) - u(t, x - fd_step, w)) / (2.0 * fd_step);
          const double fd_xx = (ux(t, x + fd_step, w) - ux(t, x - fd_step, w)) / (2.0 * fd_step);
          if (rel_err(ut(t, x, w), fd_t) > rel_tol || rel_err(ux(t, x, w), fd_x) > rel_tol ||
              rel_err(uxx(t, x, w), fd_xx) > rel_tol) {
            std::ostringstream msg;
            msg << "ManufacturedProblem: derivative cross-validation failed at (t, x, w) = (" << t
                << ", " << x << ", " << w << ")";
            throw ValidationError(msg.str());
          }
        }
      }
    }
  }
};

}  // namespace supgdlr

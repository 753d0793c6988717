#include "cosbal/qp.hpp"

#include <algorithm>
#include <cmath>

#include "cosbal/errors.hpp"
#include "cosbal/rng.hpp"

namespace cosbal {

namespace {

constexpr double kSumTolScale = 1e-12;

double clip(double x, double lo, double hi) {
  return std::min(std::max(x, lo), hi);
}

// Weighted clipped sum g(lambda) = sum_i c_i * clip(v_i + lambda*c_i, L, U),
// nondecreasing in lambda since every c_i > 0.
double shifted_sum(const Eigen::VectorXd& v, const Eigen::VectorXd* c,
                   double lambda, double lower, double upper) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double ci = c ? (*c)[i] : 1.0;
    s += ci * clip(v[i] + lambda * ci, lower, upper);
  }
  return s;
}

void project_range(Eigen::VectorXd& out, const Eigen::VectorXd& v,
                   const SumConstraint& con, double lower, double upper) {
  const Eigen::Index len = con.end - con.begin;
  const Eigen::VectorXd seg = v.segment(con.begin, len);
  const Eigen::VectorXd* mult = con.multipliers.size() ? &con.multipliers : nullptr;
  if (mult) {
    if (con.multipliers.size() != len)
      throw DimensionMismatchError("sum constraint multipliers length mismatch");
    if ((con.multipliers.array() <= 0.0).any())
      throw ValidationError("sum constraint multipliers must be positive");
  }
  const double s = con.required_sum;
  const double tol = kSumTolScale * std::max(1.0, std::abs(s));

  const double mult_total = mult ? mult->sum() : static_cast<double>(len);
  if (std::isfinite(lower) && s < lower * mult_total - tol)
    throw InfeasibleConstraintError("required sum below lower-bound capacity");
  if (std::isfinite(upper) && s > upper * mult_total + tol)
    throw InfeasibleConstraintError("required sum above upper-bound capacity");

  if (!std::isfinite(lower) && !std::isfinite(upper)) {
    // Pure affine projection.
    const double csq = mult ? mult->squaredNorm() : static_cast<double>(len);
    const double dot = mult ? mult->dot(seg) : seg.sum();
    const double lambda = (s - dot) / csq;
    for (Eigen::Index i = 0; i < len; ++i) {
      const double ci = mult ? (*mult)[i] : 1.0;
      out[con.begin + i] = seg[i] + lambda * ci;
    }
    return;
  }

  // Bracket lambda so g(lo) <= s <= g(hi), expanding on unbounded sides.
  double lo;
  double hi;
  if (std::isfinite(lower)) {
    lo = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < len; ++i) {
      const double ci = mult ? (*mult)[i] : 1.0;
      lo = std::min(lo, (lower - seg[i]) / ci);
    }
  } else {
    lo = 0.0;
    double step = 1.0;
    while (shifted_sum(seg, mult, lo, lower, upper) > s) {
      lo -= step;
      step *= 2.0;
    }
  }
  if (std::isfinite(upper)) {
    hi = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < len; ++i) {
      const double ci = mult ? (*mult)[i] : 1.0;
      hi = std::max(hi, (upper - seg[i]) / ci);
    }
  } else {
    hi = std::max(0.0, lo);
    double step = 1.0;
    while (shifted_sum(seg, mult, hi, lower, upper) < s) {
      hi += step;
      step *= 2.0;
    }
  }

  double lambda = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    lambda = 0.5 * (lo + hi);
    const double g = shifted_sum(seg, mult, lambda, lower, upper);
    if (std::abs(g - s) <= tol) break;
    if (g < s)
      lo = lambda;
    else
      hi = lambda;
  }
  for (Eigen::Index i = 0; i < len; ++i) {
    const double ci = mult ? (*mult)[i] : 1.0;
    out[con.begin + i] = clip(seg[i] + lambda * ci, lower, upper);
  }
}

}  // namespace

void PenaltyStructure::validate(Eigen::Index n) const {
  Eigen::Index pos = 0;
  for (const auto& b : blocks) {
    if (b.begin != pos || b.end <= b.begin)
      throw ValidationError("penalty blocks must partition the weight vector");
    if (b.scale_diag < 0.0 || b.scale_ones < 0.0)
      throw ValidationError("penalty scales must be nonnegative");
    pos = b.end;
  }
  if (pos != n)
    throw ValidationError("penalty blocks must cover all weights");
}

void QpProblem::validate() const {
  const Eigen::Index n = m.cols();
  if (t.size() != m.rows())
    throw DimensionMismatchError("target length must match design rows");
  if (lower > upper) throw ValidationError("lower bound exceeds upper bound");
  penalty.validate(n);
  Eigen::Index prev_end = -1;
  for (const auto& c : sum_constraints) {
    if (c.begin < 0 || c.end > n || c.end <= c.begin)
      throw ValidationError("sum constraint range out of bounds");
    if (c.begin < prev_end)
      throw ValidationError("sum constraint ranges must be disjoint and ordered");
    prev_end = c.end;
  }
}

double penalty_value(const Eigen::VectorXd& gamma, const PenaltyStructure& penalty) {
  double total = 0.0;
  for (const auto& b : penalty.blocks) {
    const auto seg = gamma.segment(b.begin, b.end - b.begin);
    const double sum = seg.sum();
    total += b.scale_diag * seg.squaredNorm() + b.scale_ones * sum * sum;
  }
  return total;
}

void add_penalty_gradient(const Eigen::VectorXd& gamma,
                          const PenaltyStructure& penalty, Eigen::VectorXd& grad) {
  for (const auto& b : penalty.blocks) {
    const auto len = b.end - b.begin;
    const auto seg = gamma.segment(b.begin, len);
    const double sum = seg.sum();
    grad.segment(b.begin, len) +=
        2.0 * b.scale_diag * seg +
        Eigen::VectorXd::Constant(len, 2.0 * b.scale_ones * sum);
  }
}

Eigen::VectorXd project_feasible(const Eigen::VectorXd& v,
                                 const std::vector<SumConstraint>& constraints,
                                 double lower, double upper) {
  Eigen::VectorXd out = v.cwiseMax(lower).cwiseMin(upper);
  for (const auto& con : constraints) project_range(out, v, con, lower, upper);
  return out;
}

QpSolution solve(const QpProblem& problem, const SolverOptions& opts) {
  problem.validate();
  const Eigen::Index n = problem.size();
  const auto& m = problem.m;
  const auto& t = problem.t;

  auto gradient = [&](const Eigen::VectorXd& g) {
    Eigen::VectorXd grad = 2.0 * (m.transpose() * (m * g - t));
    add_penalty_gradient(g, problem.penalty, grad);
    return grad;
  };
  auto objective = [&](const Eigen::VectorXd& g) {
    return (m * g - t).squaredNorm() + penalty_value(g, problem.penalty);
  };
  auto project = [&](const Eigen::VectorXd& v) {
    return project_feasible(v, problem.sum_constraints, problem.lower,
                            problem.upper);
  };

  // Lipschitz constant of the gradient: 2*lmax(m^T m + P), estimated by
  // power iteration with a fixed deterministic start.
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto bits = splitmix64(0x5eedULL + static_cast<std::uint64_t>(i));
    z[i] = static_cast<double>(bits >> 11) / 9007199254740992.0 - 0.5;
  }
  if (z.norm() == 0.0) z.setOnes();
  z.normalize();
  double lip = 0.0;
  for (int it = 0; it < 80; ++it) {
    Eigen::VectorXd zn = 2.0 * (m.transpose() * (m * z));
    add_penalty_gradient(z, problem.penalty, zn);
    const double norm = zn.norm();
    if (norm < 1e-300) break;
    lip = norm;
    z = zn / norm;
  }
  lip *= 1.05;

  QpSolution sol;
  Eigen::VectorXd x = project(Eigen::VectorXd::Zero(n));
  if (lip <= 0.0) {
    // Constant objective; any feasible point is optimal.
    sol.gamma = x;
    sol.objective_balance = (m * x - t).squaredNorm();
    sol.objective_penalty = penalty_value(x, problem.penalty);
    sol.kkt_residual = 0.0;
    sol.converged = true;
    return sol;
  }
  const double step = 1.0 / lip;

  Eigen::VectorXd x_prev = x;
  double fx = objective(x);
  if (!std::isfinite(fx)) throw NonFiniteObjectiveError("objective is not finite");
  double t_mom = 1.0;
  sol.restart_objectives.push_back(fx);

  int k = 0;
  for (k = 1; k <= opts.max_iter; ++k) {
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
    const double beta = (t_mom - 1.0) / t_next;
    Eigen::VectorXd y = x + beta * (x - x_prev);
    Eigen::VectorXd x_new = project(y - step * gradient(y));
    double f_new = objective(x_new);
    if (!std::isfinite(f_new))
      throw NonFiniteObjectiveError("objective is not finite");
    if (f_new > fx) {
      // Momentum overshoot: restart from the last accepted iterate. A plain
      // projected-gradient step with step 1/L cannot increase the objective.
      x_new = project(x - step * gradient(x));
      f_new = objective(x_new);
      t_mom = 1.0;
      sol.restart_objectives.push_back(f_new);
    } else {
      t_mom = t_next;
    }
    x_prev = x;
    x = x_new;
    fx = f_new;

    if (k % 8 == 1 || k == opts.max_iter) {
      const double kkt =
          (x - project(x - gradient(x))).lpNorm<Eigen::Infinity>();
      if (kkt < opts.tol) {
        sol.converged = true;
        sol.kkt_residual = kkt;
        break;
      }
    }
  }
  sol.iterations = std::min(k, opts.max_iter);
  if (!sol.converged)
    sol.kkt_residual = (x - project(x - gradient(x))).lpNorm<Eigen::Infinity>();
  sol.gamma = x;
  sol.objective_balance = (m * x - t).squaredNorm();
  sol.objective_penalty = penalty_value(x, problem.penalty);
  return sol;
}

}  // namespace cosbal

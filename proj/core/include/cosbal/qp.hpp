#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

namespace cosbal {

// One contiguous block of the quadratic weight penalty, contributing
// scale_diag * sum(gamma_i^2) + scale_ones * (sum gamma_i)^2 over its range.
// Equivalent to the quadratic form of scale_diag*I + scale_ones*11^T.
struct PenaltyBlock {
  Eigen::Index begin = 0;  // half-open [begin, end)
  Eigen::Index end = 0;
  double scale_diag = 0.0;
  double scale_ones = 0.0;
};

struct PenaltyStructure {
  std::vector<PenaltyBlock> blocks;

  // Blocks must partition [0, n) with nonnegative scales.
  void validate(Eigen::Index n) const;
};

// Equality constraint sum_i c_i * gamma_i = required_sum over a contiguous
// index range. Empty multipliers mean all ones.
struct SumConstraint {
  Eigen::Index begin = 0;  // half-open [begin, end)
  Eigen::Index end = 0;
  double required_sum = 0.0;
  Eigen::VectorXd multipliers;  // length end-begin when present; all > 0
};

// minimize  ||m * gamma - t||^2 + gamma^T P gamma
// subject to the sum constraints and lower <= gamma_i <= upper.
//
// m has one row per balance dimension and one column per weight, already
// carrying any per-unit scaling.
struct QpProblem {
  Eigen::MatrixXd m;
  Eigen::VectorXd t;
  PenaltyStructure penalty;
  std::vector<SumConstraint> sum_constraints;
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();

  Eigen::Index size() const { return m.cols(); }
  void validate() const;
};

struct SolverOptions {
  int max_iter = 10000;
  double tol = 1e-8;  // on the infinity norm of the projected-gradient map
};

struct QpSolution {
  Eigen::VectorXd gamma;
  double kkt_residual = 0.0;  // ||gamma - project(gamma - grad f)||_inf
  int iterations = 0;
  double objective_balance = 0.0;  // ||m*gamma - t||^2
  double objective_penalty = 0.0;  // gamma^T P gamma
  bool converged = false;
  std::vector<double> restart_objectives;  // objective at each momentum restart
};

double penalty_value(const Eigen::VectorXd& gamma, const PenaltyStructure& penalty);

// Adds the gradient of gamma^T P gamma, i.e. 2*(scale_diag*gamma_i +
// scale_ones*sum(gamma)) per block, into grad.
void add_penalty_gradient(const Eigen::VectorXd& gamma,
                          const PenaltyStructure& penalty, Eigen::VectorXd& grad);

// Euclidean projection onto { gamma : per-range weighted sums hold,
// lower <= gamma_i <= upper }. Ranges must be disjoint; coordinates outside
// every range are clipped to the box. Each range is solved independently by
// bisection on the shift lambda in gamma_i = clip(v_i + lambda*c_i, L, U).
Eigen::VectorXd project_feasible(const Eigen::VectorXd& v,
                                 const std::vector<SumConstraint>& constraints,
                                 double lower, double upper);

// Accelerated projected gradient (FISTA with function-value restarts). The
// step size comes from a power-iteration estimate of the Lipschitz constant
// of the gradient; deterministic for a fixed problem.
QpSolution solve(const QpProblem& problem, const SolverOptions& opts = {});

}  // namespace cosbal

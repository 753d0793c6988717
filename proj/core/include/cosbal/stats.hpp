#pragma once

#include <Eigen/Dense>

namespace cosbal::stats {

// Inverse standard normal CDF (Wichura's PPND16). Relative accuracy is
// around 1e-16 over (0, 1); callers rely on at least 1e-9.
double normal_quantile(double p);

double mean(const Eigen::VectorXd& v);

// Sample variance (n-1 denominator); 0 for fewer than two elements.
double variance(const Eigen::VectorXd& v);

double sd(const Eigen::VectorXd& v);

// Weighted mean with nonnegative weights; weights need not be normalized.
double weighted_mean(const Eigen::VectorXd& v, const Eigen::VectorXd& w);

// Empirical quantile with linear interpolation between order statistics.
double quantile(Eigen::VectorXd v, double p);

// Pearson correlation of two equally sized vectors.
double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

struct LogisticFit {
  Eigen::VectorXd coef;  // intercept first
  bool converged = false;
  int iterations = 0;
};

// Logistic regression via ridge-stabilized IRLS. X has one row per
// observation (no intercept column; one is added internally).
LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         double ridge = 1e-6, int max_iter = 100);

// Fitted probabilities from a LogisticFit on new rows.
Eigen::VectorXd predict_logistic(const LogisticFit& fit,
                                 const Eigen::MatrixXd& x);

}  // namespace cosbal::stats

#include "cosbal/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cosbal/errors.hpp"

namespace cosbal::stats {

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw ValidationError("normal_quantile: p must be in [0, 1]");
  }
  // AS 241 algorithm PPND16.
  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e+3 * r + 3.3430575583588128105e+4) * r +
                 6.7265770927008700853e+4) *
                    r +
                4.5921953931549871457e+4) *
                   r +
               1.3731693765509461125e+4) *
                  r +
              1.9715909503065514427e+3) *
                 r +
             1.3314166789178437745e+2) *
                r +
            3.3871328727963666080e0) /
           (((((((5.2264952788528545610e+3 * r + 2.8729085735721942674e+4) * r +
                 3.9307895800092710610e+4) *
                    r +
                2.1213794301586595867e+4) *
                   r +
               5.3941960214247511077e+3) *
                  r +
              6.8718700749205790830e+2) *
                 r +
             4.2313330701600911252e+1) *
                r +
            1.0);
  }
  double r = q < 0.0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e0) *
                  r +
              3.64784832476320460504e0) *
                 r +
             5.76949722146069140550e0) *
                r +
            4.63033784615654529590e0) *
               r +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e0) *
                r +
            2.05319162663775882187e0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e0) *
                r +
            5.46378491116411436990e0) *
               r +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) *
                    r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return q < 0.0 ? -val : val;
}

double mean(const Eigen::VectorXd& v) {
  if (v.size() == 0) throw ValidationError("mean of empty vector");
  return v.mean();
}

double variance(const Eigen::VectorXd& v) {
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(n - 1);
}

double sd(const Eigen::VectorXd& v) { return std::sqrt(variance(v)); }

double weighted_mean(const Eigen::VectorXd& v, const Eigen::VectorXd& w) {
  if (v.size() != w.size())
    throw DimensionMismatchError("weighted_mean: size mismatch");
  const double total = w.sum();
  if (total == 0.0) throw ValidationError("weighted_mean: zero total weight");
  return v.dot(w) / total;
}

double quantile(Eigen::VectorXd v, double p) {
  if (v.size() == 0) throw ValidationError("quantile of empty vector");
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const auto hi = std::min<Eigen::Index>(lo + 1, v.size() - 1);
  const double frac = h - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw DimensionMismatchError("correlation: need two equal-length vectors");
  const double ma = a.mean();
  const double mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma;
  const Eigen::ArrayXd db = b.array() - mb;
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (denom == 0.0) return 0.0;
  return (da * db).sum() / denom;
}

LogisticFit fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                         double ridge, int max_iter) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols() + 1;
  if (y.size() != n)
    throw DimensionMismatchError("fit_logistic: rows of x must match y");
  Eigen::MatrixXd design(n, d);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;

  LogisticFit fit;
  fit.coef = Eigen::VectorXd::Zero(d);
  for (int it = 0; it < max_iter; ++it) {
    Eigen::VectorXd eta = design * fit.coef;
    Eigen::VectorXd mu =
        (1.0 / (1.0 + (-eta.array()).exp())).matrix();
    Eigen::VectorXd w = (mu.array() * (1.0 - mu.array())).cwiseMax(1e-10);
    Eigen::MatrixXd h = design.transpose() * w.asDiagonal() * design;
    h.diagonal().array() += ridge;
    Eigen::VectorXd g = design.transpose() * (y - mu) - ridge * fit.coef;
    Eigen::VectorXd step = h.ldlt().solve(g);
    fit.coef += step;
    fit.iterations = it + 1;
    if (step.lpNorm<Eigen::Infinity>() < 1e-10) {
      fit.converged = true;
      break;
    }
  }
  return fit;
}

Eigen::VectorXd predict_logistic(const LogisticFit& fit,
                                 const Eigen::MatrixXd& x) {
  if (x.cols() + 1 != fit.coef.size())
    throw DimensionMismatchError("predict_logistic: column mismatch");
  Eigen::VectorXd eta =
      (x * fit.coef.tail(x.cols())).array() + fit.coef[0];
  return (1.0 / (1.0 + (-eta.array()).exp())).matrix();
}

}  // namespace cosbal::stats

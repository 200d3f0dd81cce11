#include "wsinfer/losses.hpp"

#include <algorithm>
#include <cmath>

#include "wsinfer/errors.hpp"

namespace wsinfer {

namespace {

constexpr double kClamp = 1e-12;

double safe_log(double x) { return std::log(std::max(x, kClamp)); }

double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

void check_shapes(const Eigen::MatrixXd& posterior,
                  const Eigen::MatrixXd& predictions) {
  if (posterior.rows() != predictions.rows() ||
      posterior.cols() != predictions.cols())
    throw Error(ErrorCode::ShapeMismatch,
                "posterior and prediction tables differ in shape");
  if (posterior.size() == 0)
    throw Error(ErrorCode::ShapeMismatch, "empty posterior table");
}

double bernoulli_term(double p, double f, BaseLoss base) {
  switch (base) {
    case BaseLoss::BCE:
    case BaseLoss::CE:
      return -p * safe_log(f) - (1.0 - p) * safe_log(1.0 - f);
    case BaseLoss::MAE:
      return p * (1.0 - f) + (1.0 - p) * f;
  }
  return 0.0;
}

}  // namespace

double ure_loss(const Eigen::MatrixXd& posterior,
                const Eigen::MatrixXd& predictions, BaseLoss base,
                PosteriorForm form) {
  check_shapes(posterior, predictions);
  const int K = static_cast<int>(posterior.rows());
  const int C = static_cast<int>(posterior.cols());
  double sum = 0.0;
  for (int k = 0; k < K; ++k) {
    if (form == PosteriorForm::PerClassBernoulli) {
      for (int c = 0; c < C; ++c)
        sum += bernoulli_term(posterior(k, c), predictions(k, c), base);
      continue;
    }
    for (int j = 0; j < C; ++j) {
      const double p = posterior(k, j);
      if (p == 0.0 && base != BaseLoss::MAE) continue;
      double l = 0.0;
      switch (base) {
        case BaseLoss::CE:
          l = -safe_log(predictions(k, j));
          break;
        case BaseLoss::BCE: {
          l = -safe_log(predictions(k, j));
          for (int i = 0; i < C; ++i)
            if (i != j) l -= safe_log(1.0 - predictions(k, i));
          break;
        }
        case BaseLoss::MAE: {
          l = 1.0 - predictions(k, j);
          for (int i = 0; i < C; ++i)
            if (i != j) l += predictions(k, i);
          break;
        }
      }
      sum += p * l;
    }
  }
  return sum / K;
}

double smoothing_loss(const Eigen::MatrixXd& posterior, PosteriorForm form) {
  const int K = static_cast<int>(posterior.rows());
  const int C = static_cast<int>(posterior.cols());
  if (K == 0 || C == 0)
    throw Error(ErrorCode::ShapeMismatch, "empty posterior table");
  double sum = 0.0;
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c) {
      const double p = posterior(k, c);
      sum += xlogx(p);
      if (form == PosteriorForm::PerClassBernoulli) sum += xlogx(1.0 - p);
    }
  return sum / (static_cast<double>(C) * K);
}

LossBreakdown total_loss(const Eigen::MatrixXd& posterior,
                         const Eigen::MatrixXd& predictions, BaseLoss base,
                         double lambda, PosteriorForm form) {
  if (lambda < 0.0)
    throw Error(ErrorCode::BadParameter, "lambda must be nonnegative");
  LossBreakdown out;
  out.lambda = lambda;
  out.ure = ure_loss(posterior, predictions, base, form);
  out.smoothing = smoothing_loss(posterior, form);
  out.total = out.ure + lambda * out.smoothing;
  return out;
}

double em_q_identity_check(const Eigen::MatrixXd& posterior,
                           const Eigen::MatrixXd& predictions) {
  check_shapes(posterior, predictions);
  const int K = static_cast<int>(posterior.rows());
  const int C = static_cast<int>(posterior.cols());
  double ure = 0.0;
  double q = 0.0;
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < C; ++j) {
      const double p = posterior(k, j);
      const double logf = safe_log(predictions(k, j));
      ure += p * -logf;
      q += p * logf;
    }
  ure /= K;
  return std::abs(ure + q / K);
}

double kl_identity_residual(const Eigen::MatrixXd& posterior,
                            const Eigen::MatrixXd& predictions) {
  check_shapes(posterior, predictions);
  const int K = static_cast<int>(posterior.rows());
  const int C = static_cast<int>(posterior.cols());
  double kl = 0.0;
  for (int k = 0; k < K; ++k)
    for (int c = 0; c < C; ++c) {
      const double p = posterior(k, c);
      const double f = predictions(k, c);
      kl += xlogx(p) - p * safe_log(f) + xlogx(1.0 - p) -
            (1.0 - p) * safe_log(1.0 - f);
    }
  kl /= K;
  const LossBreakdown breakdown = total_loss(
      posterior, predictions, BaseLoss::BCE, 1.0,
      PosteriorForm::PerClassBernoulli);
  return std::abs(breakdown.total - kl);
}

}  // namespace wsinfer

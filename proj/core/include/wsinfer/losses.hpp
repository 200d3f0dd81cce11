#ifndef WSINFER_LOSSES_HPP
#define WSINFER_LOSSES_HPP

#include <Eigen/Core>

#include "wsinfer/errors.hpp"

namespace wsinfer {

enum class BaseLoss { BCE, CE, MAE };

// How a K x C posterior table is read. PerClassBernoulli treats each
// column as an independent positive-class probability (multi-label
// chains); CategoricalRow treats each row as a distribution over C
// classes (single-label settings).
enum class PosteriorForm { PerClassBernoulli, CategoricalRow };

struct LossBreakdown {
  double ure = 0.0;
  double smoothing = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

// Posterior-weighted instance risk: (1/K) sum_k sum_j P(e_j) l(f, e_j).
// The coefficients are plain numbers here; freezing them is the caller's
// E-step contract. Predictions are clamped at 1e-12 before logs.
double ure_loss(const Eigen::MatrixXd& posterior,
                const Eigen::MatrixXd& predictions, BaseLoss base,
                PosteriorForm form = PosteriorForm::PerClassBernoulli);

// Mean negative entropy of the posterior: (1/(CK)) sum P log P, with
// 0 log 0 = 0. Always in [-log(#label values), 0].
double smoothing_loss(const Eigen::MatrixXd& posterior,
                      PosteriorForm form = PosteriorForm::PerClassBernoulli);

LossBreakdown total_loss(const Eigen::MatrixXd& posterior,
                         const Eigen::MatrixXd& predictions, BaseLoss base,
                         double lambda,
                         PosteriorForm form = PosteriorForm::PerClassBernoulli);

// |URE_CE + Q/K| where Q = sum_k sum_j P(e_j) log f_j is the EM
// Q-function; an algebraic identity, so the residual stays at rounding
// level.
double em_q_identity_check(const Eigen::MatrixXd& posterior,
                           const Eigen::MatrixXd& predictions);

// |total(BCE, lambda = 1) - mean binary KL(posterior || prediction)|.
// Exact for C = 1, where the smoothing normalizer matches the KL
// cross-term.
double kl_identity_residual(const Eigen::MatrixXd& posterior,
                            const Eigen::MatrixXd& predictions);

}  // namespace wsinfer

#endif

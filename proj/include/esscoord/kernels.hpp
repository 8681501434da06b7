#pragma once

#include <cstddef>

#include <Eigen/Dense>

// Inner loops of the dual rounds. Every output entry is computed by the same
// sequential expression in both backends, so results agree bit for bit.

namespace esscoord::kernels {

enum class Backend { Serial, OpenMP };

namespace serial {

/// y = A x for symmetric A (column access).
void sym_matvec(const Eigen::MatrixXd& A, const double* x, double* y);
/// out_n = clip(-(c_n + lt_n)/cp - l_n, [lo_n, hi_n])
void responses(std::size_t n, const double* lambda_tilde, const double* c, double cp, const double* load,
               const double* lo, const double* hi, double* out);

}  // namespace serial

namespace omp {

void sym_matvec(const Eigen::MatrixXd& A, const double* x, double* y);
void responses(std::size_t n, const double* lambda_tilde, const double* c, double cp, const double* load,
               const double* lo, const double* hi, double* out);

}  // namespace omp

void sym_matvec(Backend backend, const Eigen::MatrixXd& A, const Eigen::VectorXd& x, Eigen::VectorXd& y);
void responses(Backend backend, const Eigen::VectorXd& lambda_tilde, const Eigen::VectorXd& c, double cp,
               const Eigen::VectorXd& load, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
               Eigen::VectorXd& out);

/// Threads OpenMP would use for a parallel region.
int max_threads();

}  // namespace esscoord::kernels

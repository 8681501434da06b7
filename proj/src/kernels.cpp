#include "esscoord/kernels.hpp"

#include <algorithm>

#include <omp.h>

#include "esscoord/error.hpp"

namespace esscoord::kernels {

namespace {

// Small problems are not worth a parallel region.
constexpr long kParallelMin = 64;

inline double column_dot(const Eigen::MatrixXd& A, Eigen::Index col, const double* x) {
    const double* a = A.data() + col * A.rows();
    double s = 0.0;
    for (Eigen::Index k = 0; k < A.rows(); ++k) s += a[k] * x[k];
    return s;
}

inline double response(double lt, double c, double cp, double load, double lo, double hi) {
    const double b = -(c + lt) / cp - load;
    return std::max(std::min(b, hi), lo);
}

}  // namespace

namespace serial {

void sym_matvec(const Eigen::MatrixXd& A, const double* x, double* y) {
    for (Eigen::Index i = 0; i < A.cols(); ++i) y[i] = column_dot(A, i, x);
}

void responses(std::size_t n, const double* lt, const double* c, double cp, const double* load, const double* lo,
               const double* hi, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = response(lt[i], c[i], cp, load[i], lo[i], hi[i]);
}

}  // namespace serial

namespace omp {

void sym_matvec(const Eigen::MatrixXd& A, const double* x, double* y) {
    const long n = static_cast<long>(A.cols());
    if (n < kParallelMin) return serial::sym_matvec(A, x, y);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) y[i] = column_dot(A, i, x);
}

void responses(std::size_t n, const double* lt, const double* c, double cp, const double* load, const double* lo,
               const double* hi, double* out) {
    const long m = static_cast<long>(n);
    if (m < kParallelMin) return serial::responses(n, lt, c, cp, load, lo, hi, out);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < m; ++i) out[i] = response(lt[i], c[i], cp, load[i], lo[i], hi[i]);
}

}  // namespace omp

void sym_matvec(Backend backend, const Eigen::MatrixXd& A, const Eigen::VectorXd& x, Eigen::VectorXd& y) {
    if (A.rows() != A.cols() || x.size() != A.cols()) throw ValidationError("sym_matvec: dimension mismatch");
    y.resize(A.rows());
    if (backend == Backend::OpenMP)
        omp::sym_matvec(A, x.data(), y.data());
    else
        serial::sym_matvec(A, x.data(), y.data());
}

void responses(Backend backend, const Eigen::VectorXd& lt, const Eigen::VectorXd& c, double cp,
               const Eigen::VectorXd& load, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
               Eigen::VectorXd& out) {
    const auto n = lt.size();
    if (c.size() != n || load.size() != n || lo.size() != n || hi.size() != n)
        throw ValidationError("responses: dimension mismatch");
    out.resize(n);
    const auto m = static_cast<std::size_t>(n);
    if (backend == Backend::OpenMP)
        omp::responses(m, lt.data(), c.data(), cp, load.data(), lo.data(), hi.data(), out.data());
    else
        serial::responses(m, lt.data(), c.data(), cp, load.data(), lo.data(), hi.data(), out.data());
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace esscoord::kernels

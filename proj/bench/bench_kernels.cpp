#include <chrono>
#include <cstdio>
#include <random>

#include "esscoord/kernels.hpp"

using namespace esscoord;
using Clock = std::chrono::steady_clock;

namespace {

template <class F>
double time_per_call(F&& f, int reps) {
    f();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) f();
    return std::chrono::duration<double, std::micro>(Clock::now() - t0).count() / reps;
}

Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64& g) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd B(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) B(i, j) = u(g);
    return B.transpose() * B / static_cast<double>(n);
}

}  // namespace

int main() {
    std::printf("threads=%d\n", kernels::max_threads());
    std::printf("%8s %10s %14s %14s %8s %10s\n", "n", "kernel", "serial_us", "openmp_us", "speedup", "identical");
    std::mt19937_64 g(42);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (Eigen::Index n : {33, 128, 512, 2048}) {
        const auto A = random_spd(n, g);
        Eigen::VectorXd x(n), c(n), load(n), lo(n), hi(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x(i) = u(g);
            c(i) = 10.0 * u(g);
            load(i) = 0.05 * (u(g) + 1.0);
            hi(i) = 0.05 * (u(g) + 1.5);
            lo(i) = -hi(i);
        }
        const int reps = n <= 128 ? 20000 : (n <= 512 ? 2000 : 100);
        Eigen::VectorXd ys, yo;
        const double ms = time_per_call([&] { kernels::sym_matvec(kernels::Backend::Serial, A, x, ys); }, reps);
        const double mo = time_per_call([&] { kernels::sym_matvec(kernels::Backend::OpenMP, A, x, yo); }, reps);
        std::printf("%8ld %10s %14.3f %14.3f %8.2f %10s\n", static_cast<long>(n), "matvec", ms, mo, ms / mo,
                    ys == yo ? "yes" : "no");
        const int rreps = reps * 10;
        const double rs = time_per_call(
            [&] { kernels::responses(kernels::Backend::Serial, x, c, 0.5, load, lo, hi, ys); }, rreps);
        const double ro = time_per_call(
            [&] { kernels::responses(kernels::Backend::OpenMP, x, c, 0.5, load, lo, hi, yo); }, rreps);
        std::printf("%8ld %10s %14.3f %14.3f %8.2f %10s\n", static_cast<long>(n), "responses", rs, ro, rs / ro,
                    ys == yo ? "yes" : "no");
    }
    return 0;
}

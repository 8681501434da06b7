#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "esscoord/grid.hpp"
#include "esscoord/problem.hpp"
#include "esscoord/storage.hpp"
#include "oracles.hpp"

namespace support {

inline std::filesystem::path data(const std::string& rel) { return std::filesystem::path(ESSCOORD_DATA_DIR) / rel; }

inline esscoord::grid::Feeder feeder12() { return esscoord::grid::load_feeder(data("feeders/ieee13_synth.feeder")); }
inline esscoord::grid::Feeder feeder33() { return esscoord::grid::load_feeder(data("feeders/ieee34_synth.feeder")); }

inline esscoord::VoltageModel voltage_model(const esscoord::grid::Feeder& f) {
    esscoord::VoltageModel vm;
    vm.sens = std::make_shared<esscoord::grid::SensitivityMatrices>(esscoord::grid::build_sensitivities(f));
    vm.band = f.band();
    vm.v0 = f.v0();
    return vm;
}

/// Random period problem; the linear term pulls each unit toward a random
/// target so that boxes and voltage rows both end up binding at times.
inline esscoord::StepProblem random_problem(const esscoord::VoltageModel& vm, oracle::Rng& rng, double lmax = 0.06,
                                            double bmax = 0.15) {
    using namespace esscoord;
    const auto n = static_cast<Eigen::Index>(vm.size());
    StepProblem sp;
    sp.mode = Mode::Weighted;
    sp.r = rng.sign();
    sp.c0 = rng.uniform(5.0, 20.0);
    sp.cr = rng.uniform(5.0, 20.0);
    sp.cp = rng.uniform(0.2, 2.0);
    sp.voltage = vm;
    sp.load_p.resize(n);
    sp.load_q.resize(n);
    sp.lo.resize(n);
    sp.hi.resize(n);
    sp.queue.resize(n);
    Eigen::VectorXd target(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        sp.load_p(i) = rng.uniform(0.01, lmax);
        sp.load_q(i) = rng.uniform(0.005, 0.024);
        const double hi = rng.uniform(0.005, bmax), lo = -rng.uniform(0.005, bmax);
        sp.lo(i) = sp.r > 0 ? 0.0 : lo;
        sp.hi(i) = sp.r > 0 ? hi : 0.0;
        target(i) = rng.uniform(sp.lo(i) - 0.03, sp.hi(i) + 0.03);
    }
    // gradient c + cp (b + l) + cp 1'(b + l) vanishes at b = target when the
    // load total is taken at the target
    const double s = (target + sp.load_p).sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double c = -sp.cp * (target(i) + sp.load_p(i)) - sp.cp * s;
        sp.queue(i) = c - (sp.c0 - sp.r * sp.cr);
    }
    sp.linear = (sp.queue.array() - sp.r * sp.cr + sp.c0).matrix();
    sp.background = vm.sens->R * sp.load_p + vm.sens->X * sp.load_q;
    return sp;
}

}  // namespace support

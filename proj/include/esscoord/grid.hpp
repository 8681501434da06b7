#pragma once

#include <algorithm>
#include <complex>
#include <cstddef>
#include <filesystem>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace esscoord::grid {

/// Parent index used for branches leaving the substation.
inline constexpr int kSubstation = -1;

/// A line between `parent` and `child`, both internal bus indices (0..N-1).
/// Impedances are per unit.
struct Branch {
    int parent = kSubstation;
    int child = 0;
    double r = 0.0;
    double x = 0.0;
};

/// Squared-voltage band around v0: alpha <= v - v0 <= beta.
struct VoltageBand {
    double alpha = 0.0;
    double beta = 0.0;
};

/// Radial single-phase feeder rooted at the substation (label 0).
///
/// Buses 1..N of the input are re-indexed 0..N-1 in ascending label order.
/// Branches are kept in parent-before-child order, so a forward pass over
/// `branches()` visits every bus after its parent and a reverse pass visits
/// children first.
class Feeder {
public:
    /// Validates and takes ownership. `branches` may be in any order and use
    /// internal indices; `labels[i]` is the external label of bus i.
    Feeder(double v0, VoltageBand band, std::vector<long> labels, std::vector<Branch> branches);

    std::size_t bus_count() const noexcept { return labels_.size(); }
    double v0() const noexcept { return v0_; }
    const VoltageBand& band() const noexcept { return band_; }
    const std::vector<Branch>& branches() const noexcept { return branches_; }
    const std::vector<long>& labels() const noexcept { return labels_; }

    /// Internal index of an external bus label; throws ValidationError.
    int index_of(long label) const;
    int parent_of(int bus) const { return parent_[static_cast<std::size_t>(bus)]; }
    /// Branch (position in `branches()`) feeding `bus`.
    std::size_t feeding_branch(int bus) const { return feeding_[static_cast<std::size_t>(bus)]; }

private:
    double v0_;
    VoltageBand band_;
    std::vector<long> labels_;
    std::vector<Branch> branches_;
    std::vector<int> parent_;
    std::vector<std::size_t> feeding_;
};

/// Bus resistance/reactance matrices of the linearized model (pu^2 per pu).
struct SensitivityMatrices {
    Eigen::MatrixXd R;
    Eigen::MatrixXd X;
};

/// Sign placed on the parent column of the branch-bus incidence matrix; the
/// child gets the opposite sign. Both yield identical R and X.
enum class IncidenceSign { ParentPositive, ParentNegative };

struct VoltageProfile {
    Eigen::VectorXd v;  ///< squared magnitudes, pu^2

    double min() const { return v.minCoeff(); }
    double max() const { return v.maxCoeff(); }
};

/// Per-bus slack of the voltage band constraints; feasible iff both >= 0.
struct VoltageMargins {
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    bool feasible(double tol = 0.0) const {
        return lower.minCoeff() >= -tol && upper.minCoeff() >= -tol;
    }
    double worst() const { return std::min(lower.minCoeff(), upper.minCoeff()); }
};

struct AcSweepOptions {
    int max_iterations = 200;
    /// Stop once no phasor moves by more than this between sweeps.
    double step_tolerance = 1e-13;
    /// Required power-flow residual at the returned point (pu / pu^2).
    double residual_tolerance = 1e-10;
};

struct AcSolution {
    VoltageProfile voltage;
    Eigen::VectorXcd phasors;          ///< bus voltage phasors
    Eigen::VectorXcd branch_currents;  ///< indexed like Feeder::branches()
    int iterations = 0;
    double residual = 0.0;
};

Feeder parse_feeder(std::string_view text);
Feeder load_feeder(const std::filesystem::path& path);

Eigen::MatrixXi incidence_matrix(const Feeder& feeder, IncidenceSign sign = IncidenceSign::ParentPositive);

SensitivityMatrices build_sensitivities(const Feeder& feeder,
                                        IncidenceSign sign = IncidenceSign::ParentPositive);

/// v = -R p - X q + v0 1
VoltageProfile ldf_voltages(const SensitivityMatrices& s, const Eigen::VectorXd& p,
                            const Eigen::VectorXd& q, double v0);

VoltageMargins voltage_margins(const SensitivityMatrices& s, const Eigen::VectorXd& p,
                               const Eigen::VectorXd& q, const VoltageBand& band);

/// Whether loads alone (no storage) respect the band.
bool base_loads_feasible(const SensitivityMatrices& s, const Eigen::VectorXd& load_p,
                         const Eigen::VectorXd& load_q, const VoltageBand& band, double tol = 0.0);

/// Exact branch-flow solution by backward/forward sweep from a flat start.
/// p, q are consumed (load) powers. Throws DivergenceError.
AcSolution ac_sweep(const Feeder& feeder, const Eigen::VectorXd& p, const Eigen::VectorXd& q,
                    const AcSweepOptions& options = {});

/// Max absolute residual of the branch-flow equations (active/reactive
/// balance at every bus and the squared-voltage drop along every line).
double branch_flow_residual(const Feeder& feeder, const AcSolution& solution,
                            const Eigen::VectorXd& p, const Eigen::VectorXd& q);

}  // namespace esscoord::grid

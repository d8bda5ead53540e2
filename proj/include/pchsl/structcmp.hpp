#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "pchsl/hamfit.hpp"

namespace pchsl {

enum class SirMode { paper_literal, dimensionless };
enum class Verdict { reversible, irreversible };

/// Per-cell landscape values over the comparison domain, plot-ready.
struct DiffGrid {
    Eigen::VectorXd z1;        // grid_resolution midpoints
    Eigen::VectorXd z2;
    Eigen::MatrixXd h_before;  // indexed [i1][i2]
    Eigen::MatrixXd h_after;
    Eigen::MatrixXd diff;      // h_before - h_after
};

struct ComparisonReport {
    double distance_d = 0.0;   // integral of (H_b - H_a)^2 over the domain
    double norm_before = 0.0;  // L2 norm of H_b over the domain
    double sir = 0.0;
    SirMode mode = SirMode::paper_literal;
    double threshold = 0.07;
    Verdict verdict = Verdict::reversible;
    double false_recovery_fraction = 0.0;  // proxy metric (formula documented, not canonical)
    double tau = 0.1;
    Domain domain;
    DiffGrid diff_grid;
};

/// Midpoint-rule integral of (H_b - H_a)^2 over dom. Both polynomials are
/// re-gauged (zero mean over dom) before integrating, so the result is
/// insensitive to the arbitrary additive constant. Refuses to compare
/// Hamiltonians from different embedding frames unless force_frame.
double landscape_distance(const PolyHamiltonian& hb, const PolyHamiltonian& ha,
                          const Domain& dom, bool force_frame = false);

/// sqrt of the midpoint-rule integral of H^2 over dom, on the
/// gauge-fixed-as-given polynomial.
double norm_l2(const PolyHamiltonian& h, const Domain& dom);

/// Full comparison: distance, normalized index, verdict, difference grid
/// and the false-recovery proxy, all computed from the zero-mean re-gauged
/// pair over dom. paper_literal divides the squared-distance integral by
/// the L2 norm; dimensionless uses sqrt(distance)/norm.
ComparisonReport sir(const PolyHamiltonian& hb, const PolyHamiltonian& ha, const Domain& dom,
                     SirMode mode = SirMode::paper_literal, double threshold = 0.07,
                     double tau = 0.1, bool force_frame = false);

/// Fraction of grid cells where |H_b - H_a| > tau * RMS(H_b over dom).
/// Inputs are evaluated as given (no re-gauging).
double false_recovery_fraction(const PolyHamiltonian& hb, const PolyHamiltonian& ha,
                               const Domain& dom, double tau = 0.1);

namespace detail {
/// Grid-level core of the proxy, for callers that already hold landscape
/// samples over a uniform grid.
double false_recovery_fraction_from_grids(const Eigen::MatrixXd& gb, const Eigen::MatrixXd& ga,
                                          double tau);
}  // namespace detail

enum class CriticalPointKind { minimum, maximum, saddle, degenerate };

struct CriticalPoint {
    Eigen::Vector2d location;
    CriticalPointKind kind;
    Eigen::Vector2d hessian_eigenvalues;  // ascending
};

/// Critical points of H inside dom. Quadratics are solved analytically
/// from the linear gradient system; higher degrees fall back to grid
/// search over dom refined by Newton iterations (<= 50, tol 1e-10).
/// Classification is by the Hessian eigenvalues (|eig| < 1e-8 counts as
/// degenerate). Empty list when no critical point lies in dom.
std::vector<CriticalPoint> fixed_point_analysis(const PolyHamiltonian& h, const Domain& dom);

std::string comparison_to_json(const ComparisonReport& r, int indent = 2);
void write_diff_grid_csv(const std::string& path, const DiffGrid& grid);

std::string to_string(SirMode mode);
std::string to_string(Verdict v);
std::string to_string(CriticalPointKind k);
SirMode sir_mode_from_string(const std::string& s);

}  // namespace pchsl

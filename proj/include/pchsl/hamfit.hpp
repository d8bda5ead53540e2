#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "pchsl/dynamics.hpp"

namespace pchsl {

/// Rectangular analysis window in state space with a uniform quadrature
/// grid (midpoint rule, grid_resolution cells per axis, odd).
struct Domain {
    std::array<double, 2> z1_range{-1.0, 1.0};
    std::array<double, 2> z2_range{-1.0, 1.0};
    int grid_resolution = 101;

    double cell_area() const {
        return (z1_range[1] - z1_range[0]) * (z2_range[1] - z2_range[0]) /
               (static_cast<double>(grid_resolution) * grid_resolution);
    }
    /// Midpoint of cell k along an axis.
    double z1_at(int k) const {
        return z1_range[0] + (k + 0.5) * (z1_range[1] - z1_range[0]) / grid_resolution;
    }
    double z2_at(int k) const {
        return z2_range[0] + (k + 0.5) * (z2_range[1] - z2_range[0]) / grid_resolution;
    }
    void validate() const;  // throws ConfigError on bad ranges/resolution
};

enum class Gauge { zero_at_origin, zero_mean_over_domain };

/// Bivariate polynomial H(z1,z2) = sum_{i+j<=max_degree} h_ij z1^i z2^j.
/// Coefficients are stored densely in (i,j)-lexicographic order. The
/// constant h_00 is pure gauge: dynamics never determine it, so it is
/// fixed by convention before any landscape comparison.
struct PolyHamiltonian {
    int max_degree = 2;
    Eigen::VectorXd coeffs;  // (max_degree+1)(max_degree+2)/2 entries
    Domain domain;
    Gauge gauge = Gauge::zero_mean_over_domain;
    std::string frame_id;  // embedding frame this H was fitted in, empty = unset

    PolyHamiltonian() : coeffs(Eigen::VectorXd::Zero(6)) {}
    explicit PolyHamiltonian(int degree)
        : max_degree(degree),
          coeffs(Eigen::VectorXd::Zero((degree + 1) * (degree + 2) / 2)) {}

    static int coeff_count(int degree) { return (degree + 1) * (degree + 2) / 2; }
    int coeff_count() const { return coeff_count(max_degree); }

    /// Position of h_ij in the lexicographic layout.
    int index_of(int i, int j) const { return i * (max_degree + 1) - i * (i - 1) / 2 + j; }
    double coeff(int i, int j) const { return coeffs[index_of(i, j)]; }
    void set_coeff(int i, int j, double v) { coeffs[index_of(i, j)] = v; }
};

/// Horner-style evaluation of H at z.
double eval_hamiltonian(const PolyHamiltonian& h, const Eigen::Vector2d& z);

/// Analytic gradient (dH/dz1, dH/dz2).
Eigen::Vector2d hamiltonian_gradient(const PolyHamiltonian& h, const Eigen::Vector2d& z);

/// J grad H with J = [[0,1],[-1,0]]: returns (dH/dz2, -dH/dz1).
Eigen::Vector2d symplectic_field(const PolyHamiltonian& h, const Eigen::Vector2d& z);

/// Fix the gauge constant h_00: zero_at_origin sets it to 0,
/// zero_mean_over_domain shifts it so the mean of H over the domain grid
/// vanishes.
PolyHamiltonian gauge_fix(const PolyHamiltonian& h);
PolyHamiltonian gauge_fix(const PolyHamiltonian& h, Gauge gauge, const Domain& dom);

enum class FitSolver { ridge_closed_form, gradient_descent };

struct FitConfig {
    double lambda = 1e-3;
    FitSolver solver = FitSolver::ridge_closed_form;
    int gd_steps = 5000;
    double gd_learning_rate = 1e-2;
    bool include_dissipation = false;
    int max_degree = 2;
    Gauge gauge = Gauge::zero_mean_over_domain;
};

struct FitReport {
    double initial_loss = 0.0;  // loss at theta = 0, i.e. mean |zdot|^2
    double final_loss = 0.0;
    double convergence_improvement = 0.0;  // percent, 100*(initial-final)/initial
    Eigen::Vector2d residual_rms{0.0, 0.0};
    PolyHamiltonian hamiltonian;
    std::optional<Eigen::Vector2d> dissipation;  // linear drag gamma per component
    std::vector<double> loss_trace;              // gradient descent only
};

/// Stacked linear system mapping the non-constant coefficient vector theta
/// to predicted (J grad H)(z_t): rows 2t and 2t+1 hold the zdot1/zdot2
/// components of sample t. When with_dissipation, two trailing columns
/// carry the -diag(gamma) z drag terms.
struct DesignSystem {
    Eigen::MatrixXd A;  // 2*(T) x P
    Eigen::VectorXd b;  // stacked observed velocities
    int n_samples = 0;
    int max_degree = 2;
    bool with_dissipation = false;
};

DesignSystem build_design(const VelocityTrajectory& vt, int max_degree,
                          bool with_dissipation = false);

/// Physics-constrained loss |A theta - b|^2 / n_samples + lambda |theta|^2
/// and its analytic gradient.
double fit_loss(const DesignSystem& sys, const Eigen::VectorXd& theta, double lambda);
Eigen::VectorXd fit_loss_gradient(const DesignSystem& sys, const Eigen::VectorXd& theta,
                                  double lambda);

/// Learn the Hamiltonian from observed velocities. ridge_closed_form
/// solves the normal equations (A'A/T + lambda I) theta = A'b/T;
/// gradient_descent starts at theta = 0 and runs full-batch steps. The
/// returned Hamiltonian is gauge-fixed over dom per cfg.gauge.
FitReport fit(const VelocityTrajectory& vt, const FitConfig& cfg, const Domain& dom);

/// JSON document {max_degree, gauge, domain, coeffs:[{i,j,value}]} with
/// coefficients in (i,j)-lexicographic order.
std::string hamiltonian_to_json(const PolyHamiltonian& h, int indent = 2);
PolyHamiltonian hamiltonian_from_json(const std::string& text);
PolyHamiltonian load_hamiltonian(const std::string& path);
void save_hamiltonian(const std::string& path, const PolyHamiltonian& h);

std::string to_string(Gauge gauge);
Gauge gauge_from_string(const std::string& s);

}  // namespace pchsl

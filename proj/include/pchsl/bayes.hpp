#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "pchsl/hamfit.hpp"

namespace pchsl {

struct HmcConfig {
    int leapfrog_steps = 20;
    double step_size = 0.1;  // initial; adapted during warmup
    int warmup = 500;
    int samples = 1000;  // post-warmup draws, >= 100
    std::uint64_t seed = 0;
    int max_degree = 2;
};

/// Posterior draws over the non-constant Hamiltonian coefficients
/// (P = coeff_count - 1, lexicographic order without h_00).
struct Posterior {
    Eigen::MatrixXd samples;  // S x P
    double acceptance_rate = 0.0;  // post-warmup
    int warmup = 0;
    Eigen::VectorXd mean;  // P
    Eigen::VectorXd sd;
    Eigen::VectorXd q025;
    Eigen::VectorXd q975;
    double noise_sigma = 1.0;
    int max_degree = 2;
    int divergence_count = 0;  // post-warmup proposals with non-finite energy
};

/// Per-cell posterior quantile surfaces of the energy landscape.
struct LandscapeBands {
    Eigen::MatrixXd q025;  // grid_resolution x grid_resolution
    Eigen::MatrixXd q50;
    Eigen::MatrixXd q975;
    Domain domain;
};

/// Hamiltonian Monte Carlo over the Gaussian target
///   log pi(theta) = -|A theta - b|^2 / (2 noise_sigma^2)
///                   - |theta|^2 / (2 prior_sigma^2) + const,
/// identity mass matrix, leapfrog proposals with Metropolis correction.
/// During warmup the step size is adapted multiplicatively (x1.1 after an
/// accept streak, x0.9 on reject) and frozen afterwards. An empty vt
/// yields the prior. Deterministic given cfg.seed.
Posterior hmc_sample(const VelocityTrajectory& vt, double prior_sigma, double noise_sigma,
                     const HmcConfig& cfg);

/// Evaluate H over the domain grid under every posterior draw (each draw
/// gauge-fixed to zero mean over dom) and return 2.5/50/97.5 percentile
/// surfaces.
LandscapeBands landscape_bands(const Posterior& p, const Domain& dom);

std::string posterior_to_json(const Posterior& p, int indent = 2);
void write_posterior_csv(const std::string& path, const Posterior& p);

namespace detail {

/// Gaussian potential in normal-equation form:
///   U(q) = (q' gram q - 2 q' atb + btb) / (2 noise^2) + |q|^2 / (2 prior^2).
struct QuadraticTarget {
    Eigen::MatrixXd gram;
    Eigen::VectorXd atb;
    double btb = 0.0;
    double inv_noise2 = 1.0;
    double inv_prior2 = 1.0;

    double potential(const Eigen::VectorXd& q) const;
    Eigen::VectorXd grad(const Eigen::VectorXd& q) const;

    static QuadraticTarget prior_only(int dim, double prior_sigma);
};

/// `steps` leapfrog steps of size eps; returns (position, momentum).
/// Exposed so reversibility and energy behavior can be checked directly.
std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(const QuadraticTarget& target,
                                                     Eigen::VectorXd q, Eigen::VectorXd p,
                                                     double eps, int steps);

}  // namespace detail

}  // namespace pchsl

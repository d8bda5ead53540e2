#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "pchsl/hamfit.hpp"
#include "pchsl/ingest.hpp"

namespace pchsl {

/// Ground-truthed generator: integrates zdot = J grad H(z) - diag(gamma) z
/// and optionally lifts the 2D states into a high-dimensional observation
/// matrix, producing datasets the full pipeline can consume.
struct SynthScenario {
    PolyHamiltonian h_true;
    Eigen::Vector2d gamma{0.0, 0.0};  // linear drag, >= 0 componentwise
    double dt = 0.01;                 // seconds
    int steps = 1000;                 // trajectory length, >= 5
    Eigen::Vector2d z0{1.0, 0.0};
    double obs_noise_sigma = 0.0;
    std::optional<int> lift_dim;  // >= 2 when set
    std::uint64_t seed = 0;
};

/// Classical RK4 integration; `steps` rows starting at z0. Throws Blowup
/// if the state magnitude exceeds 1e12.
StateTrajectory integrate(const SynthScenario& s);

/// x_t = W z_t + eps with a seeded random N x 2 basis W (orthonormal
/// columns) and eps ~ N(0, sigma^2). Timestamps run 0, dt, 2dt, ...
TimeSeriesMatrix lift(const StateTrajectory& z, int lift_dim, double noise_sigma,
                      std::uint64_t seed);

/// Same lift with an explicit basis (columns need not be orthonormal).
TimeSeriesMatrix lift_with_basis(const StateTrajectory& z, const Eigen::MatrixXd& basis,
                                 double noise_sigma, std::uint64_t seed);

/// Seeded random N x 2 matrix with orthonormalized columns, as used by lift.
Eigen::MatrixXd lift_basis(int lift_dim, std::uint64_t seed);

/// Concatenate two simulated windows into one dataset with the event at
/// the junction. Both scenarios must share dt and lift parameters; the
/// lift basis is drawn once so both windows pass through the same
/// observation map.
EventSplit make_event_pair(const SynthScenario& before, const SynthScenario& after);

/// The concatenated dataset as one matrix (event_time set at the junction).
TimeSeriesMatrix make_event_dataset(const SynthScenario& before, const SynthScenario& after);

}  // namespace pchsl

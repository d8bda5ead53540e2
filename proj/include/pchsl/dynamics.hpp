#pragma once

#include <Eigen/Dense>
#include <string>

#include "pchsl/embed.hpp"

namespace pchsl {

/// Interior states paired with centered finite-difference velocities, in
/// state units per second.
struct VelocityTrajectory {
    Eigen::MatrixXd states;      // (T-2) x d
    Eigen::MatrixXd velocities;  // (T-2) x d
    double dt = 1.0;
    std::string frame_id;

    Eigen::Index n_samples() const { return states.rows(); }
    Eigen::Index dim() const { return states.cols(); }
};

/// velocities[t] = (z[t+1] - z[t-1]) / (2 dt) at interior points; exact
/// for polynomial trajectories of degree <= 2.
VelocityTrajectory central_differences(const StateTrajectory& z);

/// Centered moving average per component; window must be odd, endpoints
/// use shrunken windows. window == 1 is the identity.
StateTrajectory smooth(const StateTrajectory& z, int window);

/// Debug export `t,z1,z2,v1,v2`.
void write_velocity_csv(const std::string& path, const VelocityTrajectory& vt);

}  // namespace pchsl

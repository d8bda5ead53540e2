#include "pchsl/dynamics.hpp"

#include <cstdio>
#include <fstream>

#include "pchsl/errors.hpp"

namespace pchsl {

VelocityTrajectory central_differences(const StateTrajectory& z) {
    const Eigen::Index T = z.n_steps();
    if (T < 3)
        throw Error(error_codes::TrajectoryTooShort,
                    "central differences need >= 3 steps, got " + std::to_string(T));
    if (!(z.dt > 0.0)) throw Error(error_codes::ConfigError, "dt must be positive");

    VelocityTrajectory vt;
    vt.states = z.states.middleRows(1, T - 2);
    vt.velocities = (z.states.bottomRows(T - 2) - z.states.topRows(T - 2)) / (2.0 * z.dt);
    vt.dt = z.dt;
    vt.frame_id = z.frame_id;
    return vt;
}

StateTrajectory smooth(const StateTrajectory& z, int window) {
    const Eigen::Index T = z.n_steps();
    if (window < 1 || window % 2 == 0 || window > T)
        throw Error(error_codes::BadWindow,
                    "window must be odd and in [1, T=" + std::to_string(T) + "], got " +
                        std::to_string(window));
    if (window == 1) return z;

    StateTrajectory out = z;
    const Eigen::Index half = window / 2;
    for (Eigen::Index t = 0; t < T; ++t) {
        const Eigen::Index lo = std::max<Eigen::Index>(0, t - half);
        const Eigen::Index hi = std::min<Eigen::Index>(T - 1, t + half);
        out.states.row(t) = z.states.middleRows(lo, hi - lo + 1).colwise().mean();
    }
    return out;
}

void write_velocity_csv(const std::string& path, const VelocityTrajectory& vt) {
    std::ofstream out(path);
    if (!out) throw Error(error_codes::IoError, "cannot open '" + path + "' for writing");
    out << "t,z1,z2,v1,v2\n";
    char buf[64];
    for (Eigen::Index t = 0; t < vt.n_samples(); ++t) {
        // interior points start one dt into the source trajectory
        std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(t + 1) * vt.dt);
        out << buf;
        for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, vt.dim()); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", vt.states(t, c));
            out << ',' << buf;
        }
        for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, vt.dim()); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", vt.velocities(t, c));
            out << ',' << buf;
        }
        out << '\n';
    }
}

}  // namespace pchsl

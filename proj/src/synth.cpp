#include "pchsl/synth.hpp"

#include <cmath>
#include <random>

#include "pchsl/errors.hpp"

namespace pchsl {

namespace {

constexpr double kBlowupLimit = 1e12;

Eigen::Vector2d rhs(const SynthScenario& s, const Eigen::Vector2d& z) {
    Eigen::Vector2d v = symplectic_field(s.h_true, z);
    v[0] -= s.gamma[0] * z[0];
    v[1] -= s.gamma[1] * z[1];
    return v;
}

void validate(const SynthScenario& s) {
    if (!(s.dt > 0.0)) throw Error(error_codes::ConfigError, "dt must be > 0");
    if (s.steps < 5) throw Error(error_codes::ConfigError, "steps must be >= 5");
    if (s.gamma[0] < 0.0 || s.gamma[1] < 0.0)
        throw Error(error_codes::ConfigError, "gamma must be >= 0 componentwise");
    if (s.obs_noise_sigma < 0.0)
        throw Error(error_codes::ConfigError, "obs_noise_sigma must be >= 0");
    if (s.lift_dim && *s.lift_dim < 2)
        throw Error(error_codes::ConfigError, "lift_dim must be >= 2");
}

}  // namespace

StateTrajectory integrate(const SynthScenario& s) {
    validate(s);
    StateTrajectory traj;
    traj.states.resize(s.steps, 2);
    traj.dt = s.dt;
    traj.provenance = Provenance::raw;

    Eigen::Vector2d z = s.z0;
    traj.states.row(0) = z.transpose();
    for (int t = 1; t < s.steps; ++t) {
        const Eigen::Vector2d k1 = rhs(s, z);
        const Eigen::Vector2d k2 = rhs(s, z + 0.5 * s.dt * k1);
        const Eigen::Vector2d k3 = rhs(s, z + 0.5 * s.dt * k2);
        const Eigen::Vector2d k4 = rhs(s, z + s.dt * k3);
        z += s.dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!z.allFinite() || z.norm() > kBlowupLimit)
            throw Error(error_codes::Blowup,
                        "state magnitude exceeded 1e12 at step " + std::to_string(t) +
                            "; scenario unstable");
        traj.states.row(t) = z.transpose();
    }
    return traj;
}

Eigen::MatrixXd lift_basis(int lift_dim, std::uint64_t seed) {
    if (lift_dim < 2) throw Error(error_codes::ConfigError, "lift_dim must be >= 2");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd w(lift_dim, 2);
    for (Eigen::Index i = 0; i < w.rows(); ++i)
        for (Eigen::Index j = 0; j < 2; ++j) w(i, j) = gauss(rng);
    // Gram-Schmidt
    w.col(0).normalize();
    w.col(1) -= w.col(0).dot(w.col(1)) * w.col(0);
    w.col(1).normalize();
    return w;
}

TimeSeriesMatrix lift_with_basis(const StateTrajectory& z, const Eigen::MatrixXd& basis,
                                 double noise_sigma, std::uint64_t seed) {
    if (basis.cols() != z.dim())
        throw Error(error_codes::DimensionMismatch,
                    "basis has " + std::to_string(basis.cols()) + " columns, states have dim " +
                        std::to_string(z.dim()));
    TimeSeriesMatrix x;
    x.values = basis * z.states.transpose();  // N x T
    if (noise_sigma > 0.0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> gauss(0.0, noise_sigma);
        for (Eigen::Index c = 0; c < x.values.cols(); ++c)
            for (Eigen::Index r = 0; r < x.values.rows(); ++r) x.values(r, c) += gauss(rng);
    }
    x.segment_ids.reserve(static_cast<std::size_t>(basis.rows()));
    for (Eigen::Index i = 0; i < basis.rows(); ++i)
        x.segment_ids.push_back("seg" + std::to_string(i));
    x.timestamps.resize(static_cast<std::size_t>(z.n_steps()));
    for (Eigen::Index t = 0; t < z.n_steps(); ++t)
        x.timestamps[static_cast<std::size_t>(t)] = static_cast<double>(t) * z.dt;
    return x;
}

TimeSeriesMatrix lift(const StateTrajectory& z, int lift_dim, double noise_sigma,
                      std::uint64_t seed) {
    return lift_with_basis(z, lift_basis(lift_dim, seed), noise_sigma, seed + 1);
}

TimeSeriesMatrix make_event_dataset(const SynthScenario& before, const SynthScenario& after) {
    validate(before);
    validate(after);
    if (before.dt != after.dt)
        throw Error(error_codes::ConfigError, "both scenarios must share dt");
    if (before.lift_dim != after.lift_dim)
        throw Error(error_codes::ConfigError, "both scenarios must share lift parameters");

    const StateTrajectory zb = integrate(before);
    const StateTrajectory za = integrate(after);

    TimeSeriesMatrix xb, xa;
    if (before.lift_dim) {
        // one basis for both windows, keyed by the before seed
        const Eigen::MatrixXd w = lift_basis(*before.lift_dim, before.seed);
        xb = lift_with_basis(zb, w, before.obs_noise_sigma, before.seed + 1);
        xa = lift_with_basis(za, w, after.obs_noise_sigma, after.seed + 1);
    } else {
        xb = lift_with_basis(zb, Eigen::Matrix2d::Identity(), before.obs_noise_sigma,
                             before.seed + 1);
        xa = lift_with_basis(za, Eigen::Matrix2d::Identity(), after.obs_noise_sigma,
                             after.seed + 1);
        xb.segment_ids = {"z1", "z2"};
        xa.segment_ids = {"z1", "z2"};
    }

    TimeSeriesMatrix out;
    out.values.resize(xb.values.rows(), xb.values.cols() + xa.values.cols());
    out.values << xb.values, xa.values;
    out.segment_ids = xb.segment_ids;
    out.timestamps = xb.timestamps;
    const double t0_after = xb.timestamps.back() + before.dt;
    for (std::size_t t = 0; t < xa.timestamps.size(); ++t)
        out.timestamps.push_back(t0_after + xa.timestamps[t]);
    out.event_time = t0_after;
    return out;
}

EventSplit make_event_pair(const SynthScenario& before, const SynthScenario& after) {
    const TimeSeriesMatrix joint = make_event_dataset(before, after);
    return split_at_event(joint, *joint.event_time);
}

}  // namespace pchsl

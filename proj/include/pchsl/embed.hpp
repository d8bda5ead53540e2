#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <utility>

#include "pchsl/ingest.hpp"

namespace pchsl {

enum class Provenance { raw, pca_only, pca_tsne };
enum class WindowLabel { none, before, after };

/// Low-dimensional state sequence z_t sampled at uniform dt. frame_id ties
/// trajectories embedded in one coordinate frame together; downstream
/// landscape comparison refuses to mix frames.
struct StateTrajectory {
    Eigen::MatrixXd states;  // T x d
    double dt = 1.0;         // seconds
    Provenance provenance = Provenance::raw;
    WindowLabel window_label = WindowLabel::none;
    std::string frame_id;  // empty = unset

    Eigen::Index n_steps() const { return states.rows(); }
    Eigen::Index dim() const { return states.cols(); }
};

/// Principal directions of the column-sample covariance. Rows of
/// components are orthonormal; samples are the T columns of the source
/// matrix viewed as vectors in R^N.
struct PcaModel {
    Eigen::MatrixXd components;               // d_pca x N
    Eigen::VectorXd mean;                     // N
    Eigen::VectorXd explained_variance_ratio; // d_pca, non-increasing
    bool rank_deficient = false;              // fewer nonzero singular values than requested
};

struct TsneConfig {
    double perplexity = 30.0;
    double learning_rate = 200.0;
    int iterations = 1000;
    std::uint64_t seed = 42;
};

struct TsneResult {
    Eigen::MatrixXd points;  // n x 2
    double kl_after_exaggeration = 0.0;  // KL(P||Q) with true P at end of exaggeration
    double kl_final = 0.0;
};

/// SVD-based PCA of the centered T x N sample matrix. Component signs are
/// fixed by making each row's largest-magnitude entry positive. If the
/// data has fewer than d_pca nonzero singular values the achievable rank
/// is returned and rank_deficient is set.
PcaModel fit_pca(const TimeSeriesMatrix& x, int d_pca);

StateTrajectory project(const PcaModel& model, const TimeSeriesMatrix& x,
                        WindowLabel label = WindowLabel::none);

/// Exact O(n^2) t-SNE to 2D. Per-point Gaussian bandwidths are bisected to
/// match the target perplexity; optimization runs `iterations` steps of
/// momentum gradient descent (0.5 then 0.8 after step 250) with x12 early
/// exaggeration for the first 250 steps. Deterministic given cfg.seed.
TsneResult tsne_embed_full(const Eigen::MatrixXd& points, const TsneConfig& cfg);
Eigen::MatrixXd tsne_embed(const Eigen::MatrixXd& points, const TsneConfig& cfg);

/// Embed both windows in one t-SNE run so their coordinates share a frame.
/// Outputs carry provenance pca_tsne and a shared frame_id derived from
/// the input data and the seed.
std::pair<StateTrajectory, StateTrajectory> embed_joint(const StateTrajectory& before,
                                                        const StateTrajectory& after,
                                                        const TsneConfig& cfg);

/// CSV export `t,z1,z2,window` (first two state components).
void write_trajectory_csv(const std::string& path, const StateTrajectory& z);

std::string to_string(WindowLabel label);

namespace detail {
/// Symmetrized, normalized t-SNE affinities (sum over all pairs == 1).
/// Exposed for verification.
Eigen::MatrixXd tsne_affinities(const Eigen::MatrixXd& points, double perplexity);
}  // namespace detail

}  // namespace pchsl

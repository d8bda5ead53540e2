#include "pchsl/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <Eigen/SVD>

#include "pchsl/errors.hpp"

namespace pchsl {

namespace {

constexpr double kExaggeration = 12.0;
constexpr int kExaggerationIters = 250;
constexpr double kMomentumEarly = 0.5;
constexpr double kMomentumLate = 0.8;
constexpr int kMomentumSwitchIter = 250;
constexpr int kBisectionIters = 50;
constexpr double kLog2PerpTol = 1e-5;

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& y) {
    const Eigen::VectorXd sq = y.rowwise().squaredNorm();
    Eigen::MatrixXd d = (-2.0 * y * y.transpose());
    d.colwise() += sq;
    d.rowwise() += sq.transpose();
    d.diagonal().setZero();
    return d.cwiseMax(0.0);
}

// Shannon entropy (nats) and conditional row p_{j|i} for precision beta.
double row_entropy(const Eigen::VectorXd& dist_row, Eigen::Index i, double beta,
                   Eigen::VectorXd& p_out) {
    const Eigen::Index n = dist_row.size();
    p_out.setZero(n);
    double sum = 0.0, weighted = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (j == i) continue;
        const double p = std::exp(-beta * dist_row[j]);
        p_out[j] = p;
        sum += p;
        weighted += p * dist_row[j];
    }
    if (sum <= 0.0) {
        // beta so large every term underflowed; entropy 0
        return 0.0;
    }
    p_out /= sum;
    return std::log(sum) + beta * weighted / sum;
}

double kl_divergence(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    double kl = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            if (i == j || p(i, j) <= 0.0) continue;
            kl += p(i, j) * (std::log(p(i, j)) - std::log(std::max(q(i, j), 1e-300)));
        }
    return kl;
}

std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 1469598103934665603ull) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace

PcaModel fit_pca(const TimeSeriesMatrix& x, int d_pca) {
    const Eigen::Index N = x.n_segments();
    const Eigen::Index T = x.n_steps();
    if (d_pca < 1 || d_pca > std::min(N, T))
        throw Error(error_codes::DimensionMismatch,
                    "d_pca must be in [1, min(N,T)] = [1, " +
                        std::to_string(std::min(N, T)) + "], got " + std::to_string(d_pca));

    // T samples of dimension N
    Eigen::MatrixXd samples = x.values.transpose();
    const Eigen::VectorXd mean = samples.colwise().mean();
    samples.rowwise() -= mean.transpose();

    Eigen::BDCSVD<Eigen::MatrixXd> svd(samples, Eigen::ComputeThinV);
    const Eigen::VectorXd& sv = svd.singularValues();
    const double total_var = sv.array().square().sum();

    const double tol = sv.size() > 0 ? sv[0] * 1e-10 : 0.0;
    int rank = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k)
        if (sv[k] > tol && sv[k] > 0.0) ++rank;

    PcaModel model;
    model.mean = mean;
    const int d = std::min(d_pca, rank);
    model.rank_deficient = d < d_pca;
    model.components.resize(d, N);
    model.explained_variance_ratio.resize(d);
    for (int k = 0; k < d; ++k) {
        Eigen::RowVectorXd comp = svd.matrixV().col(k).transpose();
        Eigen::Index imax = 0;
        comp.array().abs().maxCoeff(&imax);
        if (comp[imax] < 0.0) comp = -comp;
        model.components.row(k) = comp;
        model.explained_variance_ratio[k] =
            total_var > 0.0 ? sv[k] * sv[k] / total_var : 0.0;
    }
    return model;
}

StateTrajectory project(const PcaModel& model, const TimeSeriesMatrix& x, WindowLabel label) {
    if (model.mean.size() != x.n_segments())
        throw Error(error_codes::DimensionMismatch,
                    "model expects " + std::to_string(model.mean.size()) + " segments, data has " +
                        std::to_string(x.n_segments()));
    StateTrajectory z;
    z.states = (x.values.colwise() - model.mean).transpose() * model.components.transpose();
    z.dt = x.n_steps() >= 2 ? x.dt() : 1.0;
    z.provenance = Provenance::pca_only;
    z.window_label = label;
    return z;
}

namespace detail {

Eigen::MatrixXd tsne_affinities(const Eigen::MatrixXd& points, double perplexity) {
    const Eigen::Index n = points.rows();
    const Eigen::MatrixXd dist = squared_distances(points);
    if (dist.maxCoeff() <= 0.0)
        throw Error(error_codes::DegenerateDistances, "all pairwise distances are zero");

    const double target_log2_perp = std::log2(perplexity);
    Eigen::MatrixXd cond(n, n);
    Eigen::VectorXd p_row(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double beta = 1.0, beta_min = -1.0, beta_max = -1.0;  // <0 = unbounded
        const Eigen::VectorXd drow = dist.row(i);
        for (int it = 0; it < kBisectionIters; ++it) {
            const double h = row_entropy(drow, i, beta, p_row);
            const double log2_perp = h / std::log(2.0);
            const double diff = log2_perp - target_log2_perp;
            if (std::abs(diff) < kLog2PerpTol) break;
            if (diff > 0.0) {  // entropy too high -> sharpen
                beta_min = beta;
                beta = beta_max < 0.0 ? beta * 2.0 : 0.5 * (beta + beta_max);
            } else {
                beta_max = beta;
                beta = beta_min < 0.0 ? beta * 0.5 : 0.5 * (beta + beta_min);
            }
        }
        row_entropy(drow, i, beta, p_row);
        cond.row(i) = p_row.transpose();
    }
    Eigen::MatrixXd p = (cond + cond.transpose()) / (2.0 * static_cast<double>(n));
    return p;
}

}  // namespace detail

TsneResult tsne_embed_full(const Eigen::MatrixXd& points, const TsneConfig& cfg) {
    const Eigen::Index n = points.rows();
    if (n < 4 || cfg.perplexity > (static_cast<double>(n) - 1.0) / 3.0)
        throw Error(error_codes::PerplexityTooLarge,
                    "need n >= 4 and perplexity <= (n-1)/3; got n=" + std::to_string(n) +
                        ", perplexity=" + std::to_string(cfg.perplexity));
    if (cfg.perplexity <= 0.0 || cfg.iterations < 1 || cfg.learning_rate <= 0.0)
        throw Error(error_codes::ConfigError, "invalid t-SNE configuration");

    const Eigen::MatrixXd p = detail::tsne_affinities(points, cfg.perplexity);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1e-2);
    Eigen::MatrixXd y(n, 2);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index c = 0; c < 2; ++c) y(i, c) = gauss(rng);

    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(n, 2);
    const int exag_end = std::min(kExaggerationIters, cfg.iterations);

    TsneResult result;
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerated = iter < exag_end;
        const double momentum = iter < kMomentumSwitchIter ? kMomentumEarly : kMomentumLate;

        Eigen::MatrixXd qt = (1.0 + squared_distances(y).array()).inverse().matrix();
        qt.diagonal().setZero();
        const double z = qt.sum();

        // W_ij = (p_eff - q)_ij * qt_ij ; grad_i = 4 * sum_j W_ij (y_i - y_j)
        Eigen::MatrixXd w = ((exaggerated ? kExaggeration : 1.0) * p - qt / z).cwiseProduct(qt);
        const Eigen::VectorXd wsum = w.rowwise().sum();
        Eigen::MatrixXd grad = 4.0 * (wsum.asDiagonal() * y - w * y);

        velocity = momentum * velocity - cfg.learning_rate * grad;
        y += velocity;
        y.rowwise() -= y.colwise().mean();

        if (iter == exag_end - 1 || iter == cfg.iterations - 1) {
            Eigen::MatrixXd qt2 = (1.0 + squared_distances(y).array()).inverse().matrix();
            qt2.diagonal().setZero();
            const Eigen::MatrixXd q = qt2 / qt2.sum();
            const double kl = kl_divergence(p, q);
            if (iter == exag_end - 1) result.kl_after_exaggeration = kl;
            if (iter == cfg.iterations - 1) result.kl_final = kl;
        }
    }
    result.points = std::move(y);
    return result;
}

Eigen::MatrixXd tsne_embed(const Eigen::MatrixXd& points, const TsneConfig& cfg) {
    return tsne_embed_full(points, cfg).points;
}

std::pair<StateTrajectory, StateTrajectory> embed_joint(const StateTrajectory& before,
                                                        const StateTrajectory& after,
                                                        const TsneConfig& cfg) {
    if (before.dim() != after.dim())
        throw Error(error_codes::DimensionMismatch,
                    "before/after trajectories must share d_pca (" + std::to_string(before.dim()) +
                        " vs " + std::to_string(after.dim()) + ")");
    const Eigen::Index tb = before.n_steps(), ta = after.n_steps();
    Eigen::MatrixXd joint(tb + ta, before.dim());
    joint.topRows(tb) = before.states;
    joint.bottomRows(ta) = after.states;

    const Eigen::MatrixXd y = tsne_embed(joint, cfg);

    std::uint64_t h = fnv1a(joint.data(), sizeof(double) * static_cast<std::size_t>(joint.size()));
    h = fnv1a(&cfg.seed, sizeof(cfg.seed), h);
    h = fnv1a(&cfg.perplexity, sizeof(cfg.perplexity), h);
    char frame[32];
    std::snprintf(frame, sizeof(frame), "%016llx", static_cast<unsigned long long>(h));

    StateTrajectory out_b;
    out_b.states = y.topRows(tb);
    out_b.dt = before.dt;
    out_b.provenance = Provenance::pca_tsne;
    out_b.window_label = WindowLabel::before;
    out_b.frame_id = frame;
    StateTrajectory out_a;
    out_a.states = y.bottomRows(ta);
    out_a.dt = after.dt;
    out_a.provenance = Provenance::pca_tsne;
    out_a.window_label = WindowLabel::after;
    out_a.frame_id = frame;
    return {std::move(out_b), std::move(out_a)};
}

void write_trajectory_csv(const std::string& path, const StateTrajectory& z) {
    std::ofstream out(path);
    if (!out) throw Error(error_codes::IoError, "cannot open '" + path + "' for writing");
    out << "t,z1,z2,window\n";
    char buf[64];
    const std::string label = to_string(z.window_label);
    for (Eigen::Index t = 0; t < z.n_steps(); ++t) {
        std::snprintf(buf, sizeof(buf), "%.17g", static_cast<double>(t) * z.dt);
        out << buf;
        for (Eigen::Index c = 0; c < std::min<Eigen::Index>(2, z.dim()); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", z.states(t, c));
            out << ',' << buf;
        }
        out << ',' << label << '\n';
    }
}

std::string to_string(WindowLabel label) {
    switch (label) {
        case WindowLabel::before: return "before";
        case WindowLabel::after: return "after";
        case WindowLabel::none: return "none";
    }
    return "none";
}

}  // namespace pchsl

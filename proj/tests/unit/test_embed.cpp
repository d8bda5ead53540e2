#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "pchsl/embed.hpp"
#include "pchsl/errors.hpp"

using namespace pchsl;

namespace {

TimeSeriesMatrix matrix_from(const Eigen::MatrixXd& values) {
    TimeSeriesMatrix x;
    x.values = values;
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        x.segment_ids.push_back("s" + std::to_string(i));
    for (Eigen::Index t = 0; t < values.cols(); ++t)
        x.timestamps.push_back(static_cast<double>(t));
    return x;
}

// brute-force covariance eigenvalues for the 2x2 oracle
Eigen::Vector2d covariance_eigenvalues(const Eigen::MatrixXd& samples) {
    const Eigen::RowVectorXd mean = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - mean;
    const Eigen::Matrix2d cov =
        centered.transpose() * centered / static_cast<double>(samples.rows());
    const double tr = cov(0, 0) + cov(1, 1);
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
    return {tr / 2.0 + disc, tr / 2.0 - disc};
}

}  // namespace

TEST_SUITE("embed") {

TEST_CASE("pca: collinear samples yield the line direction with full variance") {
    Eigen::MatrixXd values(2, 50);  // x_t = (t, 2t)
    for (int t = 0; t < 50; ++t) {
        values(0, t) = t;
        values(1, t) = 2.0 * t;
    }
    const PcaModel model = fit_pca(matrix_from(values), 1);
    REQUIRE(model.components.rows() == 1);
    const double inv_sqrt5 = 1.0 / std::sqrt(5.0);
    CHECK(model.components(0, 0) == doctest::Approx(inv_sqrt5).epsilon(1e-10));
    CHECK(model.components(0, 1) == doctest::Approx(2.0 * inv_sqrt5).epsilon(1e-10));
    CHECK(model.explained_variance_ratio[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca: isotropic gaussian splits variance evenly (oracle: covariance eigenvalues)") {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd values(2, 4000);
    for (Eigen::Index t = 0; t < values.cols(); ++t) {
        values(0, t) = gauss(rng);
        values(1, t) = gauss(rng);
    }
    const PcaModel model = fit_pca(matrix_from(values), 2);
    const Eigen::Vector2d eig = covariance_eigenvalues(values.transpose());
    const double expected_top = eig[0] / (eig[0] + eig[1]);
    CHECK(model.explained_variance_ratio[0] == doctest::Approx(expected_top).epsilon(1e-9));
    CHECK(model.explained_variance_ratio[0] == doctest::Approx(0.5).epsilon(0.1));
    CHECK(model.explained_variance_ratio[1] == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("pca: full decomposition explains all variance and is orthonormal") {
    std::mt19937_64 rng(17);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd values(4, 60);
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index t = 0; t < values.cols(); ++t) values(i, t) = gauss(rng);
    const PcaModel model = fit_pca(matrix_from(values), 4);
    CHECK(model.explained_variance_ratio.sum() == doctest::Approx(1.0).epsilon(1e-10));
    const Eigen::MatrixXd gram = model.components * model.components.transpose();
    CHECK((gram - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(model.explained_variance_ratio.minCoeff() >= 0.0);
    for (int k = 1; k < 4; ++k)
        CHECK(model.explained_variance_ratio[k] <= model.explained_variance_ratio[k - 1] + 1e-12);
}

TEST_CASE("pca: rank-deficient data returns the achievable rank") {
    Eigen::MatrixXd values(3, 40);  // rank 1
    for (int t = 0; t < 40; ++t) {
        values(0, t) = t;
        values(1, t) = 2.0 * t;
        values(2, t) = -t;
    }
    const PcaModel model = fit_pca(matrix_from(values), 3);
    CHECK(model.rank_deficient);
    CHECK(model.components.rows() == 1);
}

TEST_CASE("project: training data has zero mean per component; reconstruction round-trips") {
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 2.0);
    Eigen::MatrixXd values(3, 80);
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index t = 0; t < values.cols(); ++t) values(i, t) = gauss(rng) + 5.0;
    const TimeSeriesMatrix x = matrix_from(values);
    const PcaModel model = fit_pca(x, 3);
    const StateTrajectory z = project(model, x);
    CHECK(z.provenance == Provenance::pca_only);
    for (int c = 0; c < 3; ++c)
        CHECK(std::abs(z.states.col(c).mean()) <= 1e-8);
    // orthonormal full-rank round trip
    const Eigen::MatrixXd recon =
        (model.components.transpose() * z.states.transpose()).colwise() + model.mean;
    CHECK((recon - values).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("project: column equal to the mean maps to the origin") {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd values(3, 20);
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index t = 0; t < values.cols(); ++t) values(i, t) = gauss(rng);
    const TimeSeriesMatrix x = matrix_from(values);
    const PcaModel model = fit_pca(x, 2);

    TimeSeriesMatrix probe;
    probe.values = model.mean;
    probe.segment_ids = x.segment_ids;
    probe.timestamps = {0.0};
    const StateTrajectory z = project(model, probe);
    CHECK(z.states.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("project: dimension mismatch is rejected") {
    const TimeSeriesMatrix x = matrix_from(Eigen::MatrixXd::Random(3, 30));
    const PcaModel model = fit_pca(x, 2);
    const TimeSeriesMatrix wrong = matrix_from(Eigen::MatrixXd::Random(4, 30));
    CHECK_THROWS_AS((void)project(model, wrong), Error);
}

TEST_CASE("pca: reconstruction error is non-increasing in d_pca") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd values(6, 100);
    for (Eigen::Index i = 0; i < values.rows(); ++i)
        for (Eigen::Index t = 0; t < values.cols(); ++t) values(i, t) = gauss(rng) * (1.0 + i);
    const TimeSeriesMatrix x = matrix_from(values);

    double prev_err = std::numeric_limits<double>::infinity();
    for (int d = 1; d <= 5; ++d) {
        const PcaModel model = fit_pca(x, d);
        const StateTrajectory z = project(model, x);
        const Eigen::MatrixXd recon =
            (model.components.transpose() * z.states.transpose()).colwise() + model.mean;
        const double err = (recon - values).norm();
        CHECK(err <= prev_err + 1e-9);
        prev_err = err;
    }
}

TEST_CASE("pca: full-scale configuration, 11821 segments x 336 stamps to 50 components") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const TimeSeriesMatrix x =
        matrix_from(Eigen::MatrixXd::NullaryExpr(11821, 336, [&] { return gauss(rng); }));
    const PcaModel model = fit_pca(x, 50);
    const StateTrajectory z = project(model, x);
    CHECK(model.components.rows() == 50);
    CHECK(model.components.cols() == 11821);
    CHECK(z.states.rows() == 336);
    CHECK(z.states.cols() == 50);
}

TEST_CASE("tsne: shape contract and affinity normalization") {
    std::mt19937_64 rng(37);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd points(100, 5);
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        for (Eigen::Index c = 0; c < points.cols(); ++c) points(i, c) = gauss(rng);

    const Eigen::MatrixXd p = detail::tsne_affinities(points, 20.0);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-10));
    CHECK((p - p.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(p.minCoeff() >= 0.0);

    TsneConfig cfg;
    cfg.perplexity = 20.0;
    cfg.iterations = 300;
    const Eigen::MatrixXd y = tsne_embed(points, cfg);
    CHECK(y.rows() == 100);
    CHECK(y.cols() == 2);
    CHECK(y.allFinite());
}

TEST_CASE("tsne: KL after optimization does not exceed KL at end of exaggeration") {
    // three well-separated gaussian clusters
    std::mt19937_64 rng(41);
    std::normal_distribution<double> gauss(0.0, 0.3);
    Eigen::MatrixXd points(90, 4);
    for (int i = 0; i < 90; ++i) {
        const int cluster = i / 30;
        for (int c = 0; c < 4; ++c)
            points(i, c) = gauss(rng) + (c == cluster ? 8.0 : 0.0);
    }
    TsneConfig cfg;
    cfg.perplexity = 10.0;
    cfg.iterations = 1000;
    const TsneResult result = tsne_embed_full(points, cfg);
    CHECK(result.kl_final <= result.kl_after_exaggeration + 1e-9);
    CHECK(result.kl_final >= 0.0);
}

TEST_CASE("tsne: deterministic for a fixed seed") {
    std::mt19937_64 rng(43);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd points(40, 3);
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        for (Eigen::Index c = 0; c < points.cols(); ++c) points(i, c) = gauss(rng);
    TsneConfig cfg;
    cfg.perplexity = 8.0;
    cfg.iterations = 200;
    cfg.seed = 99;
    const Eigen::MatrixXd a = tsne_embed(points, cfg);
    const Eigen::MatrixXd b = tsne_embed(points, cfg);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tsne: rejects oversized perplexity and degenerate inputs") {
    Eigen::MatrixXd points = Eigen::MatrixXd::Random(10, 3);
    TsneConfig cfg;
    cfg.perplexity = 4.0;  // > (10-1)/3
    CHECK_THROWS_AS((void)tsne_embed(points, cfg), Error);

    TsneConfig tiny;
    tiny.perplexity = 1.0;
    Eigen::MatrixXd same = Eigen::MatrixXd::Ones(8, 3);
    CHECK_THROWS_AS((void)tsne_embed(same, tiny), Error);

    Eigen::MatrixXd three = Eigen::MatrixXd::Random(3, 3);
    CHECK_THROWS_AS((void)tsne_embed(three, tiny), Error);
}

TEST_CASE("embed_joint: splits rows back and shares one frame id") {
    std::mt19937_64 rng(47);
    std::normal_distribution<double> gauss(0.0, 1.0);
    StateTrajectory before, after;
    before.states = Eigen::MatrixXd::NullaryExpr(30, 4, [&] { return gauss(rng); });
    before.dt = 60.0;
    after.states = Eigen::MatrixXd::NullaryExpr(26, 4, [&] { return gauss(rng); });
    after.dt = 60.0;

    TsneConfig cfg;
    cfg.perplexity = 8.0;
    cfg.iterations = 150;
    const auto [eb, ea] = embed_joint(before, after, cfg);
    CHECK(eb.n_steps() == 30);
    CHECK(ea.n_steps() == 26);
    CHECK(eb.dim() == 2);
    CHECK(eb.provenance == Provenance::pca_tsne);
    CHECK(eb.window_label == WindowLabel::before);
    CHECK(ea.window_label == WindowLabel::after);
    CHECK(eb.frame_id == ea.frame_id);
    CHECK_FALSE(eb.frame_id.empty());
}

TEST_CASE("embed_joint: identical point sets land on near-identical clouds") {
    std::mt19937_64 rng(53);
    std::normal_distribution<double> gauss(0.0, 1.0);
    StateTrajectory before;
    before.states = Eigen::MatrixXd::NullaryExpr(25, 3, [&] { return gauss(rng); });
    before.dt = 1.0;
    StateTrajectory after = before;

    TsneConfig cfg;
    cfg.perplexity = 8.0;
    cfg.iterations = 400;
    // n/12 keeps the exaggeration phase stable at this point count; the
    // stock rate of 200 scatters a 50-point set before the twins can glue
    cfg.learning_rate = 4.0;
    const auto [eb, ea] = embed_joint(before, after, cfg);

    // duplicated inputs are glued by their affinities: row i of each output
    // should sit close to its twin relative to the cloud spread
    const double spread = std::sqrt(
        (eb.states.rowwise() - eb.states.colwise().mean()).rowwise().squaredNorm().mean());
    double worst = 0.0;
    for (Eigen::Index i = 0; i < eb.n_steps(); ++i)
        worst = std::max(worst, (eb.states.row(i) - ea.states.row(i)).norm());
    CHECK(worst <= 0.05 * spread);
}

TEST_CASE("embed_joint: dimension mismatch propagates") {
    StateTrajectory before, after;
    before.states = Eigen::MatrixXd::Random(20, 3);
    after.states = Eigen::MatrixXd::Random(20, 4);
    TsneConfig cfg;
    CHECK_THROWS_AS((void)embed_joint(before, after, cfg), Error);
}

}  // TEST_SUITE

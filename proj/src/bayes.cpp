#include "pchsl/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include <json.hpp>

#include "pchsl/errors.hpp"

namespace pchsl {

using nlohmann::json;

namespace detail {

double QuadraticTarget::potential(const Eigen::VectorXd& q) const {
    const double data = q.dot(gram * q) - 2.0 * q.dot(atb) + btb;
    return 0.5 * data * inv_noise2 + 0.5 * q.squaredNorm() * inv_prior2;
}

Eigen::VectorXd QuadraticTarget::grad(const Eigen::VectorXd& q) const {
    return (gram * q - atb) * inv_noise2 + q * inv_prior2;
}

QuadraticTarget QuadraticTarget::prior_only(int dim, double prior_sigma) {
    QuadraticTarget t;
    t.gram = Eigen::MatrixXd::Zero(dim, dim);
    t.atb = Eigen::VectorXd::Zero(dim);
    t.inv_prior2 = 1.0 / (prior_sigma * prior_sigma);
    return t;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> leapfrog(const QuadraticTarget& target,
                                                     Eigen::VectorXd q, Eigen::VectorXd p,
                                                     double eps, int steps) {
    p -= 0.5 * eps * target.grad(q);
    for (int l = 0; l < steps; ++l) {
        q += eps * p;
        if (l + 1 < steps) p -= eps * target.grad(q);
    }
    p -= 0.5 * eps * target.grad(q);
    return {std::move(q), std::move(p)};
}

}  // namespace detail

namespace {

using detail::QuadraticTarget;

double quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double pos = q * (static_cast<double>(v.size()) - 1.0);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - w) + v[hi] * w;
}

PolyHamiltonian draw_to_hamiltonian(const Eigen::VectorXd& draw, int max_degree) {
    PolyHamiltonian h(max_degree);
    int col = 0;
    for (int i = 0; i <= max_degree; ++i)
        for (int j = 0; j <= max_degree - i; ++j) {
            if (i == 0 && j == 0) continue;
            h.set_coeff(i, j, draw[col++]);
        }
    return h;
}

}  // namespace

Posterior hmc_sample(const VelocityTrajectory& vt, double prior_sigma, double noise_sigma,
                     const HmcConfig& cfg) {
    if (prior_sigma <= 0.0 || noise_sigma <= 0.0)
        throw Error(error_codes::ConfigError, "prior_sigma and noise_sigma must be > 0");
    if (cfg.leapfrog_steps < 1 || cfg.step_size <= 0.0 || cfg.warmup < 0 || cfg.samples < 100)
        throw Error(error_codes::ConfigError,
                    "need leapfrog_steps >= 1, step_size > 0, warmup >= 0, samples >= 100");

    const int p = PolyHamiltonian::coeff_count(cfg.max_degree) - 1;
    QuadraticTarget target = QuadraticTarget::prior_only(p, prior_sigma);
    target.inv_noise2 = 1.0 / (noise_sigma * noise_sigma);
    if (vt.n_samples() > 0) {
        const DesignSystem sys = build_design(vt, cfg.max_degree, false);
        target.gram = sys.A.transpose() * sys.A;
        target.atb = sys.A.transpose() * sys.b;
        target.btb = sys.b.squaredNorm();
    }

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    Eigen::VectorXd q = Eigen::VectorXd::Zero(p);
    double u_cur = target.potential(q);
    double eps = cfg.step_size;
    int accept_streak = 0;

    Posterior post;
    post.samples.resize(cfg.samples, p);
    post.warmup = cfg.warmup;
    post.noise_sigma = noise_sigma;
    post.max_degree = cfg.max_degree;

    int accepted_post = 0;
    const int total = cfg.warmup + cfg.samples;
    Eigen::VectorXd momentum(p);
    for (int iter = 0; iter < total; ++iter) {
        const bool in_warmup = iter < cfg.warmup;
        for (int k = 0; k < p; ++k) momentum[k] = gauss(rng);
        const double h0 = u_cur + 0.5 * momentum.squaredNorm();

        auto [q_prop, pm] = detail::leapfrog(target, q, momentum, eps, cfg.leapfrog_steps);

        const double u_prop = target.potential(q_prop);
        const double h1 = u_prop + 0.5 * pm.squaredNorm();
        bool accept = false;
        if (std::isfinite(h1)) {
            accept = unif(rng) < std::exp(h0 - h1);
        } else {
            if (!in_warmup) ++post.divergence_count;
            unif(rng);  // keep the draw count identical on both branches
        }
        if (accept) {
            q = q_prop;
            u_cur = u_prop;
        }
        if (in_warmup) {
            // multiplicative adaptation: grow on accept streaks, shrink on reject
            if (accept) {
                if (++accept_streak >= 3) {
                    eps = std::min(eps * 1.1, 1e3);
                    accept_streak = 0;
                }
            } else {
                eps = std::max(eps * 0.9, 1e-10);
                accept_streak = 0;
            }
        } else {
            if (accept) ++accepted_post;
            post.samples.row(iter - cfg.warmup) = q.transpose();
        }
    }
    post.acceptance_rate = static_cast<double>(accepted_post) / cfg.samples;
    if (post.divergence_count > cfg.samples / 2)
        throw Error(error_codes::NonFiniteEnergy,
                    std::to_string(post.divergence_count) + " of " + std::to_string(cfg.samples) +
                        " post-warmup proposals diverged; lower step_size");

    post.mean = post.samples.colwise().mean();
    post.sd.resize(p);
    post.q025.resize(p);
    post.q975.resize(p);
    for (int k = 0; k < p; ++k) {
        const Eigen::VectorXd col = post.samples.col(k);
        post.sd[k] = std::sqrt((col.array() - post.mean[k]).square().mean());
        std::vector<double> v(col.data(), col.data() + col.size());
        post.q025[k] = quantile(v, 0.025);
        post.q975[k] = quantile(std::move(v), 0.975);
    }
    return post;
}

LandscapeBands landscape_bands(const Posterior& p, const Domain& dom) {
    dom.validate();
    if (p.samples.rows() < 1)
        throw Error(error_codes::ConfigError, "posterior holds no draws");

    const auto s = static_cast<int>(p.samples.rows());
    std::vector<PolyHamiltonian> draws;
    draws.reserve(static_cast<std::size_t>(s));
    for (int k = 0; k < s; ++k)
        draws.push_back(draw_to_hamiltonian(p.samples.row(k), p.max_degree));

    // per-draw zero-mean gauge offset over the domain grid
    std::vector<double> offset(static_cast<std::size_t>(s), 0.0);
    const int res = dom.grid_resolution;
    for (int k = 0; k < s; ++k) {
        double sum = 0.0;
        for (int a = 0; a < res; ++a) {
            const double z1 = dom.z1_at(a);
            for (int b = 0; b < res; ++b)
                sum += eval_hamiltonian(draws[static_cast<std::size_t>(k)], {z1, dom.z2_at(b)});
        }
        offset[static_cast<std::size_t>(k)] = sum / (static_cast<double>(res) * res);
    }

    LandscapeBands bands;
    bands.domain = dom;
    bands.q025.resize(res, res);
    bands.q50.resize(res, res);
    bands.q975.resize(res, res);
    std::vector<double> cell(static_cast<std::size_t>(s));
    for (int a = 0; a < res; ++a) {
        const double z1 = dom.z1_at(a);
        for (int b = 0; b < res; ++b) {
            const Eigen::Vector2d z{z1, dom.z2_at(b)};
            for (int k = 0; k < s; ++k)
                cell[static_cast<std::size_t>(k)] =
                    eval_hamiltonian(draws[static_cast<std::size_t>(k)], z) -
                    offset[static_cast<std::size_t>(k)];
            bands.q025(a, b) = quantile(cell, 0.025);
            bands.q50(a, b) = quantile(cell, 0.50);
            bands.q975(a, b) = quantile(cell, 0.975);
        }
    }
    return bands;
}

std::string posterior_to_json(const Posterior& p, int indent) {
    json doc;
    doc["samples"] = p.samples.rows();
    doc["warmup"] = p.warmup;
    doc["acceptance_rate"] = p.acceptance_rate;
    doc["noise_sigma"] = p.noise_sigma;
    doc["max_degree"] = p.max_degree;
    doc["divergences"] = p.divergence_count;
    json coeffs = json::array();
    int col = 0;
    for (int i = 0; i <= p.max_degree; ++i)
        for (int j = 0; j <= p.max_degree - i; ++j) {
            if (i == 0 && j == 0) continue;
            coeffs.push_back({{"i", i},
                              {"j", j},
                              {"mean", p.mean[col]},
                              {"sd", p.sd[col]},
                              {"q025", p.q025[col]},
                              {"q975", p.q975[col]}});
            ++col;
        }
    doc["coefficients"] = coeffs;
    return doc.dump(indent);
}

void write_posterior_csv(const std::string& path, const Posterior& p) {
    std::ofstream out(path);
    if (!out) throw Error(error_codes::IoError, "cannot open '" + path + "' for writing");
    bool first = true;
    for (int i = 0; i <= p.max_degree; ++i)
        for (int j = 0; j <= p.max_degree - i; ++j) {
            if (i == 0 && j == 0) continue;
            if (!first) out << ',';
            out << 'h' << i << j;
            first = false;
        }
    out << '\n';
    char buf[64];
    for (Eigen::Index r = 0; r < p.samples.rows(); ++r) {
        for (Eigen::Index c = 0; c < p.samples.cols(); ++c) {
            if (c > 0) out << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", p.samples(r, c));
            out << buf;
        }
        out << '\n';
    }
}

}  // namespace pchsl

#include "pchsl/structcmp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <Eigen/Eigenvalues>

#include <json.hpp>

#include "pchsl/errors.hpp"

namespace pchsl {

using nlohmann::json;

namespace {

constexpr double kDegenerateNorm = 1e-9;
constexpr double kDegenerateEig = 1e-8;

void check_frames(const PolyHamiltonian& hb, const PolyHamiltonian& ha, bool force_frame) {
    if (force_frame) return;
    if (!hb.frame_id.empty() && !ha.frame_id.empty() && hb.frame_id != ha.frame_id)
        throw Error(error_codes::FrameMismatch,
                    "Hamiltonians come from different embedding frames (" + hb.frame_id + " vs " +
                        ha.frame_id + "); pass force_frame to compare anyway");
}

Eigen::MatrixXd eval_grid(const PolyHamiltonian& h, const Domain& dom) {
    Eigen::MatrixXd g(dom.grid_resolution, dom.grid_resolution);
    for (int a = 0; a < dom.grid_resolution; ++a) {
        const double z1 = dom.z1_at(a);
        for (int b = 0; b < dom.grid_resolution; ++b)
            g(a, b) = eval_hamiltonian(h, {z1, dom.z2_at(b)});
    }
    return g;
}

Eigen::Vector2d hessian_eigenvalues(const Eigen::Matrix2d& hess) {
    const double a = hess(0, 0), b = hess(0, 1), c = hess(1, 1);
    const double half_tr = 0.5 * (a + c);
    const double disc = std::sqrt(std::max(0.0, 0.25 * (a - c) * (a - c) + b * b));
    return {half_tr - disc, half_tr + disc};
}

CriticalPointKind classify(const Eigen::Vector2d& eig) {
    if (std::abs(eig[0]) < kDegenerateEig || std::abs(eig[1]) < kDegenerateEig)
        return CriticalPointKind::degenerate;
    if (eig[0] > 0.0) return CriticalPointKind::minimum;
    if (eig[1] < 0.0) return CriticalPointKind::maximum;
    return CriticalPointKind::saddle;
}

Eigen::Matrix2d hessian_at(const PolyHamiltonian& h, const Eigen::Vector2d& z) {
    double h11 = 0.0, h12 = 0.0, h22 = 0.0;
    for (int i = 0; i <= h.max_degree; ++i) {
        for (int j = 0; j <= h.max_degree - i; ++j) {
            const double c = h.coeff(i, j);
            if (c == 0.0) continue;
            if (i >= 2) h11 += c * i * (i - 1) * std::pow(z[0], i - 2) * std::pow(z[1], j);
            if (i >= 1 && j >= 1)
                h12 += c * i * j * std::pow(z[0], i - 1) * std::pow(z[1], j - 1);
            if (j >= 2) h22 += c * j * (j - 1) * std::pow(z[0], i) * std::pow(z[1], j - 2);
        }
    }
    Eigen::Matrix2d hess;
    hess << h11, h12, h12, h22;
    return hess;
}

bool inside(const Domain& dom, const Eigen::Vector2d& z) {
    return z[0] >= dom.z1_range[0] && z[0] <= dom.z1_range[1] && z[1] >= dom.z2_range[0] &&
           z[1] <= dom.z2_range[1];
}

}  // namespace

double landscape_distance(const PolyHamiltonian& hb, const PolyHamiltonian& ha,
                          const Domain& dom, bool force_frame) {
    dom.validate();
    check_frames(hb, ha, force_frame);
    const PolyHamiltonian gb = gauge_fix(hb, Gauge::zero_mean_over_domain, dom);
    const PolyHamiltonian ga = gauge_fix(ha, Gauge::zero_mean_over_domain, dom);
    const Eigen::MatrixXd diff = eval_grid(gb, dom) - eval_grid(ga, dom);
    return diff.array().square().sum() * dom.cell_area();
}

double norm_l2(const PolyHamiltonian& h, const Domain& dom) {
    dom.validate();
    return std::sqrt(eval_grid(h, dom).array().square().sum() * dom.cell_area());
}

namespace detail {

double false_recovery_fraction_from_grids(const Eigen::MatrixXd& gb, const Eigen::MatrixXd& ga,
                                          double tau) {
    if (tau <= 0.0) throw Error(error_codes::ConfigError, "tau must be > 0");
    const double rms = std::sqrt(gb.array().square().mean());
    if (rms < kDegenerateNorm)
        throw Error(error_codes::DegenerateReference,
                    "reference landscape is flat; false-recovery proxy undefined");
    const double threshold = tau * rms;
    const auto exceeded = ((gb - ga).array().abs() > threshold).count();
    return static_cast<double>(exceeded) / static_cast<double>(gb.size());
}

}  // namespace detail

double false_recovery_fraction(const PolyHamiltonian& hb, const PolyHamiltonian& ha,
                               const Domain& dom, double tau) {
    dom.validate();
    return detail::false_recovery_fraction_from_grids(eval_grid(hb, dom), eval_grid(ha, dom), tau);
}

ComparisonReport sir(const PolyHamiltonian& hb, const PolyHamiltonian& ha, const Domain& dom,
                     SirMode mode, double threshold, double tau, bool force_frame) {
    dom.validate();
    check_frames(hb, ha, force_frame);

    const PolyHamiltonian fb = gauge_fix(hb, Gauge::zero_mean_over_domain, dom);
    const PolyHamiltonian fa = gauge_fix(ha, Gauge::zero_mean_over_domain, dom);
    const Eigen::MatrixXd gb = eval_grid(fb, dom);
    const Eigen::MatrixXd ga = eval_grid(fa, dom);

    ComparisonReport r;
    r.mode = mode;
    r.threshold = threshold;
    r.tau = tau;
    r.domain = dom;
    r.distance_d = (gb - ga).array().square().sum() * dom.cell_area();
    r.norm_before = std::sqrt(gb.array().square().sum() * dom.cell_area());
    if (r.norm_before < kDegenerateNorm)
        throw Error(error_codes::DegenerateReference,
                    "|H_before| = " + std::to_string(r.norm_before) +
                        " below 1e-9; reference landscape flat, index undefined");
    r.sir = mode == SirMode::paper_literal ? r.distance_d / r.norm_before
                                           : std::sqrt(r.distance_d) / r.norm_before;
    r.verdict = r.sir > threshold ? Verdict::irreversible : Verdict::reversible;
    r.false_recovery_fraction = detail::false_recovery_fraction_from_grids(gb, ga, tau);

    r.diff_grid.z1.resize(dom.grid_resolution);
    r.diff_grid.z2.resize(dom.grid_resolution);
    for (int k = 0; k < dom.grid_resolution; ++k) {
        r.diff_grid.z1[k] = dom.z1_at(k);
        r.diff_grid.z2[k] = dom.z2_at(k);
    }
    r.diff_grid.h_before = gb;
    r.diff_grid.h_after = ga;
    r.diff_grid.diff = gb - ga;
    return r;
}

std::vector<CriticalPoint> fixed_point_analysis(const PolyHamiltonian& h, const Domain& dom) {
    dom.validate();
    std::vector<CriticalPoint> points;

    if (h.max_degree <= 2) {
        // grad H = Hess z + (h10, h01); one critical point unless singular
        const Eigen::Matrix2d hess = hessian_at(h, {0.0, 0.0});
        const Eigen::Vector2d lin{h.max_degree >= 1 ? h.coeff(1, 0) : 0.0,
                                  h.max_degree >= 1 ? h.coeff(0, 1) : 0.0};
        const double det = hess.determinant();
        const double scale = hess.cwiseAbs().maxCoeff();
        if (std::abs(det) <= 1e-14 * std::max(1.0, scale * scale)) return points;
        const Eigen::Vector2d z = hess.fullPivLu().solve(-lin);
        if (inside(dom, z)) {
            const Eigen::Vector2d eig = hessian_eigenvalues(hess);
            points.push_back({z, classify(eig), eig});
        }
        return points;
    }

    // grid search for local minima of |grad H|^2, refined by Newton
    const int res = dom.grid_resolution;
    Eigen::MatrixXd g2(res, res);
    for (int a = 0; a < res; ++a)
        for (int b = 0; b < res; ++b)
            g2(a, b) = hamiltonian_gradient(h, {dom.z1_at(a), dom.z2_at(b)}).squaredNorm();

    for (int a = 0; a < res; ++a) {
        for (int b = 0; b < res; ++b) {
            bool local_min = true;
            for (int da = -1; da <= 1 && local_min; ++da)
                for (int db = -1; db <= 1 && local_min; ++db) {
                    if (da == 0 && db == 0) continue;
                    const int na = a + da, nb = b + db;
                    if (na < 0 || nb < 0 || na >= res || nb >= res) continue;
                    if (g2(na, nb) < g2(a, b)) local_min = false;
                }
            if (!local_min) continue;

            Eigen::Vector2d z{dom.z1_at(a), dom.z2_at(b)};
            bool converged = false;
            for (int it = 0; it < 50; ++it) {
                const Eigen::Vector2d grad = hamiltonian_gradient(h, z);
                if (grad.norm() < 1e-10) {
                    converged = true;
                    break;
                }
                const Eigen::Matrix2d hess = hessian_at(h, z);
                if (std::abs(hess.determinant()) < 1e-14) break;
                z -= hess.fullPivLu().solve(grad);
                if (!z.allFinite()) break;
            }
            if (!converged || !inside(dom, z)) continue;
            bool duplicate = false;
            for (const auto& p : points)
                if ((p.location - z).norm() < 1e-6) duplicate = true;
            if (duplicate) continue;
            const Eigen::Vector2d eig = hessian_eigenvalues(hessian_at(h, z));
            points.push_back({z, classify(eig), eig});
        }
    }
    return points;
}

std::string to_string(SirMode mode) {
    return mode == SirMode::paper_literal ? "paper_literal" : "dimensionless";
}

std::string to_string(Verdict v) {
    return v == Verdict::irreversible ? "irreversible" : "reversible";
}

std::string to_string(CriticalPointKind k) {
    switch (k) {
        case CriticalPointKind::minimum: return "minimum";
        case CriticalPointKind::maximum: return "maximum";
        case CriticalPointKind::saddle: return "saddle";
        case CriticalPointKind::degenerate: return "degenerate";
    }
    return "degenerate";
}

SirMode sir_mode_from_string(const std::string& s) {
    if (s == "paper_literal") return SirMode::paper_literal;
    if (s == "dimensionless") return SirMode::dimensionless;
    throw Error(error_codes::ConfigError, "unknown comparison mode '" + s + "'");
}

std::string comparison_to_json(const ComparisonReport& r, int indent) {
    json doc;
    doc["distance_d"] = r.distance_d;
    doc["norm_before"] = r.norm_before;
    doc["sir"] = r.sir;
    doc["mode"] = to_string(r.mode);
    doc["threshold"] = r.threshold;
    doc["verdict"] = to_string(r.verdict);
    doc["false_recovery_fraction_proxy"] = r.false_recovery_fraction;
    doc["tau"] = r.tau;
    doc["domain"] = {{"z1_range", {r.domain.z1_range[0], r.domain.z1_range[1]}},
                     {"z2_range", {r.domain.z2_range[0], r.domain.z2_range[1]}},
                     {"grid_resolution", r.domain.grid_resolution}};
    if (r.diff_grid.diff.size() > 0) {
        doc["diff_stats"] = {{"min", r.diff_grid.diff.minCoeff()},
                             {"max", r.diff_grid.diff.maxCoeff()}};
    }
    return doc.dump(indent);
}

void write_diff_grid_csv(const std::string& path, const DiffGrid& grid) {
    std::ofstream out(path);
    if (!out) throw Error(error_codes::IoError, "cannot open '" + path + "' for writing");
    out << "z1,z2,h_before,h_after,diff\n";
    char buf[64];
    for (Eigen::Index a = 0; a < grid.z1.size(); ++a) {
        for (Eigen::Index b = 0; b < grid.z2.size(); ++b) {
            std::snprintf(buf, sizeof(buf), "%.17g", grid.z1[a]);
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", grid.z2[b]);
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", grid.h_before(a, b));
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", grid.h_after(a, b));
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", grid.diff(a, b));
            out << buf << '\n';
        }
    }
}

}  // namespace pchsl

#include "pchsl/hamfit.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <json.hpp>

#include "pchsl/errors.hpp"

namespace pchsl {

using nlohmann::json;

void Domain::validate() const {
    if (!(z1_range[0] < z1_range[1]) || !(z2_range[0] < z2_range[1]))
        throw Error(error_codes::ConfigError, "domain ranges must satisfy lo < hi");
    if (grid_resolution < 3 || grid_resolution % 2 == 0)
        throw Error(error_codes::ConfigError,
                    "grid_resolution must be odd and >= 3, got " +
                        std::to_string(grid_resolution));
}

namespace {

// g_i(z2) = sum_j h_ij z2^j for fixed i, evaluated by Horner.
double slice_eval(const PolyHamiltonian& h, int i, double z2) {
    const int jmax = h.max_degree - i;
    double acc = h.coeff(i, jmax);
    for (int j = jmax - 1; j >= 0; --j) acc = acc * z2 + h.coeff(i, j);
    return acc;
}

// d/dz2 of g_i.
double slice_eval_dz2(const PolyHamiltonian& h, int i, double z2) {
    const int jmax = h.max_degree - i;
    if (jmax < 1) return 0.0;
    double acc = h.coeff(i, jmax) * jmax;
    for (int j = jmax - 1; j >= 1; --j) acc = acc * z2 + h.coeff(i, j) * j;
    return acc;
}

double grid_mean(const PolyHamiltonian& h, const Domain& dom) {
    double sum = 0.0;
    for (int a = 0; a < dom.grid_resolution; ++a) {
        const double z1 = dom.z1_at(a);
        for (int b = 0; b < dom.grid_resolution; ++b)
            sum += eval_hamiltonian(h, {z1, dom.z2_at(b)});
    }
    return sum / (static_cast<double>(dom.grid_resolution) * dom.grid_resolution);
}

}  // namespace

double eval_hamiltonian(const PolyHamiltonian& h, const Eigen::Vector2d& z) {
    const int m = h.max_degree;
    double acc = slice_eval(h, m, z[1]);
    for (int i = m - 1; i >= 0; --i) acc = acc * z[0] + slice_eval(h, i, z[1]);
    return acc;
}

Eigen::Vector2d hamiltonian_gradient(const PolyHamiltonian& h, const Eigen::Vector2d& z) {
    const int m = h.max_degree;
    // dH/dz1 = sum_{i>=1} i z1^{i-1} g_i(z2)
    double d1 = m >= 1 ? m * slice_eval(h, m, z[1]) : 0.0;
    for (int i = m - 1; i >= 1; --i) d1 = d1 * z[0] + i * slice_eval(h, i, z[1]);
    // dH/dz2 = sum_i z1^i g_i'(z2)
    double d2 = slice_eval_dz2(h, m, z[1]);
    for (int i = m - 1; i >= 0; --i) d2 = d2 * z[0] + slice_eval_dz2(h, i, z[1]);
    return {d1, d2};
}

Eigen::Vector2d symplectic_field(const PolyHamiltonian& h, const Eigen::Vector2d& z) {
    const Eigen::Vector2d g = hamiltonian_gradient(h, z);
    return {g[1], -g[0]};
}

PolyHamiltonian gauge_fix(const PolyHamiltonian& h) {
    return gauge_fix(h, h.gauge, h.domain);
}

PolyHamiltonian gauge_fix(const PolyHamiltonian& h, Gauge gauge, const Domain& dom) {
    PolyHamiltonian out = h;
    out.gauge = gauge;
    out.domain = dom;
    if (gauge == Gauge::zero_at_origin) {
        out.set_coeff(0, 0, 0.0);
    } else {
        dom.validate();
        out.set_coeff(0, 0, h.coeff(0, 0) - grid_mean(h, dom));
    }
    return out;
}

DesignSystem build_design(const VelocityTrajectory& vt, int max_degree, bool with_dissipation) {
    if (vt.n_samples() < 1)
        throw Error(error_codes::ConfigError, "velocity trajectory is empty");
    if (vt.dim() != 2)
        throw Error(error_codes::DimensionMismatch,
                    "design matrix needs 2D states, got dim " + std::to_string(vt.dim()));
    if (max_degree < 1 || max_degree > 6)
        throw Error(error_codes::ConfigError, "max_degree must be in [1, 6]");

    const Eigen::Index n = vt.n_samples();
    const int n_coeff = PolyHamiltonian::coeff_count(max_degree) - 1;  // h_00 excluded
    const int n_cols = n_coeff + (with_dissipation ? 2 : 0);

    DesignSystem sys;
    sys.A = Eigen::MatrixXd::Zero(2 * n, n_cols);
    sys.b.resize(2 * n);
    sys.n_samples = static_cast<int>(n);
    sys.max_degree = max_degree;
    sys.with_dissipation = with_dissipation;

    std::vector<double> p1(static_cast<std::size_t>(max_degree) + 1);
    std::vector<double> p2(static_cast<std::size_t>(max_degree) + 1);
    for (Eigen::Index t = 0; t < n; ++t) {
        const double z1 = vt.states(t, 0), z2 = vt.states(t, 1);
        p1[0] = p2[0] = 1.0;
        for (int k = 1; k <= max_degree; ++k) {
            p1[static_cast<std::size_t>(k)] = p1[static_cast<std::size_t>(k - 1)] * z1;
            p2[static_cast<std::size_t>(k)] = p2[static_cast<std::size_t>(k - 1)] * z2;
        }
        int col = 0;
        for (int i = 0; i <= max_degree; ++i) {
            for (int j = 0; j <= max_degree - i; ++j) {
                if (i == 0 && j == 0) continue;
                // zdot1 = dH/dz2, zdot2 = -dH/dz1
                if (j >= 1)
                    sys.A(2 * t, col) = j * p1[static_cast<std::size_t>(i)] *
                                        p2[static_cast<std::size_t>(j - 1)];
                if (i >= 1)
                    sys.A(2 * t + 1, col) = -i * p1[static_cast<std::size_t>(i - 1)] *
                                            p2[static_cast<std::size_t>(j)];
                ++col;
            }
        }
        if (with_dissipation) {
            sys.A(2 * t, n_coeff) = -z1;
            sys.A(2 * t + 1, n_coeff + 1) = -z2;
        }
        sys.b[2 * t] = vt.velocities(t, 0);
        sys.b[2 * t + 1] = vt.velocities(t, 1);
    }
    return sys;
}

double fit_loss(const DesignSystem& sys, const Eigen::VectorXd& theta, double lambda) {
    const double data = (sys.A * theta - sys.b).squaredNorm() / sys.n_samples;
    return data + lambda * theta.squaredNorm();
}

Eigen::VectorXd fit_loss_gradient(const DesignSystem& sys, const Eigen::VectorXd& theta,
                                  double lambda) {
    return 2.0 / sys.n_samples * (sys.A.transpose() * (sys.A * theta - sys.b)) +
           2.0 * lambda * theta;
}

namespace {

PolyHamiltonian hamiltonian_from_theta(const Eigen::VectorXd& theta, int max_degree,
                                       const std::string& frame_id) {
    PolyHamiltonian h(max_degree);
    int col = 0;
    for (int i = 0; i <= max_degree; ++i)
        for (int j = 0; j <= max_degree - i; ++j) {
            if (i == 0 && j == 0) continue;
            h.set_coeff(i, j, theta[col++]);
        }
    h.frame_id = frame_id;
    return h;
}

}  // namespace

FitReport fit(const VelocityTrajectory& vt, const FitConfig& cfg, const Domain& dom) {
    if (cfg.lambda < 0.0) throw Error(error_codes::ConfigError, "lambda must be >= 0");
    dom.validate();
    const DesignSystem sys = build_design(vt, cfg.max_degree, cfg.include_dissipation);
    const Eigen::Index n_cols = sys.A.cols();
    const double n = sys.n_samples;

    FitReport report;
    report.initial_loss = sys.b.squaredNorm() / n;

    Eigen::VectorXd theta;
    if (cfg.solver == FitSolver::ridge_closed_form) {
        if (cfg.lambda == 0.0) {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sys.A);
            if (qr.rank() < n_cols)
                throw Error(error_codes::SingularSystem,
                            "lambda = 0 and design rank " + std::to_string(qr.rank()) + " < " +
                                std::to_string(n_cols));
            theta = qr.solve(sys.b);
        } else {
            const Eigen::MatrixXd gram =
                sys.A.transpose() * sys.A / n +
                cfg.lambda * Eigen::MatrixXd::Identity(n_cols, n_cols);
            theta = Eigen::LLT<Eigen::MatrixXd>(gram).solve(sys.A.transpose() * sys.b / n);
        }
        report.final_loss = fit_loss(sys, theta, cfg.lambda);
    } else {
        if (cfg.gd_steps < 1 || cfg.gd_learning_rate <= 0.0)
            throw Error(error_codes::ConfigError, "gradient-descent parameters must be positive");
        theta = Eigen::VectorXd::Zero(n_cols);
        report.loss_trace.reserve(static_cast<std::size_t>(cfg.gd_steps) + 1);
        report.loss_trace.push_back(report.initial_loss);
        for (int step = 0; step < cfg.gd_steps; ++step) {
            theta -= cfg.gd_learning_rate * fit_loss_gradient(sys, theta, cfg.lambda);
            const double loss = fit_loss(sys, theta, cfg.lambda);
            if (!std::isfinite(loss))
                throw Error(error_codes::DivergedLoss,
                            "loss became non-finite at step " + std::to_string(step) +
                                "; lower gd_learning_rate");
            report.loss_trace.push_back(loss);
        }
        report.final_loss = report.loss_trace.back();
    }

    report.convergence_improvement =
        report.initial_loss > 0.0
            ? 100.0 * (report.initial_loss - report.final_loss) / report.initial_loss
            : 0.0;

    const Eigen::VectorXd residual = sys.A * theta - sys.b;
    double s1 = 0.0, s2 = 0.0;
    for (int t = 0; t < sys.n_samples; ++t) {
        s1 += residual[2 * t] * residual[2 * t];
        s2 += residual[2 * t + 1] * residual[2 * t + 1];
    }
    report.residual_rms = {std::sqrt(s1 / n), std::sqrt(s2 / n)};

    const int n_coeff = PolyHamiltonian::coeff_count(cfg.max_degree) - 1;
    PolyHamiltonian h = hamiltonian_from_theta(theta.head(n_coeff), cfg.max_degree, vt.frame_id);
    report.hamiltonian = gauge_fix(h, cfg.gauge, dom);
    if (cfg.include_dissipation)
        report.dissipation = Eigen::Vector2d(theta[n_coeff], theta[n_coeff + 1]);
    return report;
}

std::string to_string(Gauge gauge) {
    return gauge == Gauge::zero_at_origin ? "zero_at_origin" : "zero_mean_over_domain";
}

Gauge gauge_from_string(const std::string& s) {
    if (s == "zero_at_origin") return Gauge::zero_at_origin;
    if (s == "zero_mean_over_domain") return Gauge::zero_mean_over_domain;
    throw Error(error_codes::ConfigError, "unknown gauge '" + s + "'");
}

std::string hamiltonian_to_json(const PolyHamiltonian& h, int indent) {
    json doc;
    doc["max_degree"] = h.max_degree;
    doc["gauge"] = to_string(h.gauge);
    doc["domain"] = {{"z1_range", {h.domain.z1_range[0], h.domain.z1_range[1]}},
                     {"z2_range", {h.domain.z2_range[0], h.domain.z2_range[1]}},
                     {"grid_resolution", h.domain.grid_resolution}};
    json coeffs = json::array();
    for (int i = 0; i <= h.max_degree; ++i)
        for (int j = 0; j <= h.max_degree - i; ++j)
            coeffs.push_back({{"i", i}, {"j", j}, {"value", h.coeff(i, j)}});
    doc["coeffs"] = coeffs;
    if (!h.frame_id.empty()) doc["frame"] = h.frame_id;
    return doc.dump(indent);
}

PolyHamiltonian hamiltonian_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(error_codes::ConfigError, std::string("invalid hamiltonian JSON: ") + e.what());
    }
    try {
        PolyHamiltonian h(doc.at("max_degree").get<int>());
        if (h.max_degree < 0 || h.max_degree > 6)
            throw Error(error_codes::ConfigError, "max_degree out of range");
        h.gauge = gauge_from_string(doc.at("gauge").get<std::string>());
        const auto& dm = doc.at("domain");
        h.domain.z1_range = {dm.at("z1_range").at(0).get<double>(),
                             dm.at("z1_range").at(1).get<double>()};
        h.domain.z2_range = {dm.at("z2_range").at(0).get<double>(),
                             dm.at("z2_range").at(1).get<double>()};
        h.domain.grid_resolution = dm.at("grid_resolution").get<int>();
        h.domain.validate();
        std::vector<bool> seen(static_cast<std::size_t>(h.coeff_count()), false);
        for (const auto& c : doc.at("coeffs")) {
            const int i = c.at("i").get<int>(), j = c.at("j").get<int>();
            if (i < 0 || j < 0 || i + j > h.max_degree)
                throw Error(error_codes::ConfigError,
                            "coefficient (" + std::to_string(i) + "," + std::to_string(j) +
                                ") outside degree " + std::to_string(h.max_degree));
            const int idx = h.index_of(i, j);
            if (seen[static_cast<std::size_t>(idx)])
                throw Error(error_codes::ConfigError, "duplicate coefficient index");
            seen[static_cast<std::size_t>(idx)] = true;
            h.set_coeff(i, j, c.at("value").get<double>());
        }
        for (bool s : seen)
            if (!s) throw Error(error_codes::ConfigError, "missing coefficient entries");
        if (doc.contains("frame")) h.frame_id = doc.at("frame").get<std::string>();
        return h;
    } catch (const json::exception& e) {
        throw Error(error_codes::ConfigError, std::string("invalid hamiltonian JSON: ") + e.what());
    }
}

PolyHamiltonian load_hamiltonian(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(error_codes::IoError, "cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return hamiltonian_from_json(ss.str());
}

void save_hamiltonian(const std::string& path, const PolyHamiltonian& h) {
    std::ofstream out(path);
    if (!out) throw Error(error_codes::IoError, "cannot open '" + path + "' for writing");
    out << hamiltonian_to_json(h) << '\n';
}

}  // namespace pchsl

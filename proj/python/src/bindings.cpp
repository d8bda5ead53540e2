#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pchsl/errors.hpp"
#include "pchsl/pipeline.hpp"
#include "pchsl/version.hpp"

namespace py = pybind11;
using namespace pchsl;

namespace {

Domain make_domain(double z1_lo, double z1_hi, double z2_lo, double z2_hi, int grid) {
    Domain dom;
    dom.z1_range = {z1_lo, z1_hi};
    dom.z2_range = {z2_lo, z2_hi};
    dom.grid_resolution = grid;
    dom.validate();
    return dom;
}

VelocityTrajectory make_velocity_trajectory(const Eigen::MatrixXd& states,
                                            const Eigen::MatrixXd& velocities, double dt) {
    if (states.rows() != velocities.rows() || states.cols() != velocities.cols())
        throw Error(error_codes::DimensionMismatch, "states and velocities shapes differ");
    VelocityTrajectory vt;
    vt.states = states;
    vt.velocities = velocities;
    vt.dt = dt;
    return vt;
}

FitConfig make_fit_config(double lambda, const std::string& solver, int gd_steps,
                          double gd_learning_rate, bool include_dissipation, int max_degree,
                          const std::string& gauge) {
    FitConfig cfg;
    cfg.lambda = lambda;
    if (solver == "ridge_closed_form") cfg.solver = FitSolver::ridge_closed_form;
    else if (solver == "gradient_descent") cfg.solver = FitSolver::gradient_descent;
    else throw Error(error_codes::ConfigError, "unknown solver '" + solver + "'");
    cfg.gd_steps = gd_steps;
    cfg.gd_learning_rate = gd_learning_rate;
    cfg.include_dissipation = include_dissipation;
    cfg.max_degree = max_degree;
    cfg.gauge = gauge_from_string(gauge);
    return cfg;
}

py::dict fit_report_dict(const FitReport& r) {
    py::dict d;
    d["initial_loss"] = r.initial_loss;
    d["final_loss"] = r.final_loss;
    d["convergence_improvement"] = r.convergence_improvement;
    d["residual_rms"] = std::vector<double>{r.residual_rms[0], r.residual_rms[1]};
    if (r.dissipation)
        d["dissipation"] = std::vector<double>{(*r.dissipation)[0], (*r.dissipation)[1]};
    return d;
}

py::dict comparison_dict(const ComparisonReport& r) {
    py::dict d;
    d["distance_d"] = r.distance_d;
    d["norm_before"] = r.norm_before;
    d["sir"] = r.sir;
    d["mode"] = to_string(r.mode);
    d["threshold"] = r.threshold;
    d["verdict"] = to_string(r.verdict);
    d["false_recovery_fraction_proxy"] = r.false_recovery_fraction;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "energy-landscape structure learning: embedding, Hamiltonian fitting, "
              "posterior sampling and before/after landscape comparison";
    m.attr("__version__") = kVersion;

    py::register_exception<Error>(m, "PchslError");

    py::class_<Domain>(m, "Domain")
        .def(py::init(&make_domain), py::arg("z1_lo"), py::arg("z1_hi"), py::arg("z2_lo"),
             py::arg("z2_hi"), py::arg("grid_resolution") = 101)
        .def_property_readonly("z1_range",
                               [](const Domain& d) {
                                   return std::pair<double, double>{d.z1_range[0], d.z1_range[1]};
                               })
        .def_property_readonly("z2_range",
                               [](const Domain& d) {
                                   return std::pair<double, double>{d.z2_range[0], d.z2_range[1]};
                               })
        .def_readonly("grid_resolution", &Domain::grid_resolution);

    py::class_<PolyHamiltonian>(m, "PolyHamiltonian")
        .def(py::init<int>(), py::arg("max_degree") = 2)
        .def_readonly("max_degree", &PolyHamiltonian::max_degree)
        .def_readwrite("frame", &PolyHamiltonian::frame_id)
        .def("coeff", [](const PolyHamiltonian& h, int i, int j) { return h.coeff(i, j); })
        .def("set_coeff",
             [](PolyHamiltonian& h, int i, int j, double v) {
                 if (i < 0 || j < 0 || i + j > h.max_degree)
                     throw Error(error_codes::ConfigError, "coefficient index out of range");
                 h.set_coeff(i, j, v);
             })
        .def("__call__",
             [](const PolyHamiltonian& h, double z1, double z2) {
                 return eval_hamiltonian(h, {z1, z2});
             })
        .def("gradient",
             [](const PolyHamiltonian& h, double z1, double z2) {
                 const Eigen::Vector2d g = hamiltonian_gradient(h, {z1, z2});
                 return std::pair<double, double>{g[0], g[1]};
             })
        .def("symplectic_field",
             [](const PolyHamiltonian& h, double z1, double z2) {
                 const Eigen::Vector2d v = symplectic_field(h, {z1, z2});
                 return std::pair<double, double>{v[0], v[1]};
             })
        .def("gauge_fix",
             [](const PolyHamiltonian& h, const std::string& gauge, const Domain& dom) {
                 return gauge_fix(h, gauge_from_string(gauge), dom);
             },
             py::arg("gauge") = "zero_mean_over_domain", py::arg("domain") = Domain{})
        .def("to_json", [](const PolyHamiltonian& h) { return hamiltonian_to_json(h); })
        .def_static("from_json",
                    [](const std::string& text) { return hamiltonian_from_json(text); });

    m.def(
        "fit_pca",
        [](const Eigen::MatrixXd& values, int d_pca) {
            TimeSeriesMatrix x;
            x.values = values;
            x.segment_ids.resize(static_cast<std::size_t>(values.rows()));
            x.timestamps.resize(static_cast<std::size_t>(values.cols()));
            for (Eigen::Index t = 0; t < values.cols(); ++t)
                x.timestamps[static_cast<std::size_t>(t)] = static_cast<double>(t);
            const PcaModel model = fit_pca(x, d_pca);
            py::dict d;
            d["components"] = model.components;
            d["mean"] = model.mean;
            d["explained_variance_ratio"] = model.explained_variance_ratio;
            d["rank_deficient"] = model.rank_deficient;
            return d;
        },
        py::arg("values"), py::arg("d_pca"),
        "PCA of an N x T matrix treated as T samples in R^N");

    m.def(
        "tsne",
        [](const Eigen::MatrixXd& points, double perplexity, double learning_rate, int iterations,
           std::uint64_t seed) {
            TsneConfig cfg;
            cfg.perplexity = perplexity;
            cfg.learning_rate = learning_rate;
            cfg.iterations = iterations;
            cfg.seed = seed;
            return tsne_embed(points, cfg);
        },
        py::arg("points"), py::arg("perplexity") = 30.0, py::arg("learning_rate") = 200.0,
        py::arg("iterations") = 1000, py::arg("seed") = 42,
        "exact t-SNE of an n x d point set to 2D");

    m.def(
        "central_differences",
        [](const Eigen::MatrixXd& states, double dt) {
            StateTrajectory z;
            z.states = states;
            z.dt = dt;
            const VelocityTrajectory vt = central_differences(z);
            return std::pair<Eigen::MatrixXd, Eigen::MatrixXd>{vt.states, vt.velocities};
        },
        py::arg("states"), py::arg("dt"),
        "interior states and centered finite-difference velocities");

    m.def(
        "fit_hamiltonian",
        [](const Eigen::MatrixXd& states, const Eigen::MatrixXd& velocities, double dt,
           const Domain& domain, double lambda, const std::string& solver, int gd_steps,
           double gd_learning_rate, bool include_dissipation, int max_degree,
           const std::string& gauge) {
            const VelocityTrajectory vt = make_velocity_trajectory(states, velocities, dt);
            const FitConfig cfg = make_fit_config(lambda, solver, gd_steps, gd_learning_rate,
                                                  include_dissipation, max_degree, gauge);
            const FitReport report = fit(vt, cfg, domain);
            return std::pair<PolyHamiltonian, py::dict>{report.hamiltonian,
                                                        fit_report_dict(report)};
        },
        py::arg("states"), py::arg("velocities"), py::arg("dt"), py::arg("domain"),
        py::arg("lambda_") = 1e-3, py::arg("solver") = "ridge_closed_form",
        py::arg("gd_steps") = 5000, py::arg("gd_learning_rate") = 1e-2,
        py::arg("include_dissipation") = false, py::arg("max_degree") = 2,
        py::arg("gauge") = "zero_mean_over_domain",
        "learn Hamiltonian coefficients from states and velocities");

    m.def(
        "landscape_distance",
        [](const PolyHamiltonian& hb, const PolyHamiltonian& ha, const Domain& dom,
           bool force_frame) { return landscape_distance(hb, ha, dom, force_frame); },
        py::arg("h_before"), py::arg("h_after"), py::arg("domain"),
        py::arg("force_frame") = false);

    m.def(
        "norm_l2",
        [](const PolyHamiltonian& h, const Domain& dom) { return norm_l2(h, dom); },
        py::arg("h"), py::arg("domain"));

    m.def(
        "sir",
        [](const PolyHamiltonian& hb, const PolyHamiltonian& ha, const Domain& dom,
           const std::string& mode, double threshold, double tau, bool force_frame) {
            return comparison_dict(
                sir(hb, ha, dom, sir_mode_from_string(mode), threshold, tau, force_frame));
        },
        py::arg("h_before"), py::arg("h_after"), py::arg("domain"),
        py::arg("mode") = "paper_literal", py::arg("threshold") = 0.07, py::arg("tau") = 0.1,
        py::arg("force_frame") = false,
        "structural irreversibility index and verdict for a landscape pair");

    m.def(
        "false_recovery_fraction",
        [](const PolyHamiltonian& hb, const PolyHamiltonian& ha, const Domain& dom, double tau) {
            return false_recovery_fraction(hb, ha, dom, tau);
        },
        py::arg("h_before"), py::arg("h_after"), py::arg("domain"), py::arg("tau") = 0.1);

    m.def(
        "fixed_points",
        [](const PolyHamiltonian& h, const Domain& dom) {
            py::list out;
            for (const CriticalPoint& p : fixed_point_analysis(h, dom)) {
                py::dict d;
                d["location"] = std::pair<double, double>{p.location[0], p.location[1]};
                d["kind"] = to_string(p.kind);
                d["hessian_eigenvalues"] = std::pair<double, double>{p.hessian_eigenvalues[0],
                                                                     p.hessian_eigenvalues[1]};
                out.append(d);
            }
            return out;
        },
        py::arg("h"), py::arg("domain"));

    m.def(
        "integrate",
        [](const PolyHamiltonian& h, std::pair<double, double> gamma, double dt, int steps,
           std::pair<double, double> z0) {
            SynthScenario s;
            s.h_true = h;
            s.gamma = {gamma.first, gamma.second};
            s.dt = dt;
            s.steps = steps;
            s.z0 = {z0.first, z0.second};
            return integrate(s).states;
        },
        py::arg("h"), py::arg("gamma") = std::pair<double, double>{0.0, 0.0}, py::arg("dt") = 0.01,
        py::arg("steps") = 1000, py::arg("z0") = std::pair<double, double>{1.0, 0.0},
        "RK4 trajectory of zdot = J grad H - diag(gamma) z");

    m.def(
        "hmc_sample",
        [](const Eigen::MatrixXd& states, const Eigen::MatrixXd& velocities, double dt,
           double prior_sigma, double noise_sigma, int leapfrog_steps, double step_size,
           int warmup, int samples, std::uint64_t seed, int max_degree) {
            const VelocityTrajectory vt = make_velocity_trajectory(states, velocities, dt);
            HmcConfig cfg;
            cfg.leapfrog_steps = leapfrog_steps;
            cfg.step_size = step_size;
            cfg.warmup = warmup;
            cfg.samples = samples;
            cfg.seed = seed;
            cfg.max_degree = max_degree;
            const Posterior p = hmc_sample(vt, prior_sigma, noise_sigma, cfg);
            py::dict d;
            d["samples"] = p.samples;
            d["acceptance_rate"] = p.acceptance_rate;
            d["mean"] = p.mean;
            d["sd"] = p.sd;
            d["q025"] = p.q025;
            d["q975"] = p.q975;
            d["divergences"] = p.divergence_count;
            return d;
        },
        py::arg("states"), py::arg("velocities"), py::arg("dt"), py::arg("prior_sigma") = 1.0,
        py::arg("noise_sigma") = 1.0, py::arg("leapfrog_steps") = 20, py::arg("step_size") = 0.1,
        py::arg("warmup") = 500, py::arg("samples") = 1000, py::arg("seed") = 0,
        py::arg("max_degree") = 2,
        "posterior over non-constant Hamiltonian coefficients via HMC");

    m.def(
        "run_pipeline",
        [](const std::string& config_path, const std::string& out_dir) {
            PipelineConfig cfg = load_pipeline_config(config_path);
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            const PipelineResult result = run_pipeline(cfg);
            write_pipeline_outputs(result, cfg.output_dir);
            const std::string report = pipeline_report_json(result);
            return py::module_::import("json").attr("loads")(report);
        },
        py::arg("config_path"), py::arg("out_dir") = std::string{},
        "full pipeline run from a JSON config; returns the report as a dict");
}

#pragma once

#include <optional>
#include <string>

#include "pchsl/bayes.hpp"
#include "pchsl/structcmp.hpp"
#include "pchsl/synth.hpp"

namespace pchsl {

enum class EmbeddingMethod {
    none,      // input must already be 2 segments; states are the raw columns
    pca_only,  // first two principal components
    pca_tsne   // PCA to d_pca, then joint t-SNE to 2D
};

struct EmbeddingConfig {
    EmbeddingMethod method = EmbeddingMethod::pca_tsne;
    int d_pca = 50;
    TsneConfig tsne;
};

struct HmcStageConfig {
    bool enabled = false;
    double prior_sigma = 1.0;
    double noise_sigma = 0.0;  // 0 = derive from the ridge-fit residual RMS
    HmcConfig hmc;
};

struct ComparisonConfig {
    SirMode mode = SirMode::paper_literal;
    double threshold = 0.07;
    double tau = 0.1;
};

struct SynthPairSpec {
    SynthScenario before;
    SynthScenario after;
};

/// One config file per run. Input is either a CSV dataset plus an event
/// time, or a synthetic before/after scenario pair.
struct PipelineConfig {
    std::optional<std::string> input_csv;
    std::string csv_format = "auto";  // auto | long | wide
    std::optional<double> event_time;
    std::optional<SynthPairSpec> synth;

    NormalizationMode normalization = NormalizationMode::zscore_per_segment;
    EmbeddingConfig embedding;
    int smoothing_window = 1;
    FitConfig fit;
    HmcStageConfig hmc;
    std::optional<Domain> domain;  // default: bbox of both state sets + 10% per side
    ComparisonConfig comparison;
    std::string output_dir = "out";
    std::optional<std::uint64_t> seed;  // overrides embedded seeds when set
};

enum class PipelineStage { embed, fit, sample, compare };

struct PipelineResult {
    EventSplit split;
    StateTrajectory traj_before;
    StateTrajectory traj_after;
    VelocityTrajectory vel_before;
    VelocityTrajectory vel_after;
    FitReport fit_before;
    FitReport fit_after;
    std::optional<Posterior> posterior_before;
    std::optional<Posterior> posterior_after;
    Domain domain;
    ComparisonReport comparison;
    PipelineStage completed_stage = PipelineStage::compare;
    std::string config_hash;
    std::uint64_t seed = 0;
};

PipelineConfig pipeline_config_from_json(const std::string& text);
PipelineConfig load_pipeline_config(const std::string& path);
SynthPairSpec synth_pair_from_json(const std::string& text);

/// Run ingest -> split -> normalize -> embed -> smooth -> differentiate ->
/// fit (x2) -> optional HMC -> compare, stopping after `stage`.
PipelineResult run_pipeline(const PipelineConfig& cfg,
                            PipelineStage stage = PipelineStage::compare);

/// Write the stage outputs under out_dir: trajectory CSVs, hamiltonian
/// JSONs, posterior summaries, diff_grid.csv and report.json (with the
/// reproducibility manifest). Returns the report.json path for full runs.
std::string write_pipeline_outputs(const PipelineResult& result, const std::string& out_dir);

/// report.json body: comparison scalars, convergence improvements and the
/// manifest {config_hash, seed, version, timestamp}.
std::string pipeline_report_json(const PipelineResult& result);

/// Default comparison window: axis-aligned bounding box of the union of
/// both embedded state sets, expanded 10% per side.
Domain default_comparison_domain(const StateTrajectory& before, const StateTrajectory& after,
                                 int grid_resolution = 101);

/// FNV-1a hash of the canonical (sorted-key) config JSON, hex-encoded.
std::string config_hash_hex(const std::string& canonical_json);

}  // namespace pchsl

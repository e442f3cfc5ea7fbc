#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "emospace/affectpred.hpp"
#include "emospace/latent.hpp"
#include "emospace/space.hpp"

namespace emospace::cli {

inline constexpr std::string_view kToolVersion = "0.3.0";

struct ValidateParams {
    std::size_t n_perm = 1000;
    std::size_t n_perm_logreg = 0;  // 0 = same as n_perm
    LogRegOptions logreg;
};

struct EmbedParams {
    EmbeddingConfig config;
    std::vector<Language> languages{Language::En, Language::Zh};
};

struct PredictParams {
    ExperimentOptions options;
    std::vector<AffectTarget> targets{AffectTarget::Valence, AffectTarget::Arousal};
};

struct SteeringParams {
    Language language = Language::En;      // language the bundles are tagged for
    Language source_space = Language::En;  // emotion space the features come from
    std::size_t components = 0;            // C; 0 = min(k, 10)
    std::size_t top_components = 9;        // M, clamped to C
    std::size_t features = 40;             // F
    std::size_t nmf_iterations = 500;
    std::vector<std::string> emotions;     // keys; empty = every emotion with a concept set
    std::vector<double> coeffs{0.0, 5.0, 10.0, 15.0, 20.0};
    std::filesystem::path bundle;          // apply-steering: a single bundle instead of all
};

struct EvalParams {
    std::string group_by = "cue_word";  // or "sentence_id"
    std::size_t n_perm = 10000;
};

/// Every input path is resolved against base_dir when relative.
struct PipelineConfig {
    std::filesystem::path base_dir;
    std::filesystem::path out_dir = "out";
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0 = hardware concurrency

    std::filesystem::path sae;
    std::filesystem::path activations;
    std::map<Language, std::filesystem::path> association;
    std::map<Language, std::filesystem::path> lexicon;
    std::filesystem::path pairs;
    std::filesystem::path scores;
    std::filesystem::path states;
    std::vector<Language> languages{Language::En, Language::Zh};

    std::size_t concept_size = 10;
    ValidateParams validate;
    EmbedParams embed;
    PredictParams predict;
    SteeringParams steering;
    EvalParams eval;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    std::filesystem::path output(const std::filesystem::path& name) const;
};

PipelineConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical JSON of the effective configuration (after flag overrides).
std::string config_json(const PipelineConfig& config);
std::string config_sha256(const PipelineConfig& config);

/// Checks parameter ranges and that the inputs `command` reads exist.
void validate_config(const PipelineConfig& config, std::string_view command);

void cmd_build_space(const PipelineConfig& config);
void cmd_validate_space(const PipelineConfig& config);
void cmd_embed(const PipelineConfig& config);
void cmd_predict(const PipelineConfig& config);
void cmd_predict_cross(const PipelineConfig& config);
void cmd_compile_steering(const PipelineConfig& config);
void cmd_apply_steering(const PipelineConfig& config);
void cmd_eval_steering(const PipelineConfig& config);

/// Runs a command by name; on failure writes <out_dir>/error.json and rethrows.
void run_command(std::string_view command, const PipelineConfig& config);

/// Entry point of the `emospace` executable. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace emospace::cli

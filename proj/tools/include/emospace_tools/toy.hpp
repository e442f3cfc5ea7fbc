#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "emospace/dataio.hpp"
#include "emospace/lexicon.hpp"
#include "emospace/matrix.hpp"
#include "emospace/sae.hpp"

namespace emospace::toy {

/// Synthetic "toy LLM" with planted emotion structure.
///
/// Hidden layout (d = hidden_dim): dims [0, d-4) carry meaning, d-4 and d-3 mark
/// the pseudo-language (en / zh), d-2 and d-1 are nuisance directions that concept
/// words never use. Dictionary features come in three families: semantic features
/// read the meaning dims, language features read one marker plus a weak semantic
/// direction, and nuisance features read only the nuisance dims. Ratings are linear
/// in the meaning dims, so nuisance features fall outside both emotion spaces and
/// carry no affective signal.
struct ToyConfig {
    std::size_t hidden_dim = 16;
    std::size_t width = 256;
    std::size_t related_words = 14;  // own associates per emotion and language
    std::size_t distractors = 6;     // associates borrowed from other emotions
    std::size_t lexicon_words = 800;
    double centroid_radius = 3.0;
    double cluster_noise = 0.25;
    double rating_noise = 0.02;
    std::size_t score_cues = 400;
    double score_slope = 0.02;       // per unit steering factor, target column
    std::size_t prompt_tokens = 8;
    std::uint64_t seed = 20240601;
};

struct ToyLanguage {
    Language lang = Language::En;
    std::vector<std::pair<std::string, std::string>> edges;  // cue -> response
    std::vector<ActivationRecord> records;
    AffectiveLexicon lexicon;                                 // raw ratings
    std::vector<std::vector<std::string>> related;            // per emotion, own associates
};

struct ToyFixture {
    ToyConfig config;
    SaeModel sae;
    ToyLanguage en;
    ToyLanguage zh;
    std::vector<std::pair<std::string, std::string>> pairs;  // en word, zh word
    std::vector<ScoreRow> scores;
    MatrixF prompt_states;
    std::vector<std::uint32_t> nuisance_features;
};

ToyFixture make_toy_fixture(const ToyConfig& config = {});

/// Writes every artifact plus a pipeline.json that the CLI can run against.
/// Returns the path of pipeline.json.
std::filesystem::path write_toy_fixture(const ToyFixture& fixture, const std::filesystem::path& dir);

}  // namespace emospace::toy

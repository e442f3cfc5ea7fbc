#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "emospace/language.hpp"
#include "emospace/lexicon.hpp"
#include "emospace/matrix.hpp"
#include "emospace/sparse.hpp"

namespace emospace {

// ---------------------------------------------------------------------------
// Matrix container: JSON manifest + raw little-endian float32 blob.
// ---------------------------------------------------------------------------

struct MatrixManifest {
    std::string dtype = "f32";
    std::string order = "row-major";
    std::string endianness = "little";
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::string blob_path;  // relative to the manifest's directory unless absolute
    std::string sha256;     // lowercase hex
};

MatrixManifest read_matrix_manifest(const std::filesystem::path& manifest);

/// Reads and verifies a matrix container. Values are bit-exact copies of the blob.
MatrixF load_matrix(const std::filesystem::path& manifest);

/// Writes `<manifest>` and its blob. The blob defaults to the manifest path with a
/// ".bin" extension. Both files are written atomically.
void write_matrix(const std::filesystem::path& manifest, const MatrixF& matrix);

std::string sha256_hex(std::span<const std::byte> bytes);

// ---------------------------------------------------------------------------
// Activation records (JSON Lines).
// ---------------------------------------------------------------------------

struct ActivationRecord {
    std::string word;
    Language lang = Language::En;
    SparseFeatureVector features;
};

/// Parses one record per line; `width` is the SAE dictionary size L.
std::vector<ActivationRecord> parse_activation_records(std::istream& in, std::size_t width);
std::vector<ActivationRecord> load_activation_records(const std::filesystem::path& path,
                                                      std::size_t width);

/// Canonical form: records sorted by (lang, word) in codepoint order.
void serialize_activation_records(std::ostream& out, std::vector<ActivationRecord> records);
void write_activation_records(const std::filesystem::path& path,
                              std::vector<ActivationRecord> records);

/// word -> feature vector for a single language.
using WordVectors = std::map<std::string, SparseFeatureVector, std::less<>>;

WordVectors word_vectors_for(const std::vector<ActivationRecord>& records, Language lang);

// ---------------------------------------------------------------------------
// Association norms (cue \t response \t count).
// ---------------------------------------------------------------------------

/// Directed multigraph of cue -> response with summed counts.
class AssociationGraph {
public:
    void add_edge(const std::string& cue, const std::string& response, std::uint64_t count);

    /// Responses given to `cue`, in codepoint order.
    std::vector<std::string> forward(std::string_view cue) const;
    /// Cues that elicited `response`, in codepoint order.
    std::vector<std::string> backward(std::string_view response) const;

    std::uint64_t count(std::string_view cue, std::string_view response) const;
    bool contains(std::string_view word) const;
    std::size_t edge_count() const noexcept;
    std::size_t vertex_count() const noexcept { return vertices_.size(); }

private:
    using Adjacency = std::map<std::string, std::map<std::string, std::uint64_t, std::less<>>, std::less<>>;
    Adjacency out_;
    Adjacency in_;
    std::set<std::string, std::less<>> vertices_;
};

AssociationGraph parse_association_graph(std::istream& in);
AssociationGraph load_association_graph(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Affective lexicon (word \t valence \t arousal) + JSON sidecar with bounds.
// ---------------------------------------------------------------------------

/// Reads {"valence_min":..,"valence_max":..,"arousal_min":..,"arousal_max":..}.
RatingBounds load_rating_bounds(const std::filesystem::path& sidecar);
void write_rating_bounds(const std::filesystem::path& sidecar, const RatingBounds& bounds);

/// Default sidecar location: `<lexicon>.meta.json`.
std::filesystem::path lexicon_sidecar_path(const std::filesystem::path& lexicon);

/// An optional first line "word\tvalence\tarousal" is treated as a header.
AffectiveLexicon parse_lexicon(std::istream& in, const RatingBounds& bounds, Language lang);
AffectiveLexicon load_lexicon(const std::filesystem::path& path, const RatingBounds& bounds,
                              Language lang);
void write_lexicon(const std::filesystem::path& path, const AffectiveLexicon& lexicon);

/// Bilingual word-pair table: "<en word>\t<zh word>" per line.
std::vector<std::pair<std::string, std::string>> load_word_pairs(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Steering bundle (JSON).
// ---------------------------------------------------------------------------

struct SteeringProvenance {
    std::string ranking_rule;
    std::size_t components = 0;       // C
    std::size_t top_components = 0;   // M
    std::size_t features = 0;         // F
    std::size_t nmf_iterations = 0;   // completed, <= requested
    std::uint64_t nmf_seed = 0;
    double nmf_error = 0.0;
    std::string source_space;         // language whose emotion space produced the features
    std::vector<std::size_t> component_ranking;
    std::vector<std::uint32_t> ranked_features;
    std::vector<double> feature_scores;
    std::vector<std::string> concept_words;
};

struct SteeringBundle {
    std::string emotion;
    Language language = Language::En;
    std::string sae_id;
    int layer = 0;
    std::size_t hidden_dim = 0;  // d
    std::size_t width = 0;       // L
    std::vector<std::uint32_t> feature_indices;  // ascending, unique
    std::vector<float> dense_sum;
    SteeringProvenance provenance;
};

void write_steering_bundle(const std::filesystem::path& path, const SteeringBundle& bundle);
SteeringBundle load_steering_bundle(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Classifier score table (CSV).
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 7> kScoreColumns = {
    "anger", "disgust", "fear", "joy", "sadness", "surprise", "neutral"};

struct ScoreRow {
    std::string sentence_id;
    std::string cue_word;
    std::string target_emotion;
    double steering_factor = 0.0;
    std::array<double, 7> scores{};
};

std::vector<ScoreRow> parse_score_table(std::istream& in);
std::vector<ScoreRow> load_score_table(const std::filesystem::path& path);
void write_score_table(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);

// ---------------------------------------------------------------------------
// Misc.
// ---------------------------------------------------------------------------

/// Writes `content` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

}  // namespace emospace

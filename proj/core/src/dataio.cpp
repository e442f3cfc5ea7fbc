#include "emospace/dataio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include <openssl/evp.h>

#include <json.hpp>

#include "emospace/error.hpp"

namespace emospace {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return std::move(buffer).str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) fail(ErrorCode::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::Io, "cannot rename " + tmp.string() + " -> " + path.string() + ": " + ec.message());
}

namespace {

ordered_json parse_json(const std::string& text, const fs::path& source) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, "invalid JSON in " + source.string() + ": " + e.what());
    }
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::string_view chomp(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

bool parse_double(std::string_view text, double& out) {
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size() && std::isfinite(out);
}

std::string where(const std::string& source, std::size_t line_no) {
    return source + ":" + std::to_string(line_no) + ": ";
}

template <class T>
T required(const ordered_json& doc, const char* key, const std::string& source) {
    if (!doc.contains(key)) fail(ErrorCode::Format, source + ": missing field '" + key + "'");
    try {
        return doc.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorCode::Format, source + ": field '" + key + "' has the wrong type");
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Matrix container
// ---------------------------------------------------------------------------

std::string sha256_hex(std::span<const std::byte> bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &length, EVP_sha256(), nullptr) != 1) {
        fail(ErrorCode::Numerical, "SHA-256 computation failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string hex;
    hex.reserve(2 * length);
    for (unsigned int i = 0; i < length; ++i) {
        hex.push_back(kHex[digest[i] >> 4]);
        hex.push_back(kHex[digest[i] & 0xF]);
    }
    return hex;
}

MatrixManifest read_matrix_manifest(const fs::path& manifest) {
    const std::string source = manifest.string();
    const ordered_json doc = parse_json(read_file(manifest), manifest);
    MatrixManifest m;
    m.dtype = required<std::string>(doc, "dtype", source);
    m.order = required<std::string>(doc, "order", source);
    m.endianness = required<std::string>(doc, "endianness", source);
    m.rows = required<std::size_t>(doc, "rows", source);
    m.cols = required<std::size_t>(doc, "cols", source);
    m.blob_path = required<std::string>(doc, "blob_path", source);
    m.sha256 = required<std::string>(doc, "sha256", source);
    if (m.dtype != "f32") fail(ErrorCode::Format, source + ": unsupported dtype '" + m.dtype + "'");
    if (m.order != "row-major") fail(ErrorCode::Format, source + ": unsupported order '" + m.order + "'");
    if (m.endianness != "little") fail(ErrorCode::Format, source + ": unsupported endianness '" + m.endianness + "'");
    if (m.rows < 1 || m.cols < 1) fail(ErrorCode::Shape, source + ": rows and cols must be >= 1");
    return m;
}

MatrixF load_matrix(const fs::path& manifest) {
    const MatrixManifest m = read_matrix_manifest(manifest);
    fs::path blob_path = m.blob_path;
    if (blob_path.is_relative()) blob_path = manifest.parent_path() / blob_path;
    const std::string blob = read_file(blob_path);
    const std::size_t expected = m.rows * m.cols * sizeof(float);
    if (blob.size() != expected) {
        fail(ErrorCode::Shape, blob_path.string() + ": blob has " + std::to_string(blob.size()) +
                                   " bytes, manifest implies " + std::to_string(expected));
    }
    const auto bytes = std::as_bytes(std::span(blob.data(), blob.size()));
    if (sha256_hex(bytes) != m.sha256) {
        fail(ErrorCode::Checksum, blob_path.string() + ": sha256 does not match manifest");
    }
    std::vector<float> values(m.rows * m.cols);
    std::memcpy(values.data(), blob.data(), expected);
    if constexpr (std::endian::native == std::endian::big) {
        for (float& v : values) {
            auto u = std::bit_cast<std::uint32_t>(v);
            u = __builtin_bswap32(u);
            v = std::bit_cast<float>(u);
        }
    }
    return {m.rows, m.cols, std::move(values)};
}

void write_matrix(const fs::path& manifest, const MatrixF& matrix) {
    if (matrix.rows() < 1 || matrix.cols() < 1) fail(ErrorCode::Shape, "cannot write an empty matrix");
    std::string blob(matrix.size() * sizeof(float), '\0');
    std::memcpy(blob.data(), matrix.data().data(), blob.size());
    if constexpr (std::endian::native == std::endian::big) {
        auto* words = reinterpret_cast<std::uint32_t*>(blob.data());
        for (std::size_t i = 0; i < matrix.size(); ++i) words[i] = __builtin_bswap32(words[i]);
    }
    fs::path blob_path = manifest;
    blob_path.replace_extension(".bin");
    ordered_json doc;
    doc["dtype"] = "f32";
    doc["order"] = "row-major";
    doc["endianness"] = "little";
    doc["rows"] = matrix.rows();
    doc["cols"] = matrix.cols();
    doc["blob_path"] = blob_path.filename().string();
    doc["sha256"] = sha256_hex(std::as_bytes(std::span(blob.data(), blob.size())));
    write_file_atomic(blob_path, blob);
    write_file_atomic(manifest, doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Activation records
// ---------------------------------------------------------------------------

std::vector<ActivationRecord> parse_activation_records(std::istream& in, std::size_t width) {
    std::vector<ActivationRecord> records;
    std::set<std::pair<Language, std::string>> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = chomp(line);
        if (text.find_first_not_of(" \t") == std::string_view::npos) continue;
        const std::string loc = "activation records line " + std::to_string(line_no);
        const ordered_json doc = parse_json(std::string(text), loc);
        ActivationRecord rec;
        rec.word = required<std::string>(doc, "word", loc);
        if (rec.word.empty()) fail(ErrorCode::Format, loc + ": empty word");
        rec.lang = parse_language(required<std::string>(doc, "lang", loc));
        const auto indices = required<std::vector<std::int64_t>>(doc, "indices", loc);
        const auto values = required<std::vector<double>>(doc, "values", loc);
        if (indices.size() != values.size()) fail(ErrorCode::Format, loc + ": indices and values differ in length");
        rec.features.width = width;
        for (std::size_t i = 0; i < indices.size(); ++i) {
            if (indices[i] < 0 || static_cast<std::size_t>(indices[i]) >= width) {
                fail(ErrorCode::Range, loc + ": index " + std::to_string(indices[i]) + " outside [0, " +
                                           std::to_string(width) + ")");
            }
            rec.features.indices.push_back(static_cast<std::uint32_t>(indices[i]));
            rec.features.values.push_back(static_cast<float>(values[i]));
        }
        try {
            rec.features.validate();
        } catch (const Error& e) {
            fail(e.code(), loc + ": " + e.what());
        }
        if (!seen.emplace(rec.lang, rec.word).second) {
            fail(ErrorCode::Duplicate, loc + ": duplicate record for (" + rec.word + ", " +
                                           std::string(to_string(rec.lang)) + ")");
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<ActivationRecord> load_activation_records(const fs::path& path, std::size_t width) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    return parse_activation_records(in, width);
}

void serialize_activation_records(std::ostream& out, std::vector<ActivationRecord> records) {
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        if (a.lang != b.lang) return a.lang < b.lang;
        return a.word < b.word;
    });
    for (const auto& rec : records) {
        ordered_json doc;
        doc["word"] = rec.word;
        doc["lang"] = std::string(to_string(rec.lang));
        doc["indices"] = rec.features.indices;
        doc["values"] = rec.features.values;
        out << doc.dump() << '\n';
    }
}

void write_activation_records(const fs::path& path, std::vector<ActivationRecord> records) {
    std::ostringstream out;
    serialize_activation_records(out, std::move(records));
    write_file_atomic(path, out.str());
}

WordVectors word_vectors_for(const std::vector<ActivationRecord>& records, Language lang) {
    WordVectors out;
    for (const auto& rec : records) {
        if (rec.lang == lang) out.emplace(rec.word, rec.features);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Association graph
// ---------------------------------------------------------------------------

void AssociationGraph::add_edge(const std::string& cue, const std::string& response, std::uint64_t count) {
    if (cue.empty() || response.empty()) fail(ErrorCode::Format, "association edge with empty word");
    if (count == 0) fail(ErrorCode::Range, "association count must be positive");
    out_[cue][response] += count;
    in_[response][cue] += count;
    vertices_.insert(cue);
    vertices_.insert(response);
}

namespace {
template <class Adjacency>
std::vector<std::string> neighbours(const Adjacency& adj, std::string_view word) {
    std::vector<std::string> out;
    const auto it = adj.find(word);
    if (it == adj.end()) return out;
    out.reserve(it->second.size());
    for (const auto& [w, count] : it->second) out.push_back(w);
    return out;
}
}  // namespace

std::vector<std::string> AssociationGraph::forward(std::string_view cue) const { return neighbours(out_, cue); }

std::vector<std::string> AssociationGraph::backward(std::string_view response) const {
    return neighbours(in_, response);
}

std::uint64_t AssociationGraph::count(std::string_view cue, std::string_view response) const {
    const auto it = out_.find(cue);
    if (it == out_.end()) return 0;
    const auto jt = it->second.find(response);
    return jt == it->second.end() ? 0 : jt->second;
}

bool AssociationGraph::contains(std::string_view word) const { return vertices_.find(word) != vertices_.end(); }

std::size_t AssociationGraph::edge_count() const noexcept {
    std::size_t n = 0;
    for (const auto& [cue, responses] : out_) n += responses.size();
    return n;
}

AssociationGraph parse_association_graph(std::istream& in) {
    AssociationGraph graph;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = chomp(line);
        if (text.empty()) continue;
        const auto fields = split(text, '\t');
        const std::string loc = where("association edges", line_no);
        if (fields.size() != 3) fail(ErrorCode::Format, loc + "expected 3 tab-separated fields");
        if (fields[0].empty() || fields[1].empty()) fail(ErrorCode::Format, loc + "empty cue or response");
        std::int64_t count = 0;
        const auto [ptr, ec] = std::from_chars(fields[2].data(), fields[2].data() + fields[2].size(), count);
        if (ec != std::errc{} || ptr != fields[2].data() + fields[2].size()) {
            fail(ErrorCode::Format, loc + "count '" + std::string(fields[2]) + "' is not an integer");
        }
        if (count < 1) fail(ErrorCode::Range, loc + "count must be a positive integer");
        graph.add_edge(std::string(fields[0]), std::string(fields[1]), static_cast<std::uint64_t>(count));
    }
    return graph;
}

AssociationGraph load_association_graph(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    return parse_association_graph(in);
}

// ---------------------------------------------------------------------------
// Lexicon
// ---------------------------------------------------------------------------

RatingBounds load_rating_bounds(const fs::path& sidecar) {
    const std::string source = sidecar.string();
    const ordered_json doc = parse_json(read_file(sidecar), sidecar);
    RatingBounds b;
    b.valence_min = required<double>(doc, "valence_min", source);
    b.valence_max = required<double>(doc, "valence_max", source);
    b.arousal_min = required<double>(doc, "arousal_min", source);
    b.arousal_max = required<double>(doc, "arousal_max", source);
    return b;
}

void write_rating_bounds(const fs::path& sidecar, const RatingBounds& bounds) {
    ordered_json doc;
    doc["valence_min"] = bounds.valence_min;
    doc["valence_max"] = bounds.valence_max;
    doc["arousal_min"] = bounds.arousal_min;
    doc["arousal_max"] = bounds.arousal_max;
    write_file_atomic(sidecar, doc.dump(2) + "\n");
}

fs::path lexicon_sidecar_path(const fs::path& lexicon) {
    fs::path p = lexicon;
    p += ".meta.json";
    return p;
}

AffectiveLexicon parse_lexicon(std::istream& in, const RatingBounds& bounds, Language lang) {
    if (bounds.valence_min > bounds.valence_max || bounds.arousal_min > bounds.arousal_max) {
        fail(ErrorCode::InvalidArgument, "lexicon rating bounds are inverted");
    }
    AffectiveLexicon lex;
    lex.language = lang;
    lex.bounds = bounds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = chomp(line);
        if (text.empty()) continue;
        if (line_no == 1 && text == "word\tvalence\tarousal") continue;
        const std::string loc = where("lexicon", line_no);
        const auto fields = split(text, '\t');
        if (fields.size() != 3) fail(ErrorCode::Format, loc + "expected 3 tab-separated fields");
        if (fields[0].empty()) fail(ErrorCode::Format, loc + "empty word");
        LexiconEntry entry;
        if (!parse_double(fields[1], entry.valence_raw) || !parse_double(fields[2], entry.arousal_raw)) {
            fail(ErrorCode::Format, loc + "ratings must be finite numbers");
        }
        if (entry.valence_raw < bounds.valence_min || entry.valence_raw > bounds.valence_max) {
            fail(ErrorCode::Range, loc + "valence " + std::string(fields[1]) + " outside declared range");
        }
        if (entry.arousal_raw < bounds.arousal_min || entry.arousal_raw > bounds.arousal_max) {
            fail(ErrorCode::Range, loc + "arousal " + std::string(fields[2]) + " outside declared range");
        }
        if (!lex.entries.emplace(std::string(fields[0]), entry).second) {
            fail(ErrorCode::Duplicate, loc + "duplicate word '" + std::string(fields[0]) + "'");
        }
    }
    return lex;
}

AffectiveLexicon load_lexicon(const fs::path& path, const RatingBounds& bounds, Language lang) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    return parse_lexicon(in, bounds, lang);
}

void write_lexicon(const fs::path& path, const AffectiveLexicon& lexicon) {
    std::ostringstream out;
    out.precision(17);
    out << "word\tvalence\tarousal\n";
    for (const auto& [word, e] : lexicon.entries) out << word << '\t' << e.valence_raw << '\t' << e.arousal_raw << '\n';
    write_file_atomic(path, out.str());
    write_rating_bounds(lexicon_sidecar_path(path), lexicon.bounds);
}

std::vector<std::pair<std::string, std::string>> load_word_pairs(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = chomp(line);
        if (text.empty()) continue;
        const auto fields = split(text, '\t');
        if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
            fail(ErrorCode::Format, where("word pairs", line_no) + "expected 2 non-empty tab-separated fields");
        }
        pairs.emplace_back(std::string(fields[0]), std::string(fields[1]));
    }
    return pairs;
}

// ---------------------------------------------------------------------------
// Steering bundle
// ---------------------------------------------------------------------------

void write_steering_bundle(const fs::path& path, const SteeringBundle& bundle) {
    ordered_json doc;
    doc["emotion"] = bundle.emotion;
    doc["language"] = std::string(to_string(bundle.language));
    doc["sae_id"] = bundle.sae_id;
    doc["layer"] = bundle.layer;
    doc["d"] = bundle.hidden_dim;
    doc["L"] = bundle.width;
    doc["feature_indices"] = bundle.feature_indices;
    doc["dense_sum"] = bundle.dense_sum;
    const auto& p = bundle.provenance;
    ordered_json prov;
    prov["ranking_rule"] = p.ranking_rule;
    prov["C"] = p.components;
    prov["M"] = p.top_components;
    prov["F"] = p.features;
    prov["nmf_iterations"] = p.nmf_iterations;
    prov["nmf_seed"] = p.nmf_seed;
    prov["nmf_error"] = p.nmf_error;
    prov["source_space"] = p.source_space;
    prov["component_ranking"] = p.component_ranking;
    prov["ranked_features"] = p.ranked_features;
    prov["feature_scores"] = p.feature_scores;
    prov["concept_words"] = p.concept_words;
    doc["provenance"] = prov;
    write_file_atomic(path, doc.dump(2) + "\n");
}

SteeringBundle load_steering_bundle(const fs::path& path) {
    const std::string source = path.string();
    const ordered_json doc = parse_json(read_file(path), path);
    SteeringBundle b;
    b.emotion = required<std::string>(doc, "emotion", source);
    b.language = parse_language(required<std::string>(doc, "language", source));
    b.sae_id = required<std::string>(doc, "sae_id", source);
    b.layer = required<int>(doc, "layer", source);
    b.hidden_dim = required<std::size_t>(doc, "d", source);
    b.width = required<std::size_t>(doc, "L", source);
    b.feature_indices = required<std::vector<std::uint32_t>>(doc, "feature_indices", source);
    b.dense_sum = required<std::vector<float>>(doc, "dense_sum", source);
    if (b.dense_sum.size() != b.hidden_dim) fail(ErrorCode::Shape, source + ": dense_sum length != d");
    if (b.feature_indices.empty()) fail(ErrorCode::Format, source + ": bundle selects no features");
    for (std::size_t i = 0; i < b.feature_indices.size(); ++i) {
        if (b.feature_indices[i] >= b.width) fail(ErrorCode::Range, source + ": feature index outside [0, L)");
        if (i > 0 && b.feature_indices[i] <= b.feature_indices[i - 1]) {
            fail(ErrorCode::Format, source + ": feature_indices must be ascending and unique");
        }
    }
    if (doc.contains("provenance")) {
        const auto& prov = doc["provenance"];
        auto& p = b.provenance;
        p.ranking_rule = prov.value("ranking_rule", std::string{});
        p.components = prov.value("C", std::size_t{0});
        p.top_components = prov.value("M", std::size_t{0});
        p.features = prov.value("F", std::size_t{0});
        p.nmf_iterations = prov.value("nmf_iterations", std::size_t{0});
        p.nmf_seed = prov.value("nmf_seed", std::uint64_t{0});
        p.nmf_error = prov.value("nmf_error", 0.0);
        p.source_space = prov.value("source_space", std::string{});
        p.component_ranking = prov.value("component_ranking", std::vector<std::size_t>{});
        p.ranked_features = prov.value("ranked_features", std::vector<std::uint32_t>{});
        p.feature_scores = prov.value("feature_scores", std::vector<double>{});
        p.concept_words = prov.value("concept_words", std::vector<std::string>{});
    }
    return b;
}

// ---------------------------------------------------------------------------
// Score table
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(std::string_view line) {
    std::vector<std::string> fields;
    std::string current;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    current.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                current.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(c);
        }
    }
    fields.push_back(std::move(current));
    return fields;
}

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n") == std::string::npos) return value;
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string score_header() {
    std::string header = "sentence_id,cue_word,target_emotion,steering_factor";
    for (auto col : kScoreColumns) {
        header.push_back(',');
        header.append(col);
    }
    return header;
}

}  // namespace

std::vector<ScoreRow> parse_score_table(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) fail(ErrorCode::Format, "score table is empty (header row required)");
    if (chomp(line) != score_header()) {
        fail(ErrorCode::Format, "score table header mismatch; expected '" + score_header() + "'");
    }
    std::vector<ScoreRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string_view text = chomp(line);
        if (text.empty()) continue;
        const std::string loc = where("score table", line_no);
        const auto fields = split_csv(text);
        if (fields.size() != 4 + kScoreColumns.size()) {
            fail(ErrorCode::Format, loc + "expected " + std::to_string(4 + kScoreColumns.size()) + " columns");
        }
        ScoreRow row;
        row.sentence_id = fields[0];
        row.cue_word = fields[1];
        row.target_emotion = fields[2];
        if (!parse_double(fields[3], row.steering_factor)) fail(ErrorCode::Format, loc + "steering_factor is not a number");
        if (row.steering_factor < 0.0) fail(ErrorCode::Range, loc + "steering_factor must be >= 0");
        for (std::size_t c = 0; c < kScoreColumns.size(); ++c) {
            double v = 0.0;
            if (!parse_double(fields[4 + c], v)) fail(ErrorCode::Format, loc + "score is not a number");
            if (v < 0.0 || v > 1.0) fail(ErrorCode::Range, loc + "score outside [0, 1]");
            row.scores[c] = v;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ScoreRow> load_score_table(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    return parse_score_table(in);
}

void write_score_table(const fs::path& path, const std::vector<ScoreRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << score_header() << '\n';
    for (const auto& row : rows) {
        out << csv_field(row.sentence_id) << ',' << csv_field(row.cue_word) << ',' << csv_field(row.target_emotion)
            << ',' << row.steering_factor;
        for (double s : row.scores) out << ',' << s;
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

}  // namespace emospace

#include "emospace_tools/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "emospace/dataio.hpp"
#include "emospace/emotions.hpp"
#include "emospace/error.hpp"
#include "emospace/parallel.hpp"
#include "emospace/random.hpp"
#include "emospace/sae.hpp"
#include "emospace/stats.hpp"
#include "emospace/steer.hpp"

namespace emospace::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

// Seed streams: four ASCII bytes packed big-endian, the convention used in core.
constexpr std::uint64_t stream_id(std::string_view tag) noexcept {
    std::uint64_t v = 0;
    for (char c : tag) v = (v << 8) | static_cast<unsigned char>(c);
    return v;
}

constexpr std::string_view kValidateStream = "vald";
constexpr std::string_view kLogRegStream = "lgrg";
constexpr std::string_view kEmbedStream = "embd";
constexpr std::string_view kPredictStream = "pred";
constexpr std::string_view kCrossStream = "cros";
constexpr std::string_view kSteerStream = "strg";
constexpr std::string_view kEvalStream = "eval";

std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

/// JSON number that stays valid for non-finite values.
ojson num(double v) {
    if (std::isfinite(v)) return v;
    return fmt(v);
}

std::string lang_code(Language lang) { return std::string(to_string(lang)); }

std::size_t lang_index(Language lang) { return lang == Language::En ? 0 : 1; }

// ---------------------------------------------------------------------------
// Run context: collects outputs, seeds and decisions for the command report.
// ---------------------------------------------------------------------------

struct SeedEntry {
    std::string stream;
    std::uint64_t index;
    std::uint64_t seed;
};

class Run {
public:
    Run(const PipelineConfig& config, std::string command)
        : config_(config), command_(std::move(command)) {
        fs::create_directories(config_.out_dir);
    }

    const PipelineConfig& config() const noexcept { return config_; }

    std::uint64_t seed(std::string_view stream, std::uint64_t index) {
        const std::uint64_t s = derive_seed(config_.seed, stream_id(stream), index);
        seeds_.push_back({std::string(stream), index, s});
        return s;
    }

    void decision(std::string id) {
        if (std::find(decisions_.begin(), decisions_.end(), id) == decisions_.end()) {
            decisions_.push_back(std::move(id));
        }
    }

    void write(const fs::path& relative, std::string_view content) {
        const fs::path path = config_.output(relative);
        fs::create_directories(path.parent_path());
        write_file_atomic(path, content);
        record(relative);
    }

    void write_json(const fs::path& relative, const ojson& doc) { write(relative, doc.dump(2) + "\n"); }

    /// Records a file that was written by a core writer.
    void record(const fs::path& relative) {
        const std::string bytes = read_file(config_.output(relative));
        outputs_.emplace_back(relative.generic_string(),
                              sha256_hex(std::as_bytes(std::span(bytes.data(), bytes.size()))));
    }

    void finish(ojson summary = ojson::object()) {
        ojson report;
        report["tool"] = "emospace";
        report["version"] = kToolVersion;
        report["command"] = command_;
        report["config_sha256"] = config_sha256(config_);
        report["config"] = ojson::parse(config_json(config_));
        report["seed"] = config_.seed;
        ojson seeds = ojson::array();
        for (const auto& s : seeds_) seeds.push_back({{"stream", s.stream}, {"index", s.index}, {"seed", s.seed}});
        report["derived_seeds"] = std::move(seeds);
        report["decisions"] = decisions_;
        report["summary"] = std::move(summary);
        ojson outputs = ojson::array();
        for (const auto& [path, hash] : outputs_) outputs.push_back({{"path", path}, {"sha256", hash}});
        report["outputs"] = std::move(outputs);
        const fs::path path = config_.output(fs::path("reports") / (command_ + ".json"));
        fs::create_directories(path.parent_path());
        write_file_atomic(path, report.dump(2) + "\n");
    }

private:
    const PipelineConfig& config_;
    std::string command_;
    std::vector<SeedEntry> seeds_;
    std::vector<std::string> decisions_;
    std::vector<std::pair<std::string, std::string>> outputs_;
};

class Csv {
public:
    explicit Csv(std::initializer_list<std::string_view> header) {
        bool first = true;
        for (auto h : header) {
            if (!first) out_ << ',';
            out_ << h;
            first = false;
        }
        out_ << '\n';
    }

    template <class... Fields>
    void row(const Fields&... fields) {
        bool first = true;
        ((emit(fields, first)), ...);
        out_ << '\n';
    }

    std::string str() const { return out_.str(); }

private:
    template <class T>
    void emit(const T& v, bool& first) {
        if (!first) out_ << ',';
        first = false;
        if constexpr (std::is_same_v<T, double> || std::is_same_v<T, float>) {
            out_ << fmt(v);
        } else if constexpr (std::is_same_v<T, bool>) {
            out_ << (v ? "true" : "false");
        } else if constexpr (std::is_arithmetic_v<T>) {
            out_ << v;
        } else {
            out_ << quote(std::string_view(v));
        }
    }

    static std::string quote(std::string_view s) {
        if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
        std::string q = "\"";
        for (char c : s) {
            if (c == '"') q += '"';
            q += c;
        }
        return q + '"';
    }

    std::ostringstream out_;
};

// ---------------------------------------------------------------------------
// Input loading
// ---------------------------------------------------------------------------

std::size_t sae_width(const PipelineConfig& config) {
    const fs::path manifest = config.resolve(config.sae);
    ojson doc;
    try {
        doc = ojson::parse(read_file(manifest));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, manifest.string() + ": " + e.what());
    }
    if (!doc.contains("W_encoder") || !doc["W_encoder"].is_string()) {
        fail(ErrorCode::Format, manifest.string() + ": missing W_encoder");
    }
    fs::path enc = doc["W_encoder"].get<std::string>();
    if (enc.is_relative()) enc = manifest.parent_path() / enc;
    return read_matrix_manifest(enc).rows;
}

struct Corpus {
    std::size_t width = 0;
    std::vector<ActivationRecord> records;
    std::map<Language, WordVectors> vectors;

    const WordVectors& of(Language lang) const {
        const auto it = vectors.find(lang);
        if (it == vectors.end()) fail(ErrorCode::InvalidArgument, "no activations loaded for " + lang_code(lang));
        return it->second;
    }
};

Corpus load_corpus(const PipelineConfig& config, std::span<const Language> langs) {
    Corpus c;
    c.width = sae_width(config);
    c.records = load_activation_records(config.resolve(config.activations), c.width);
    for (Language lang : langs) {
        c.vectors[lang] = word_vectors_for(c.records, lang);
        if (c.vectors[lang].empty()) {
            fail(ErrorCode::InsufficientData, "activation file has no records for " + lang_code(lang));
        }
    }
    return c;
}

AffectiveLexicon load_normalized_lexicon(const PipelineConfig& config, Language lang) {
    const auto it = config.lexicon.find(lang);
    if (it == config.lexicon.end()) fail(ErrorCode::InvalidArgument, "no lexicon configured for " + lang_code(lang));
    const fs::path path = config.resolve(it->second);
    const RatingBounds bounds = load_rating_bounds(lexicon_sidecar_path(path));
    return normalize_ratings(load_lexicon(path, bounds, lang));
}

// ---------------------------------------------------------------------------
// Space manifest (written by build-space, read by downstream commands)
// ---------------------------------------------------------------------------

fs::path space_file(Language lang) { return "space_" + lang_code(lang) + ".json"; }

struct SpaceManifest {
    EmotionSpace space;
    std::vector<ConceptSet> concept_sets;  // same order as space.subspaces
};

ojson index_array(std::span<const std::uint32_t> v) { return ojson(std::vector<std::uint32_t>(v.begin(), v.end())); }

ojson space_to_json(const EmotionSpace& space, const std::vector<ConceptSet>& sets,
                    const std::vector<ConceptOutcome>& outcomes) {
    ojson doc;
    doc["lang"] = lang_code(space.lang);
    doc["width"] = space.width;
    doc["union_size"] = space.union_indices.size();
    doc["union"] = index_array(space.union_indices);
    ojson subs = ojson::array();
    for (std::size_t i = 0; i < space.subspaces.size(); ++i) {
        const EmotionSubspace& s = space.subspaces[i];
        const ConceptSet& cs = sets[i];
        ojson words = ojson::array();
        for (const auto& w : cs.words) words.push_back({{"word", w.word}, {"similarity", w.similarity}});
        subs.push_back({{"emotion", s.emotion.key},
                        {"index", s.emotion.index},
                        {"label", s.emotion.label_word(space.lang)},
                        {"pool_size", cs.pool_size},
                        {"words", std::move(words)},
                        {"skipped", cs.skipped},
                        {"size", s.feature_indices.size()},
                        {"feature_indices", index_array(s.feature_indices)}});
    }
    doc["subspaces"] = std::move(subs);
    ojson missing = ojson::array();
    for (const auto& o : outcomes) {
        if (o.concept_set) continue;
        missing.push_back({{"emotion", o.emotion.key}, {"pool_size", o.pool_size}, {"diagnostics", o.diagnostics}});
    }
    doc["missing"] = std::move(missing);
    return doc;
}

SpaceManifest load_space(const PipelineConfig& config, Language lang) {
    const fs::path path = config.output(space_file(lang));
    if (!fs::exists(path)) {
        fail(ErrorCode::Io, "missing upstream artifact " + path.string() + " (run build-space first)");
    }
    SpaceManifest m;
    try {
        const ojson doc = ojson::parse(read_file(path));
        if (parse_language(doc.at("lang").get<std::string>()) != lang) {
            fail(ErrorCode::Format, path.string() + ": language does not match its file name");
        }
        std::vector<EmotionSubspace> subspaces;
        for (const auto& s : doc.at("subspaces")) {
            const auto emotion = find_emotion(s.at("emotion").get<std::string>());
            if (!emotion) fail(ErrorCode::Format, path.string() + ": unknown emotion " + s.at("emotion").dump());
            ConceptSet cs{*emotion, lang, {}, s.at("skipped").get<std::vector<std::string>>(),
                          s.at("pool_size").get<std::size_t>()};
            for (const auto& w : s.at("words")) {
                cs.words.push_back({w.at("word").get<std::string>(), w.at("similarity").get<double>()});
            }
            EmotionSubspace sub{*emotion, lang, doc.at("width").get<std::size_t>(),
                                s.at("feature_indices").get<IndexSet>(), {}};
            for (const auto& w : cs.words) sub.words.push_back(w.word);
            subspaces.push_back(std::move(sub));
            m.concept_sets.push_back(std::move(cs));
        }
        m.space = build_space(std::move(subspaces));
        m.space.lang = lang;
        m.space.width = doc.at("width").get<std::size_t>();
        if (m.space.union_indices != doc.at("union").get<IndexSet>()) {
            fail(ErrorCode::Format, path.string() + ": union does not match the subspaces");
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, path.string() + ": " + e.what());
    }
    return m;
}

FeatureSetPartition load_partition(const PipelineConfig& config) {
    const fs::path path = config.output("partition.json");
    if (!fs::exists(path)) {
        fail(ErrorCode::Io, "missing upstream artifact " + path.string() + " (run build-space with en and zh)");
    }
    FeatureSetPartition p;
    try {
        const ojson doc = ojson::parse(read_file(path));
        p.width = doc.at("width").get<std::size_t>();
        p.intersection = doc.at("intersection").get<IndexSet>();
        p.set_union = doc.at("union").get<IndexSet>();
        p.extra = doc.at("extra").get<IndexSet>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, path.string() + ": " + e.what());
    }
    return p;
}

/// Concept-set member words as cluster points over the whole-space indices.
struct ClusterData {
    std::vector<std::string> words;
    std::vector<int> labels;  // 1-based emotion index
    MatrixD points;
};

ClusterData cluster_data(const SpaceManifest& m, const WordVectors& vectors) {
    ClusterData c;
    std::vector<const SparseFeatureVector*> codes;
    for (const ConceptSet& cs : m.concept_sets) {
        for (const auto& w : cs.words) {
            const auto it = vectors.find(w.word);
            if (it == vectors.end()) {
                fail(ErrorCode::InsufficientData, "concept word '" + w.word + "' has no activation record");
            }
            c.words.push_back(w.word);
            c.labels.push_back(cs.emotion.index);
            codes.push_back(&it->second);
        }
    }
    if (c.words.empty()) fail(ErrorCode::InsufficientData, "emotion space has no concept words");
    c.points = restrict_rows(codes, m.space.union_indices);
    return c;
}

// ---------------------------------------------------------------------------
// Prediction report
// ---------------------------------------------------------------------------

void write_experiment(Run& run, const std::string& stem, const ExperimentReport& report) {
    Csv cells({"direction", "target", "condition", "features", "items", "mean_r", "sd_r", "threshold",
               "mean_r_above_threshold", "degenerate_predictions"});
    Csv rs({"direction", "target", "condition", "seed", "fold", "r", "null_threshold"});
    const std::size_t folds = report.options.folds;
    ojson jcells = ojson::array();
    for (const ConditionResult& c : report.cells) {
        const std::string target(to_string(c.target));
        const std::string cond(to_string(c.condition));
        cells.row(report.direction, target, cond, c.feature_count, c.items, c.mean_r, c.sd_r, c.threshold,
                  c.mean_r > c.threshold, c.degenerate_predictions);
        for (std::size_t i = 0; i < c.r.size(); ++i) {
            rs.row(report.direction, target, cond, i / folds, i % folds, c.r[i], c.null_thresholds[i]);
        }
        ojson r = ojson::array();
        for (double v : c.r) r.push_back(num(v));
        jcells.push_back({{"target", target},
                          {"condition", cond},
                          {"features", c.feature_count},
                          {"items", c.items},
                          {"mean_r", num(c.mean_r)},
                          {"sd_r", num(c.sd_r)},
                          {"threshold", num(c.threshold)},
                          {"degenerate_predictions", c.degenerate_predictions},
                          {"r", std::move(r)}});
    }
    Csv wil({"direction", "target", "a", "b", "rank_sum", "u", "p", "exact", "p_bonferroni"});
    ojson jcmp = ojson::array();
    for (const ConditionComparison& c : report.comparisons) {
        const std::string target(to_string(c.target));
        wil.row(report.direction, target, std::string(to_string(c.a)), std::string(to_string(c.b)), c.test.rank_sum,
                c.test.u, c.test.p, c.test.exact, c.p_bonferroni);
        jcmp.push_back({{"target", target},
                        {"a", to_string(c.a)},
                        {"b", to_string(c.b)},
                        {"rank_sum", c.test.rank_sum},
                        {"u", c.test.u},
                        {"p", c.test.p},
                        {"exact", c.test.exact},
                        {"p_bonferroni", c.p_bonferroni}});
    }
    const ExperimentOptions& o = report.options;
    ojson doc;
    doc["direction"] = report.direction;
    doc["options"] = {{"folds", o.folds},
                      {"seeds", o.seeds},
                      {"n_perm", o.n_perm},
                      {"null_quantile", o.null_quantile},
                      {"seed", o.seed},
                      {"gbm",
                       {{"learning_rate", o.gbm.learning_rate},
                        {"num_leaves", o.gbm.num_leaves},
                        {"rounds", o.gbm.rounds},
                        {"max_bins", o.gbm.max_bins},
                        {"min_data_in_leaf", o.gbm.min_data_in_leaf},
                        {"feature_fraction", o.gbm.feature_fraction},
                        {"bagging_fraction", o.gbm.bagging_fraction}}}};
    doc["cells"] = std::move(jcells);
    doc["comparisons"] = std::move(jcmp);
    run.write(stem + ".csv", cells.str());
    run.write(stem + "_r.csv", rs.str());
    run.write(stem + "_wilcoxon.csv", wil.str());
    run.write_json(stem + ".json", doc);
}

ojson experiment_summary(const ExperimentReport& report) {
    ojson s = ojson::object();
    for (const ConditionResult& c : report.cells) {
        s[std::string(to_string(c.target)) + "/" + std::string(to_string(c.condition))] = num(c.mean_r);
    }
    return s;
}

void predict_decisions(Run& run) {
    run.decision("affect:gbm-histogram-leafwise");
    run.decision("affect:null-95th-percentile-max-over-models");
    run.decision("stats:wilcoxon-two-sided-bonferroni-3");
    run.decision("stats:perm-p-(b+1)/(n+1)");
}

// ---------------------------------------------------------------------------
// Config JSON
// ---------------------------------------------------------------------------

template <class T>
void read_into(const ojson& obj, std::string_view key, T& out) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) return;
    out = it->template get<T>();
}

void read_path(const ojson& obj, std::string_view key, fs::path& out) {
    const auto it = obj.find(std::string(key));
    if (it == obj.end()) return;
    out = fs::path(it->get<std::string>());
}

void reject_unknown(const ojson& obj, std::initializer_list<std::string_view> known, std::string_view where) {
    if (!obj.is_object()) fail(ErrorCode::Format, "config: '" + std::string(where) + "' must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            fail(ErrorCode::Format, "config: unknown key '" + key + "' in " + std::string(where));
        }
    }
}

std::vector<Language> languages_from(const ojson& v) {
    std::vector<Language> out;
    for (const auto& s : v) out.push_back(parse_language(s.get<std::string>()));
    return out;
}

ojson languages_json(std::span<const Language> langs) {
    ojson a = ojson::array();
    for (Language l : langs) a.push_back(lang_code(l));
    return a;
}

std::map<Language, fs::path> per_language_paths(const ojson& v, std::string_view where) {
    if (!v.is_object()) fail(ErrorCode::Format, "config: '" + std::string(where) + "' must map language codes to paths");
    std::map<Language, fs::path> out;
    for (const auto& [code, path] : v.items()) out[parse_language(code)] = fs::path(path.get<std::string>());
    return out;
}

template <class T>
std::vector<T> unique_sorted(std::vector<T> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

void require_file(const fs::path& path, std::string_view what) {
    if (path.empty()) fail(ErrorCode::InvalidArgument, "config: " + std::string(what) + " path is not set");
    if (!fs::is_regular_file(path)) fail(ErrorCode::Io, std::string(what) + " not found: " + path.string());
}

void require_range(bool ok, const std::string& message) {
    if (!ok) fail(ErrorCode::Range, "config: " + message);
}

}  // namespace

// ---------------------------------------------------------------------------
// PipelineConfig
// ---------------------------------------------------------------------------

fs::path PipelineConfig::resolve(const fs::path& p) const {
    if (p.empty() || p.is_absolute()) return p;
    return base_dir / p;
}

fs::path PipelineConfig::output(const fs::path& name) const { return resolve(out_dir) / name; }

PipelineConfig parse_config(std::string_view json_text, const fs::path& base_dir) {
    PipelineConfig c;
    c.base_dir = base_dir;
    try {
        const ojson doc = ojson::parse(json_text);
        reject_unknown(doc,
                       {"seed", "out_dir", "threads", "sae", "activations", "association", "lexicon", "pairs",
                        "scores", "states", "languages", "concept_size", "validate", "embed", "predict",
                        "steering", "eval"},
                       "config");
        read_into(doc, "seed", c.seed);
        read_path(doc, "out_dir", c.out_dir);
        read_into(doc, "threads", c.threads);
        read_path(doc, "sae", c.sae);
        read_path(doc, "activations", c.activations);
        if (doc.contains("association")) c.association = per_language_paths(doc["association"], "association");
        if (doc.contains("lexicon")) c.lexicon = per_language_paths(doc["lexicon"], "lexicon");
        read_path(doc, "pairs", c.pairs);
        read_path(doc, "scores", c.scores);
        read_path(doc, "states", c.states);
        if (doc.contains("languages")) c.languages = languages_from(doc["languages"]);
        read_into(doc, "concept_size", c.concept_size);

        if (doc.contains("validate")) {
            const ojson& v = doc["validate"];
            reject_unknown(v, {"n_perm", "n_perm_logreg", "logreg"}, "validate");
            read_into(v, "n_perm", c.validate.n_perm);
            read_into(v, "n_perm_logreg", c.validate.n_perm_logreg);
            if (v.contains("logreg")) {
                const ojson& l = v["logreg"];
                reject_unknown(l, {"folds", "l2", "iterations"}, "validate.logreg");
                read_into(l, "folds", c.validate.logreg.folds);
                read_into(l, "l2", c.validate.logreg.l2);
                read_into(l, "iterations", c.validate.logreg.iterations);
            }
        }
        if (doc.contains("embed")) {
            const ojson& e = doc["embed"];
            reject_unknown(e, {"steps", "batch_size", "learning_rate", "temperature", "trace_interval", "languages"},
                           "embed");
            read_into(e, "steps", c.embed.config.steps);
            read_into(e, "batch_size", c.embed.config.batch_size);
            read_into(e, "learning_rate", c.embed.config.learning_rate);
            read_into(e, "temperature", c.embed.config.temperature);
            read_into(e, "trace_interval", c.embed.config.trace_interval);
            if (e.contains("languages")) c.embed.languages = languages_from(e["languages"]);
        }
        if (doc.contains("predict")) {
            const ojson& p = doc["predict"];
            reject_unknown(p, {"folds", "seeds", "n_perm", "null_quantile", "targets", "gbm"}, "predict");
            read_into(p, "folds", c.predict.options.folds);
            read_into(p, "seeds", c.predict.options.seeds);
            read_into(p, "n_perm", c.predict.options.n_perm);
            read_into(p, "null_quantile", c.predict.options.null_quantile);
            if (p.contains("targets")) {
                c.predict.targets.clear();
                for (const auto& t : p["targets"]) c.predict.targets.push_back(parse_affect_target(t.get<std::string>()));
            }
            if (p.contains("gbm")) {
                const ojson& g = p["gbm"];
                reject_unknown(g,
                               {"learning_rate", "num_leaves", "rounds", "max_bins", "min_data_in_leaf",
                                "feature_fraction", "bagging_fraction"},
                               "predict.gbm");
                GbmParams& gp = c.predict.options.gbm;
                read_into(g, "learning_rate", gp.learning_rate);
                read_into(g, "num_leaves", gp.num_leaves);
                read_into(g, "rounds", gp.rounds);
                read_into(g, "max_bins", gp.max_bins);
                read_into(g, "min_data_in_leaf", gp.min_data_in_leaf);
                read_into(g, "feature_fraction", gp.feature_fraction);
                read_into(g, "bagging_fraction", gp.bagging_fraction);
            }
        }
        if (doc.contains("steering")) {
            const ojson& s = doc["steering"];
            reject_unknown(s,
                           {"language", "source_space", "components", "top_components", "features",
                            "nmf_iterations", "emotions", "coeffs", "bundle"},
                           "steering");
            if (s.contains("language")) c.steering.language = parse_language(s["language"].get<std::string>());
            if (s.contains("source_space")) {
                c.steering.source_space = parse_language(s["source_space"].get<std::string>());
            }
            read_into(s, "components", c.steering.components);
            read_into(s, "top_components", c.steering.top_components);
            read_into(s, "features", c.steering.features);
            read_into(s, "nmf_iterations", c.steering.nmf_iterations);
            read_into(s, "emotions", c.steering.emotions);
            read_into(s, "coeffs", c.steering.coeffs);
            read_path(s, "bundle", c.steering.bundle);
        }
        if (doc.contains("eval")) {
            const ojson& e = doc["eval"];
            reject_unknown(e, {"group_by", "n_perm"}, "eval");
            read_into(e, "group_by", c.eval.group_by);
            read_into(e, "n_perm", c.eval.n_perm);
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Format, std::string("config: ") + e.what());
    }
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    if (!fs::is_regular_file(path)) fail(ErrorCode::Io, "config not found: " + path.string());
    return parse_config(read_file(path), fs::absolute(path).parent_path());
}

std::string config_json(const PipelineConfig& c) {
    // Only settings that can change results; out_dir and threads are excluded.
    ojson doc;
    doc["seed"] = c.seed;
    doc["sae"] = c.sae.generic_string();
    doc["activations"] = c.activations.generic_string();
    ojson assoc = ojson::object();
    for (const auto& [lang, p] : c.association) assoc[lang_code(lang)] = p.generic_string();
    doc["association"] = std::move(assoc);
    ojson lex = ojson::object();
    for (const auto& [lang, p] : c.lexicon) lex[lang_code(lang)] = p.generic_string();
    doc["lexicon"] = std::move(lex);
    doc["pairs"] = c.pairs.generic_string();
    doc["scores"] = c.scores.generic_string();
    doc["states"] = c.states.generic_string();
    doc["languages"] = languages_json(c.languages);
    doc["concept_size"] = c.concept_size;
    doc["validate"] = {{"n_perm", c.validate.n_perm},
                       {"n_perm_logreg", c.validate.n_perm_logreg},
                       {"logreg",
                        {{"folds", c.validate.logreg.folds},
                         {"l2", c.validate.logreg.l2},
                         {"iterations", c.validate.logreg.iterations}}}};
    const EmbeddingConfig& e = c.embed.config;
    doc["embed"] = {{"steps", e.steps},
                    {"batch_size", e.batch_size},
                    {"learning_rate", e.learning_rate},
                    {"temperature", e.temperature},
                    {"trace_interval", e.trace_interval},
                    {"languages", languages_json(c.embed.languages)}};
    const ExperimentOptions& p = c.predict.options;
    ojson targets = ojson::array();
    for (AffectTarget t : c.predict.targets) targets.push_back(to_string(t));
    doc["predict"] = {{"folds", p.folds},
                      {"seeds", p.seeds},
                      {"n_perm", p.n_perm},
                      {"null_quantile", p.null_quantile},
                      {"targets", std::move(targets)},
                      {"gbm",
                       {{"learning_rate", p.gbm.learning_rate},
                        {"num_leaves", p.gbm.num_leaves},
                        {"rounds", p.gbm.rounds},
                        {"max_bins", p.gbm.max_bins},
                        {"min_data_in_leaf", p.gbm.min_data_in_leaf},
                        {"feature_fraction", p.gbm.feature_fraction},
                        {"bagging_fraction", p.gbm.bagging_fraction}}}};
    const SteeringParams& s = c.steering;
    doc["steering"] = {{"language", lang_code(s.language)},
                       {"source_space", lang_code(s.source_space)},
                       {"components", s.components},
                       {"top_components", s.top_components},
                       {"features", s.features},
                       {"nmf_iterations", s.nmf_iterations},
                       {"emotions", s.emotions},
                       {"coeffs", s.coeffs},
                       {"bundle", s.bundle.generic_string()}};
    doc["eval"] = {{"group_by", c.eval.group_by}, {"n_perm", c.eval.n_perm}};
    return doc.dump();
}

std::string config_sha256(const PipelineConfig& config) {
    const std::string text = config_json(config);
    return sha256_hex(std::as_bytes(std::span(text.data(), text.size())));
}

void validate_config(const PipelineConfig& c, std::string_view command) {
    require_range(!c.languages.empty(), "languages must not be empty");
    require_range(unique_sorted(c.languages).size() == c.languages.size(), "languages must be unique");
    require_range(c.concept_size >= 1 && c.concept_size <= kDefaultConceptSize, "concept_size must be in [1, 10]");
    require_range(c.validate.n_perm >= 1, "validate.n_perm must be >= 1");
    require_range(c.validate.logreg.folds >= 2, "validate.logreg.folds must be >= 2");
    require_range(c.validate.logreg.l2 >= 0.0 && std::isfinite(c.validate.logreg.l2), "validate.logreg.l2 must be >= 0");
    require_range(c.validate.logreg.iterations >= 1, "validate.logreg.iterations must be >= 1");
    require_range(c.embed.config.steps >= 1, "embed.steps must be >= 1");
    require_range(c.embed.config.batch_size >= 2, "embed.batch_size must be >= 2");
    require_range(c.embed.config.learning_rate > 0.0, "embed.learning_rate must be > 0");
    require_range(c.embed.config.temperature > 0.0, "embed.temperature must be > 0");
    require_range(c.embed.config.trace_interval >= 1, "embed.trace_interval must be >= 1");
    const ExperimentOptions& p = c.predict.options;
    require_range(p.folds >= 2, "predict.folds must be >= 2");
    require_range(p.seeds >= 1, "predict.seeds must be >= 1");
    require_range(p.n_perm >= 1, "predict.n_perm must be >= 1");
    require_range(p.null_quantile > 0.0 && p.null_quantile < 1.0, "predict.null_quantile must be in (0, 1)");
    require_range(!c.predict.targets.empty(), "predict.targets must not be empty");
    require_range(p.gbm.rounds >= 1, "predict.gbm.rounds must be >= 1");
    require_range(c.steering.features >= 1, "steering.features must be >= 1");
    require_range(c.steering.top_components >= 1, "steering.top_components must be >= 1");
    require_range(c.steering.nmf_iterations >= 1, "steering.nmf_iterations must be >= 1");
    require_range(!c.steering.coeffs.empty(), "steering.coeffs must not be empty");
    for (double k : c.steering.coeffs) require_range(std::isfinite(k), "steering.coeffs must be finite");
    for (const auto& e : c.steering.emotions) {
        if (!find_emotion(e)) fail(ErrorCode::InvalidArgument, "config: unknown emotion '" + e + "'");
    }
    require_range(c.eval.group_by == "cue_word" || c.eval.group_by == "sentence_id",
                  "eval.group_by must be cue_word or sentence_id");
    require_range(c.eval.n_perm >= 1, "eval.n_perm must be >= 1");

    auto need_langs = [&](std::span<const Language> langs, bool lexicon) {
        for (Language l : langs) {
            if (lexicon) {
                const auto it = c.lexicon.find(l);
                if (it == c.lexicon.end()) fail(ErrorCode::InvalidArgument, "config: no lexicon for " + lang_code(l));
                require_file(c.resolve(it->second), "lexicon_" + lang_code(l));
                require_file(lexicon_sidecar_path(c.resolve(it->second)), "lexicon_" + lang_code(l) + " sidecar");
            }
        }
    };
    const bool uses_corpus = command != "apply-steering" && command != "eval-steering";
    if (command != "eval-steering") require_file(c.resolve(c.sae), "sae");
    if (uses_corpus) require_file(c.resolve(c.activations), "activations");
    if (command == "build-space") {
        for (Language l : c.languages) {
            const auto it = c.association.find(l);
            if (it == c.association.end()) {
                fail(ErrorCode::InvalidArgument, "config: no association norms for " + lang_code(l));
            }
            require_file(c.resolve(it->second), "association_" + lang_code(l));
        }
    } else if (command == "embed") {
        need_langs(c.embed.languages, true);
    } else if (command == "predict") {
        need_langs(c.languages, true);
    } else if (command == "predict-cross") {
        const std::array<Language, 2> both{Language::En, Language::Zh};
        need_langs(both, true);
        require_file(c.resolve(c.pairs), "pairs");
    } else if (command == "apply-steering") {
        require_file(c.resolve(c.states), "states");
        if (!c.steering.bundle.empty()) require_file(c.resolve(c.steering.bundle), "bundle");
    } else if (command == "eval-steering") {
        require_file(c.resolve(c.scores), "scores");
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_build_space(const PipelineConfig& config) {
    validate_config(config, "build-space");
    Run run(config, "build-space");
    run.decision("concepts:top-k-cosine-codepoint-ties");
    run.decision("space:union-of-supports");
    const Corpus corpus = load_corpus(config, config.languages);

    std::map<Language, EmotionSpace> spaces;
    ojson summary = ojson::object();
    for (Language lang : config.languages) {
        const AssociationGraph graph = load_association_graph(config.resolve(config.association.at(lang)));
        const WordVectors& vectors = corpus.of(lang);
        const auto outcomes = build_all_concept_sets(graph, vectors, lang, config.concept_size);
        std::vector<ConceptSet> sets;
        std::vector<EmotionSubspace> subspaces;
        for (const auto& o : outcomes) {
            if (!o.concept_set) continue;
            sets.push_back(*o.concept_set);
            subspaces.push_back(build_subspace(*o.concept_set, vectors));
        }
        EmotionSpace space = build_space(std::move(subspaces));
        space.lang = lang;
        space.width = corpus.width;

        Csv concepts({"emotion", "rank", "word", "similarity"});
        for (const ConceptSet& cs : sets) {
            for (std::size_t i = 0; i < cs.words.size(); ++i) {
                concepts.row(std::string(cs.emotion.key), i + 1, cs.words[i].word, cs.words[i].similarity);
            }
        }
        run.write_json(space_file(lang), space_to_json(space, sets, outcomes));
        run.write("concepts_" + lang_code(lang) + ".csv", concepts.str());
        summary[lang_code(lang)] = {{"subspaces", space.subspaces.size()},
                                    {"missing", outcomes.size() - space.subspaces.size()},
                                    {"union_size", space.union_indices.size()}};
        spaces.emplace(lang, std::move(space));
    }

    // Per-emotion subspace sizes, one column per language.
    std::ostringstream sizes;
    sizes << "emotion";
    for (Language lang : config.languages) sizes << ',' << lang_code(lang);
    sizes << '\n';
    for (const EmotionLabel& e : kEmotions) {
        sizes << e.key;
        for (Language lang : config.languages) {
            sizes << ',';
            for (const auto& s : spaces.at(lang).subspaces) {
                if (s.emotion.index == e.index) sizes << s.feature_indices.size();
            }
        }
        sizes << '\n';
    }
    sizes << "whole_space";
    for (Language lang : config.languages) sizes << ',' << spaces.at(lang).union_indices.size();
    sizes << '\n';
    run.write("space_sizes.csv", sizes.str());

    if (spaces.count(Language::En) && spaces.count(Language::Zh)) {
        const FeatureSetPartition p = partition_feature_sets(spaces.at(Language::En), spaces.at(Language::Zh));
        ojson doc;
        doc["width"] = p.width;
        doc["intersection_size"] = p.intersection.size();
        doc["union_size"] = p.set_union.size();
        doc["extra_size"] = p.extra.size();
        doc["intersection"] = index_array(p.intersection);
        doc["union"] = index_array(p.set_union);
        doc["extra"] = index_array(p.extra);
        run.write_json("partition.json", doc);
        summary["partition"] = {{"intersection", p.intersection.size()},
                                {"union", p.set_union.size()},
                                {"extra", p.extra.size()}};
    }
    run.finish(std::move(summary));
}

void cmd_validate_space(const PipelineConfig& config) {
    validate_config(config, "validate-space");
    Run run(config, "validate-space");
    run.decision("space:euclidean-whole-space-points");
    run.decision("space:logreg-nesterov-l2");
    run.decision("stats:perm-p-(b+1)/(n+1)");
    const Corpus corpus = load_corpus(config, config.languages);

    constexpr std::array<ClusterMetric, 3> metrics{ClusterMetric::DaviesBouldin, ClusterMetric::CalinskiHarabasz,
                                                   ClusterMetric::LogRegAccuracy};
    Csv csv({"lang", "metric", "direction", "points", "clusters", "dims", "observed", "null_mean", "null_sd",
             "n_perm", "extreme_count", "p", "seed"});
    ojson doc = ojson::array();
    ojson summary = ojson::object();
    for (Language lang : config.languages) {
        const SpaceManifest m = load_space(config, lang);
        const ClusterData data = cluster_data(m, corpus.of(lang));
        LogRegOptions logreg = config.validate.logreg;
        logreg.seed = run.seed(kLogRegStream, lang_index(lang));
        for (std::size_t k = 0; k < metrics.size(); ++k) {
            const ClusterMetric metric = metrics[k];
            const std::size_t n_perm = metric == ClusterMetric::LogRegAccuracy && config.validate.n_perm_logreg > 0
                                           ? config.validate.n_perm_logreg
                                           : config.validate.n_perm;
            const std::uint64_t seed = run.seed(kValidateStream, lang_index(lang) * metrics.size() + k);
            const auto res = cluster_permutation_test(metric, data.points, data.labels, n_perm, seed, logreg);
            const std::string dir = better_direction(metric) == stats::Tail::Less ? "lower" : "higher";
            csv.row(lang_code(lang), std::string(to_string(metric)), dir, data.points.rows(), m.space.subspaces.size(),
                    data.points.cols(), res.observed, res.null_mean, res.null_sd, res.n_perm, res.extreme_count,
                    res.p, seed);
            doc.push_back({{"lang", lang_code(lang)},
                           {"metric", to_string(metric)},
                           {"better", dir},
                           {"points", data.points.rows()},
                           {"clusters", m.space.subspaces.size()},
                           {"dims", data.points.cols()},
                           {"observed", num(res.observed)},
                           {"null_mean", num(res.null_mean)},
                           {"null_sd", num(res.null_sd)},
                           {"n_perm", res.n_perm},
                           {"extreme_count", res.extreme_count},
                           {"p", res.p},
                           {"p_floor", 1.0 / static_cast<double>(res.n_perm + 1)},
                           {"seed", seed}});
            summary[lang_code(lang) + "/" + std::string(to_string(metric))] = res.p;
        }
    }
    run.write("cluster_validity.csv", csv.str());
    ojson wrapper;
    wrapper["logreg"] = {{"folds", config.validate.logreg.folds},
                         {"l2", config.validate.logreg.l2},
                         {"iterations", config.validate.logreg.iterations}};
    wrapper["results"] = std::move(doc);
    run.write_json("cluster_validity.json", wrapper);
    run.finish(std::move(summary));
}

void cmd_embed(const PipelineConfig& config) {
    validate_config(config, "embed");
    Run run(config, "embed");
    run.decision("latent:linear-infonce-substitute");
    run.decision("stats:bonferroni-6");
    const Corpus corpus = load_corpus(config, config.embed.languages);
    ojson summary = ojson::object();
    for (Language lang : config.embed.languages) {
        const SpaceManifest m = load_space(config, lang);
        const ClusterData data = cluster_data(m, corpus.of(lang));
        EmbeddingConfig ec = config.embed.config;
        ec.seed = run.seed(kEmbedStream, lang_index(lang));
        const EmbeddingModel model = train_embedding(data.points, data.labels, ec);
        const Embedding emb = embed(model, data.points);
        const AffectiveLexicon lexicon = load_normalized_lexicon(config, lang);
        const AxisCorrelationReport corr = axis_affect_correlation(emb.points, lexicon, data.words);

        Csv points({"word", "emotion", "dim1", "dim2", "dim3", "valence", "arousal"});
        for (std::size_t i = 0; i < data.words.size(); ++i) {
            const LexiconEntry* entry = lexicon.find(data.words[i]);
            const std::string key(kEmotions[static_cast<std::size_t>(data.labels[i] - 1)].key);
            if (entry) {
                points.row(data.words[i], key, emb.points(i, 0), emb.points(i, 1), emb.points(i, 2),
                           entry->valence_raw, entry->arousal_raw);
            } else {
                points.row(data.words[i], key, emb.points(i, 0), emb.points(i, 1), emb.points(i, 2), "", "");
            }
        }
        Csv axes({"dimension", "target", "r", "p", "p_bonferroni", "matched_words"});
        ojson jaxes = ojson::array();
        for (const AxisCorrelation& a : corr.entries) {
            axes.row(a.dimension + 1, std::string(to_string(a.target)), a.r, a.p, a.p_bonferroni, corr.matched_words);
            jaxes.push_back({{"dimension", a.dimension + 1},
                             {"target", to_string(a.target)},
                             {"r", num(a.r)},
                             {"p", num(a.p)},
                             {"p_bonferroni", num(a.p_bonferroni)}});
        }
        ojson doc;
        doc["lang"] = lang_code(lang);
        doc["encoder"] = "linear projection + L2 normalization, supervised InfoNCE";
        doc["config"] = {{"steps", ec.steps},
                         {"batch_size", ec.batch_size},
                         {"learning_rate", ec.learning_rate},
                         {"temperature", ec.temperature},
                         {"seed", ec.seed}};
        doc["input_dim"] = model.input_dim();
        doc["points"] = data.words.size();
        doc["zero_rows"] = emb.zero_rows;
        ojson trace = ojson::array();
        for (double v : model.loss_trace) trace.push_back(num(v));
        doc["loss_trace"] = std::move(trace);
        doc["matched_words"] = corr.matched_words;
        doc["axis_correlation"] = std::move(jaxes);
        ojson proj = ojson::array();
        for (std::size_t r = 0; r < model.projection.rows(); ++r) {
            const auto row = model.projection.row(r);
            proj.push_back(std::vector<double>(row.begin(), row.end()));
        }
        doc["projection"] = std::move(proj);

        run.write("embedding_" + lang_code(lang) + ".csv", points.str());
        run.write("axis_correlation_" + lang_code(lang) + ".csv", axes.str());
        run.write_json("embedding_" + lang_code(lang) + ".json", doc);
        summary[lang_code(lang)] = {{"final_loss", model.loss_trace.empty() ? ojson(nullptr) : num(model.loss_trace.back())},
                                    {"matched_words", corr.matched_words}};
    }
    run.finish(std::move(summary));
}

void cmd_predict(const PipelineConfig& config) {
    validate_config(config, "predict");
    Run run(config, "predict");
    predict_decisions(run);
    const Corpus corpus = load_corpus(config, config.languages);
    const FeatureSetPartition partition = load_partition(config);
    ojson summary = ojson::object();
    for (Language lang : config.languages) {
        const AffectiveLexicon lexicon = load_normalized_lexicon(config, lang);
        ExperimentOptions options = config.predict.options;
        options.seed = run.seed(kPredictStream, lang_index(lang));
        const ExperimentReport report =
            run_within_language(lexicon, corpus.of(lang), partition, config.predict.targets, options);
        write_experiment(run, "predict_" + lang_code(lang), report);
        summary[report.direction] = experiment_summary(report);
    }
    run.finish(std::move(summary));
}

void cmd_predict_cross(const PipelineConfig& config) {
    validate_config(config, "predict-cross");
    Run run(config, "predict-cross");
    predict_decisions(run);
    const std::array<Language, 2> both{Language::En, Language::Zh};
    const Corpus corpus = load_corpus(config, both);
    const FeatureSetPartition partition = load_partition(config);
    const auto pairs = load_word_pairs(config.resolve(config.pairs));
    std::vector<std::pair<std::string, std::string>> swapped;
    for (const auto& [a, b] : pairs) swapped.emplace_back(b, a);
    const AffectiveLexicon en = load_normalized_lexicon(config, Language::En);
    const AffectiveLexicon zh = load_normalized_lexicon(config, Language::Zh);

    ojson summary = ojson::object();
    for (std::size_t dir = 0; dir < 2; ++dir) {
        ExperimentOptions options = config.predict.options;
        options.seed = run.seed(kCrossStream, dir);
        const ExperimentReport report =
            dir == 0 ? run_cross_language(en, corpus.of(Language::En), zh, corpus.of(Language::Zh), pairs, partition,
                                          config.predict.targets, options)
                     : run_cross_language(zh, corpus.of(Language::Zh), en, corpus.of(Language::En), swapped,
                                          partition, config.predict.targets, options);
        write_experiment(run, dir == 0 ? "predict_en-zh" : "predict_zh-en", report);
        summary[report.direction] = experiment_summary(report);
    }
    run.finish(std::move(summary));
}

void cmd_compile_steering(const PipelineConfig& config) {
    validate_config(config, "compile-steering");
    Run run(config, "compile-steering");
    run.decision("steer:C=min(k,10)");
    run.decision(std::string("steer:") + std::string(kRankingRule));
    run.decision("steer:unweighted-decoder-sum");
    const SteeringParams& sp = config.steering;
    const std::array<Language, 1> source{sp.source_space};
    const Corpus corpus = load_corpus(config, source);
    const SaeModel sae = load_sae(config.resolve(config.sae));
    if (sae.width() != corpus.width) fail(ErrorCode::Shape, "SAE width changed between loads");
    const SpaceManifest m = load_space(config, sp.source_space);

    std::vector<const ConceptSet*> selected;
    if (sp.emotions.empty()) {
        for (const auto& cs : m.concept_sets) selected.push_back(&cs);
    } else {
        for (const auto& name : sp.emotions) {
            const auto e = find_emotion(name);
            const auto it = std::find_if(m.concept_sets.begin(), m.concept_sets.end(),
                                         [&](const ConceptSet& cs) { return cs.emotion.index == e->index; });
            if (it == m.concept_sets.end()) {
                fail(ErrorCode::InsufficientData, "emotion '" + name + "' has no concept set in the " +
                                                      lang_code(sp.source_space) + " space");
            }
            selected.push_back(&*it);
        }
    }
    if (selected.empty()) fail(ErrorCode::InsufficientData, "no emotion has a concept set to compile");

    std::vector<std::uint64_t> seeds;
    for (const ConceptSet* cs : selected) seeds.push_back(run.seed(kSteerStream, static_cast<std::uint64_t>(cs->emotion.index)));
    std::vector<SteeringBundle> bundles(selected.size());
    parallel_for(selected.size(), [&](std::size_t i) {
        const ConceptSet& cs = *selected[i];
        SteeringCompileOptions opt;
        const std::size_t k = std::min(cs.words.size(), kDefaultConceptSize);
        opt.components = sp.components > 0 ? sp.components : std::min<std::size_t>(k, 10);
        opt.top_components = std::min(sp.top_components, opt.components);
        opt.features = sp.features;
        opt.nmf_iterations = sp.nmf_iterations;
        opt.seed = seeds[i];
        try {
            SteeringVector v = compile_emotion_steering(sae, cs, corpus.of(sp.source_space), opt);
            v.language = sp.language;
            bundles[i] = to_bundle(v, sae);
        } catch (const Error& e) {
            throw Error(e.code(), std::string(cs.emotion.key) + ": " + e.what());
        }
    });

    Csv csv({"emotion", "language", "source_space", "concept_words", "components", "top_components", "features",
             "nmf_iterations", "nmf_error", "nmf_seed", "bundle"});
    ojson summary = ojson::object();
    for (const SteeringBundle& b : bundles) {
        const fs::path rel = fs::path("steering") / (b.emotion + ".json");
        fs::create_directories(config.output("steering"));
        write_steering_bundle(config.output(rel), b);
        run.record(rel);
        const SteeringProvenance& p = b.provenance;
        csv.row(b.emotion, lang_code(b.language), p.source_space, p.concept_words.size(), p.components,
                p.top_components, p.features, p.nmf_iterations, p.nmf_error, p.nmf_seed, rel.generic_string());
        summary[b.emotion] = {{"features", p.features}, {"nmf_error", num(p.nmf_error)}};
    }
    run.write("steering_summary.csv", csv.str());
    run.finish(std::move(summary));
}

void cmd_apply_steering(const PipelineConfig& config) {
    validate_config(config, "apply-steering");
    Run run(config, "apply-steering");
    run.decision("steer:broadcast-add-double-then-float");
    const SaeModel sae = load_sae(config.resolve(config.sae));
    const MatrixF states = load_matrix(config.resolve(config.states));

    std::vector<fs::path> bundle_paths;
    if (!config.steering.bundle.empty()) {
        bundle_paths.push_back(config.resolve(config.steering.bundle));
    } else {
        const fs::path dir = config.output("steering");
        if (!fs::is_directory(dir)) {
            fail(ErrorCode::Io, "missing upstream artifact " + dir.string() + " (run compile-steering first)");
        }
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.is_regular_file() && entry.path().extension() == ".json") bundle_paths.push_back(entry.path());
        }
        std::sort(bundle_paths.begin(), bundle_paths.end());
        if (bundle_paths.empty()) fail(ErrorCode::Io, "no steering bundles in " + dir.string());
    }
    std::vector<std::string> wanted;
    for (const auto& name : config.steering.emotions) wanted.emplace_back(find_emotion(name)->key);

    Csv csv({"emotion", "coeff", "rows", "cols", "max_abs_delta", "output", "sha256"});
    ojson summary = ojson::object();
    fs::create_directories(config.output("steered"));
    for (const fs::path& path : bundle_paths) {
        const SteeringBundle bundle = load_steering_bundle(path);
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), bundle.emotion) == wanted.end()) continue;
        verify_bundle(bundle, sae);
        const SteeringVector vec = from_bundle(bundle);
        for (double coeff : config.steering.coeffs) {
            const MatrixF out = apply_steering(states, vec, coeff);
            double delta = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                delta = std::max(delta, std::abs(static_cast<double>(out.data()[i]) - states.data()[i]));
            }
            const fs::path rel = fs::path("steered") / (bundle.emotion + "_c" + fmt(coeff) + ".json");
            write_matrix(config.output(rel), out);
            run.record(rel);
            run.record(fs::path(rel).replace_extension(".bin"));
            csv.row(bundle.emotion, coeff, out.rows(), out.cols(), delta, rel.generic_string(),
                    read_matrix_manifest(config.output(rel)).sha256);
        }
        summary[bundle.emotion] = config.steering.coeffs.size();
    }
    if (summary.empty()) fail(ErrorCode::InvalidArgument, "no bundle matched the requested emotions");
    run.write("apply_summary.csv", csv.str());
    run.finish(std::move(summary));
}

void cmd_eval_steering(const PipelineConfig& config) {
    validate_config(config, "eval-steering");
    Run run(config, "eval-steering");
    run.decision("stats:lmm-ml-profiled-random-intercept");
    run.decision("stats:perm-shuffle-factor-greater");
    run.decision("stats:perm-p-(b+1)/(n+1)");
    const std::vector<ScoreRow> rows = load_score_table(config.resolve(config.scores));
    if (rows.empty()) fail(ErrorCode::InsufficientData, "score table is empty");

    std::set<std::string> targets;
    for (const auto& r : rows) targets.insert(r.target_emotion);
    const bool by_cue = config.eval.group_by == "cue_word";

    Csv csv({"target_emotion", "observations", "groups", "beta0", "beta1", "sigma_u2", "sigma_e2", "log_likelihood",
             "boundary", "n_perm", "null_mean", "null_sd", "extreme_count", "p", "seed"});
    Csv means({"target_emotion", "steering_factor", "mean_score", "n"});
    ojson doc = ojson::array();
    ojson summary = ojson::object();
    for (const std::string& target : targets) {
        const auto col = std::find(kScoreColumns.begin(), kScoreColumns.end(), target);
        if (col == kScoreColumns.end()) {
            fail(ErrorCode::Format, "target emotion '" + target + "' is not a classifier score column");
        }
        const auto c = static_cast<std::size_t>(col - kScoreColumns.begin());
        std::vector<double> y, x;
        std::vector<std::string> groups;
        std::map<double, std::pair<double, std::size_t>> by_factor;
        for (const auto& r : rows) {
            if (r.target_emotion != target) continue;
            y.push_back(r.scores[c]);
            x.push_back(r.steering_factor);
            groups.push_back(by_cue ? r.cue_word : r.sentence_id);
            auto& acc = by_factor[r.steering_factor];
            acc.first += r.scores[c];
            ++acc.second;
        }
        const stats::LmmData data = stats::make_lmm_data(y, x, groups);
        const stats::LmmFit fit = stats::fit_lmm_random_intercept(data);
        stats::PermutationOptions po;
        po.n_perm = config.eval.n_perm;
        po.seed = run.seed(kEvalStream, c);
        po.tail = stats::Tail::Greater;
        po.keep_null = false;
        const auto perm = stats::permutation_test(
            data, [](const stats::LmmData& d) { return stats::fit_lmm_random_intercept(d).slope; },
            [](const stats::LmmData& d, Rng& rng) {
                stats::LmmData copy = d;
                rng.shuffle(std::span<double>(copy.x));
                return copy;
            },
            po);
        csv.row(target, fit.observations, fit.groups, fit.intercept, fit.slope, fit.sigma_u2, fit.sigma_e2,
                fit.log_likelihood, fit.boundary, perm.n_perm, perm.null_mean, perm.null_sd, perm.extreme_count,
                perm.p, po.seed);
        ojson jm = ojson::array();
        for (const auto& [factor, acc] : by_factor) {
            const double mean = acc.first / static_cast<double>(acc.second);
            means.row(target, factor, mean, acc.second);
            jm.push_back({{"steering_factor", factor}, {"mean_score", mean}, {"n", acc.second}});
        }
        doc.push_back({{"target_emotion", target},
                       {"group_by", config.eval.group_by},
                       {"observations", fit.observations},
                       {"groups", fit.groups},
                       {"beta0", num(fit.intercept)},
                       {"beta1", num(fit.slope)},
                       {"sigma_u2", num(fit.sigma_u2)},
                       {"sigma_e2", num(fit.sigma_e2)},
                       {"variance_ratio", num(fit.variance_ratio)},
                       {"log_likelihood", num(fit.log_likelihood)},
                       {"boundary", fit.boundary},
                       {"permutation",
                        {{"statistic", "beta1"},
                         {"tail", "greater"},
                         {"n_perm", perm.n_perm},
                         {"null_mean", num(perm.null_mean)},
                         {"null_sd", num(perm.null_sd)},
                         {"extreme_count", perm.extreme_count},
                         {"p", perm.p},
                         {"seed", po.seed}}},
                       {"factor_means", std::move(jm)}});
        summary[target] = {{"beta1", num(fit.slope)}, {"p", perm.p}};
    }
    run.write("steering_eval.csv", csv.str());
    run.write("steering_eval_means.csv", means.str());
    run.write_json("steering_eval.json", doc);
    run.finish(std::move(summary));
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace {

using Command = void (*)(const PipelineConfig&);

constexpr std::array<std::pair<std::string_view, Command>, 8> kCommands{{
    {"build-space", &cmd_build_space},
    {"validate-space", &cmd_validate_space},
    {"embed", &cmd_embed},
    {"predict", &cmd_predict},
    {"predict-cross", &cmd_predict_cross},
    {"compile-steering", &cmd_compile_steering},
    {"apply-steering", &cmd_apply_steering},
    {"eval-steering", &cmd_eval_steering},
}};

void write_error(const PipelineConfig& config, std::string_view command, std::string_view code,
                 std::string_view message) {
    try {
        const fs::path dir = config.resolve(config.out_dir);
        fs::create_directories(dir);
        ojson doc;
        doc["command"] = command;
        doc["code"] = code;
        doc["message"] = message;
        write_file_atomic(dir / "error.json", doc.dump(2) + "\n");
    } catch (...) {
        // The error report is best effort; the caller still sees the original failure.
    }
}

}  // namespace

void run_command(std::string_view command, const PipelineConfig& config) {
    const auto it = std::find_if(kCommands.begin(), kCommands.end(), [&](const auto& c) { return c.first == command; });
    if (it == kCommands.end()) fail(ErrorCode::InvalidArgument, "unknown command '" + std::string(command) + "'");
    set_thread_count(config.threads);
    try {
        it->second(config);
    } catch (const Error& e) {
        write_error(config, command, to_string(e.code()), e.what());
        throw;
    } catch (const std::exception& e) {
        write_error(config, command, "Internal", e.what());
        throw;
    }
}

namespace {

/// Flag values that override the config file when given.
struct Overrides {
    std::uint64_t seed = 0;
    std::string out_dir;
    unsigned threads = 0;
    std::vector<std::string> languages;
    std::size_t concept_size = 0;
    std::size_t n_perm = 0;
    std::size_t n_perm_logreg = 0;
    std::size_t steps = 0;
    std::size_t batch_size = 0;
    double learning_rate = 0.0;
    double temperature = 0.0;
    std::size_t folds = 0;
    std::size_t seeds = 0;
    std::size_t rounds = 0;
    std::size_t num_leaves = 0;
    std::vector<std::string> targets;
    std::string language;
    std::string source_space;
    std::size_t components = 0;
    std::size_t top_components = 0;
    std::size_t features = 0;
    std::size_t nmf_iterations = 0;
    std::vector<std::string> emotions;
    std::vector<double> coeffs;
    std::string bundle;
    std::string states;
    std::string scores;
    std::string group_by;
};

std::vector<Language> parse_languages(const std::vector<std::string>& codes) {
    std::vector<Language> out;
    for (const auto& c : codes) out.push_back(parse_language(c));
    return out;
}

fs::path absolute_from_cwd(const std::string& p) { return fs::absolute(fs::path(p)); }

template <class T>
struct is_vector : std::false_type {};
template <class T>
struct is_vector<std::vector<T>> : std::true_type {};

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"emospace: SAE-based computational emotion spaces"};
    app.set_version_flag("--version", std::string(kToolVersion));
    app.require_subcommand(1);

    std::string config_path;
    Overrides ov;
    std::map<std::string, CLI::Option*> flags;
    auto add = [&](CLI::App* sub, const std::string& name, auto& target, const std::string& help) {
        CLI::Option* opt = sub->add_option(name, target, help);
        // List flags take "a,b" as well as "a b".
        if constexpr (is_vector<std::decay_t<decltype(target)>>::value) opt->delimiter(',');
        flags[sub->get_name() + name] = opt;
    };

    for (const auto& [name, _] : kCommands) {
        CLI::App* sub = app.add_subcommand(std::string(name));
        sub->add_option("--config", config_path, "pipeline JSON config")->required()->check(CLI::ExistingFile);
        add(sub, "--seed", ov.seed, "global seed");
        add(sub, "--out-dir", ov.out_dir, "output directory");
        add(sub, "--threads", ov.threads, "worker threads (0 = all cores)");
        add(sub, "--languages", ov.languages, "language codes (en, zh)");
        if (name == "build-space") add(sub, "--concept-size", ov.concept_size, "concept-set size k");
        if (name == "validate-space") {
            add(sub, "--n-perm", ov.n_perm, "label shuffles per metric");
            add(sub, "--n-perm-logreg", ov.n_perm_logreg, "label shuffles for the logistic-regression metric");
        }
        if (name == "embed") {
            add(sub, "--steps", ov.steps, "training steps");
            add(sub, "--batch-size", ov.batch_size, "batch size");
            add(sub, "--learning-rate", ov.learning_rate, "SGD learning rate");
            add(sub, "--temperature", ov.temperature, "InfoNCE temperature");
        }
        if (name == "predict" || name == "predict-cross") {
            add(sub, "--folds", ov.folds, "cross-validation folds");
            add(sub, "--seeds", ov.seeds, "fold-assignment seeds");
            add(sub, "--rounds", ov.rounds, "boosting rounds");
            add(sub, "--num-leaves", ov.num_leaves, "leaves per tree");
            add(sub, "--learning-rate", ov.learning_rate, "boosting learning rate");
            add(sub, "--n-perm", ov.n_perm, "null shuffles per model");
            add(sub, "--targets", ov.targets, "valence and/or arousal");
        }
        if (name == "compile-steering") {
            add(sub, "--language", ov.language, "language the bundles are tagged for");
            add(sub, "--source-space", ov.source_space, "emotion space supplying the features");
            add(sub, "--components", ov.components, "NMF components C (0 = min(k, 10))");
            add(sub, "--top-components", ov.top_components, "top components M");
            add(sub, "--features", ov.features, "features F");
            add(sub, "--nmf-iterations", ov.nmf_iterations, "NMF iterations");
            add(sub, "--emotions", ov.emotions, "emotion keys to compile");
        }
        if (name == "apply-steering") {
            add(sub, "--coeffs", ov.coeffs, "steering factors");
            add(sub, "--bundle", ov.bundle, "single steering bundle");
            add(sub, "--states", ov.states, "hidden-state matrix manifest");
            add(sub, "--emotions", ov.emotions, "emotion keys to apply");
        }
        if (name == "eval-steering") {
            add(sub, "--scores", ov.scores, "classifier score table");
            add(sub, "--group-by", ov.group_by, "random-effect grouping: cue_word or sentence_id");
            add(sub, "--n-perm", ov.n_perm, "factor shuffles");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    auto given = [&](const std::string& flag) {
        const auto it = flags.find(command + flag);
        return it != flags.end() && it->second->count() > 0;
    };

    PipelineConfig config;
    bool loaded = false;
    try {
        config = load_config(config_path);
        loaded = true;
        if (given("--seed")) config.seed = ov.seed;
        if (given("--out-dir")) config.out_dir = absolute_from_cwd(ov.out_dir);
        if (given("--threads")) config.threads = ov.threads;
        if (given("--languages")) {
            config.languages = parse_languages(ov.languages);
            config.embed.languages = config.languages;
        }
        if (given("--concept-size")) config.concept_size = ov.concept_size;
        if (command == "validate-space" && given("--n-perm")) config.validate.n_perm = ov.n_perm;
        if (given("--n-perm-logreg")) config.validate.n_perm_logreg = ov.n_perm_logreg;
        if (given("--steps")) config.embed.config.steps = ov.steps;
        if (given("--batch-size")) config.embed.config.batch_size = ov.batch_size;
        if (given("--temperature")) config.embed.config.temperature = ov.temperature;
        if (given("--learning-rate")) {
            if (command == "embed") config.embed.config.learning_rate = ov.learning_rate;
            else config.predict.options.gbm.learning_rate = ov.learning_rate;
        }
        if (given("--folds")) config.predict.options.folds = ov.folds;
        if (given("--seeds")) config.predict.options.seeds = ov.seeds;
        if (given("--rounds")) config.predict.options.gbm.rounds = ov.rounds;
        if (given("--num-leaves")) config.predict.options.gbm.num_leaves = ov.num_leaves;
        if ((command == "predict" || command == "predict-cross") && given("--n-perm")) {
            config.predict.options.n_perm = ov.n_perm;
        }
        if (given("--targets")) {
            config.predict.targets.clear();
            for (const auto& t : ov.targets) config.predict.targets.push_back(parse_affect_target(t));
        }
        if (given("--language")) config.steering.language = parse_language(ov.language);
        if (given("--source-space")) config.steering.source_space = parse_language(ov.source_space);
        if (given("--components")) config.steering.components = ov.components;
        if (given("--top-components")) config.steering.top_components = ov.top_components;
        if (given("--features")) config.steering.features = ov.features;
        if (given("--nmf-iterations")) config.steering.nmf_iterations = ov.nmf_iterations;
        if (given("--emotions")) config.steering.emotions = ov.emotions;
        if (given("--coeffs")) config.steering.coeffs = ov.coeffs;
        if (given("--bundle")) config.steering.bundle = absolute_from_cwd(ov.bundle);
        if (given("--states")) config.states = absolute_from_cwd(ov.states);
        if (given("--scores")) config.scores = absolute_from_cwd(ov.scores);
        if (given("--group-by")) config.eval.group_by = ov.group_by;
        if (command == "eval-steering" && given("--n-perm")) config.eval.n_perm = ov.n_perm;
    } catch (const Error& e) {
        std::cerr << "emospace " << command << ": " << to_string(e.code()) << ": " << e.what() << '\n';
        if (loaded) write_error(config, command, to_string(e.code()), e.what());
        return 1;
    }

    try {
        run_command(command, config);
    } catch (const Error& e) {
        std::cerr << "emospace " << command << ": " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "emospace " << command << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace emospace::cli

#include "emospace_tools/toy.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "emospace/emotions.hpp"
#include "emospace/error.hpp"
#include "emospace/random.hpp"

namespace emospace::toy {

namespace {

namespace fs = std::filesystem;

constexpr std::uint64_t kGeometryStream = 1;
constexpr std::uint64_t kWordStream = 2;
constexpr std::uint64_t kGraphStream = 3;
constexpr std::uint64_t kScoreStream = 4;
constexpr std::uint64_t kPromptStream = 5;

std::vector<double> unit_vector(Rng& rng, std::size_t dims) {
    std::vector<double> v(dims);
    double norm = 0.0;
    do {
        norm = 0.0;
        for (double& x : v) {
            x = rng.normal();
            norm += x * x;
        }
    } while (norm < 1e-12);
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

double dot(const std::vector<double>& a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

std::string numbered(std::string_view stem, std::size_t i, int digits) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%0*zu", digits, i);
    return std::string(stem) + buf;
}

/// Everything about one word that the generator needs before encoding.
struct WordState {
    std::string word;
    std::vector<double> hidden;
};

struct Geometry {
    std::size_t meaning_dims = 0;
    std::size_t en_marker = 0;
    std::size_t zh_marker = 0;
    std::vector<std::vector<double>> centroids;  // per emotion, meaning dims
    std::vector<double> valence_dir;
    std::vector<double> arousal_dir;
};

SaeModel make_sae(const ToyConfig& c, const Geometry& g, Rng& rng, std::vector<std::uint32_t>& nuisance) {
    const std::size_t d = c.hidden_dim;
    const std::size_t l = c.width;
    const std::size_t n_nuisance = l * 3 / 32;
    const std::size_t n_lang = l / 16;
    const std::size_t n_semantic = l - n_nuisance - 2 * n_lang;

    SaeModel sae;
    sae.model_id = "toy-llm/sae-" + std::to_string(d) + "x" + std::to_string(l);
    sae.layer_index = 9;
    sae.encoder = MatrixF(l, d);
    sae.encoder_bias.assign(l, 0.0f);
    sae.threshold.assign(l, 0.0f);
    sae.decoder = MatrixF(d, l);

    for (std::size_t f = 0; f < l; ++f) {
        std::vector<double> row(d, 0.0);
        double theta = 0.8;
        if (f < n_semantic) {
            const auto u = unit_vector(rng, g.meaning_dims);
            std::copy(u.begin(), u.end(), row.begin());
        } else if (f < n_semantic + 2 * n_lang) {
            const auto u = unit_vector(rng, g.meaning_dims);
            for (std::size_t i = 0; i < g.meaning_dims; ++i) row[i] = 0.3 * u[i];
            row[f < n_semantic + n_lang ? g.en_marker : g.zh_marker] = 0.95;
            theta = 1.0;
        } else {
            const auto u = unit_vector(rng, 2);
            row[d - 2] = u[0];
            row[d - 1] = u[1];
            nuisance.push_back(static_cast<std::uint32_t>(f));
        }
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < d; ++i) {
            sae.encoder(f, i) = static_cast<float>(row[i]);
            sae.decoder(i, f) = static_cast<float>(row[i] / norm);
        }
        sae.threshold[f] = static_cast<float>(theta);
    }
    sae.validate();
    return sae;
}

double rating(const std::vector<double>& dir, std::span<const double> hidden, double noise, Rng& rng) {
    const double v = 0.5 + 0.15 * dot(dir, hidden) + noise * rng.normal();
    return std::clamp(v, 0.0, 1.0);
}

RatingBounds bounds_for(Language lang) {
    // Scales of the English and Chinese rating norms.
    return lang == Language::En ? RatingBounds{1.0, 9.0, 1.0, 9.0} : RatingBounds{-3.0, 3.0, 0.0, 4.0};
}

void add_word(ToyLanguage& out, const SaeModel& sae, const Geometry& g, const WordState& w, double noise,
              Rng& rng) {
    std::vector<float> h(w.hidden.begin(), w.hidden.end());
    out.records.push_back({w.word, out.lang, encode(sae, h)});
    const RatingBounds& b = out.lexicon.bounds;
    const std::span<const double> meaning(w.hidden.data(), g.meaning_dims);
    LexiconEntry e;
    e.valence_raw = b.valence_min + (b.valence_max - b.valence_min) * rating(g.valence_dir, meaning, noise, rng);
    e.arousal_raw = b.arousal_min + (b.arousal_max - b.arousal_min) * rating(g.arousal_dir, meaning, noise, rng);
    out.lexicon.entries.emplace(w.word, e);
}

}  // namespace

ToyFixture make_toy_fixture(const ToyConfig& config) {
    if (config.hidden_dim < 8) fail(ErrorCode::InvalidArgument, "toy fixture needs hidden_dim >= 8");
    if (config.width < 64 || config.width <= config.hidden_dim) {
        fail(ErrorCode::InvalidArgument, "toy fixture needs width >= 64 and width > hidden_dim");
    }
    if (config.related_words < 10) fail(ErrorCode::InvalidArgument, "toy fixture needs >= 10 related words");

    ToyFixture fx;
    fx.config = config;
    const std::size_t d = config.hidden_dim;

    Geometry g;
    g.meaning_dims = d - 4;
    g.en_marker = d - 4;
    g.zh_marker = d - 3;
    Rng geo(derive_seed(config.seed, kGeometryStream, 0));
    for (std::size_t e = 0; e < kEmotions.size(); ++e) {
        auto c = unit_vector(geo, g.meaning_dims);
        for (double& v : c) v *= config.centroid_radius;
        g.centroids.push_back(std::move(c));
    }
    g.valence_dir = unit_vector(geo, g.meaning_dims);
    g.arousal_dir = unit_vector(geo, g.meaning_dims);
    fx.sae = make_sae(config, g, geo, fx.nuisance_features);

    // Meaning coordinates shared by translation-equivalent words.
    Rng wr(derive_seed(config.seed, kWordStream, 0));
    std::vector<std::vector<std::vector<double>>> concept_meaning(kEmotions.size());
    for (std::size_t e = 0; e < kEmotions.size(); ++e) {
        for (std::size_t k = 0; k < config.related_words; ++k) {
            std::vector<double> m = g.centroids[e];
            for (double& v : m) v += config.cluster_noise * wr.normal();
            concept_meaning[e].push_back(std::move(m));
        }
    }
    std::vector<std::vector<double>> lexicon_meaning(config.lexicon_words);
    for (auto& m : lexicon_meaning) {
        m.resize(g.meaning_dims);
        for (double& v : m) v = wr.normal();
    }
    std::vector<std::array<double, 2>> lexicon_nuisance(config.lexicon_words);
    for (auto& n : lexicon_nuisance) n = {wr.normal(), wr.normal()};

    for (ToyLanguage* lang : {&fx.en, &fx.zh}) {
        const bool is_en = lang == &fx.en;
        lang->lang = is_en ? Language::En : Language::Zh;
        lang->lexicon.language = lang->lang;
        lang->lexicon.bounds = bounds_for(lang->lang);
        Rng rng(derive_seed(config.seed, kWordStream, is_en ? 1 : 2));
        const std::size_t marker = is_en ? g.en_marker : g.zh_marker;
        auto hidden_from = [&](const std::vector<double>& meaning, double jitter) {
            std::vector<double> h(d, 0.0);
            for (std::size_t i = 0; i < g.meaning_dims; ++i) h[i] = meaning[i] + jitter * rng.normal();
            h[marker] = 1.0;
            return h;
        };

        lang->related.resize(kEmotions.size());
        for (std::size_t e = 0; e < kEmotions.size(); ++e) {
            const std::string label(kEmotions[e].label_word(lang->lang));
            add_word(*lang, fx.sae, g, {label, hidden_from(g.centroids[e], 0.0)}, config.rating_noise, rng);
            const std::string stem = is_en ? std::string(kEmotions[e].key) + "-" : std::string(kEmotions[e].chinese);
            for (std::size_t k = 0; k < config.related_words; ++k) {
                const std::string word = numbered(stem, k + 1, 2);
                lang->related[e].push_back(word);
                add_word(*lang, fx.sae, g, {word, hidden_from(concept_meaning[e][k], 0.05)}, config.rating_noise, rng);
            }
        }
        for (std::size_t i = 0; i < config.lexicon_words; ++i) {
            const std::string word = numbered(is_en ? "w" : "词", i + 1, 4);
            auto h = hidden_from(lexicon_meaning[i], 0.1);
            h[d - 2] = lexicon_nuisance[i][0];
            h[d - 1] = lexicon_nuisance[i][1];
            add_word(*lang, fx.sae, g, {word, std::move(h)}, config.rating_noise, rng);
        }

        // Association edges: label -> own associates and a few borrowed ones; every
        // second associate also cues the label back; lexicon words chain among themselves.
        Rng gr(derive_seed(config.seed, kGraphStream, is_en ? 1 : 2));
        for (std::size_t e = 0; e < kEmotions.size(); ++e) {
            const std::string label(kEmotions[e].label_word(lang->lang));
            for (std::size_t k = 0; k < config.related_words; ++k) {
                lang->edges.emplace_back(label, lang->related[e][k]);
                if (k % 2 == 1) lang->edges.emplace_back(lang->related[e][k], label);
            }
            std::set<std::string> borrowed;
            while (borrowed.size() < config.distractors) {
                auto other = static_cast<std::size_t>(gr.below(kEmotions.size() - 1));
                if (other >= e) ++other;
                borrowed.insert(lang->related[other][gr.below(config.related_words)]);
            }
            for (const auto& w : borrowed) lang->edges.emplace_back(label, w);
        }
        for (std::size_t i = 0; i < config.lexicon_words; ++i) {
            for (int r = 0; r < 2; ++r) {
                lang->edges.emplace_back(numbered(is_en ? "w" : "词", i + 1, 4),
                                         numbered(is_en ? "w" : "词", gr.below(config.lexicon_words) + 1, 4));
            }
        }
    }

    for (std::size_t e = 0; e < kEmotions.size(); ++e) {
        fx.pairs.emplace_back(std::string(kEmotions[e].cue_english), std::string(kEmotions[e].chinese));
        for (std::size_t k = 0; k < config.related_words; ++k) {
            fx.pairs.emplace_back(fx.en.related[e][k], fx.zh.related[e][k]);
        }
    }
    for (std::size_t i = 0; i < config.lexicon_words; ++i) {
        fx.pairs.emplace_back(numbered("w", i + 1, 4), numbered("词", i + 1, 4));
    }

    // Classifier scores with a planted positive steering effect on the target column.
    Rng sr(derive_seed(config.seed, kScoreStream, 0));
    const std::array<double, 5> factors = {0, 5, 10, 15, 20};
    constexpr std::size_t kJoy = 3;
    for (std::size_t i = 0; i < config.score_cues; ++i) {
        const std::string cue = numbered("w", i % config.lexicon_words + 1, 4);
        const double intercept = 0.1 + 0.05 * sr.normal();
        for (double factor : factors) {
            ScoreRow row;
            row.sentence_id = numbered("s", i + 1, 4) + "-f" + std::to_string(static_cast<int>(factor));
            row.cue_word = cue;
            row.target_emotion = "joy";
            row.steering_factor = factor;
            for (double& s : row.scores) s = std::clamp(0.05 + 0.02 * sr.normal(), 0.0, 1.0);
            row.scores[kJoy] = std::clamp(intercept + config.score_slope * factor + 0.05 * sr.normal(), 0.0, 1.0);
            fx.scores.push_back(std::move(row));
        }
    }

    Rng pr(derive_seed(config.seed, kPromptStream, 0));
    fx.prompt_states = MatrixF(config.prompt_tokens, d);
    for (float& v : fx.prompt_states.data()) v = static_cast<float>(pr.normal());
    return fx;
}

fs::path write_toy_fixture(const ToyFixture& fx, const fs::path& dir) {
    fs::create_directories(dir / "sae");
    fs::create_directories(dir / "prompt");
    write_sae(dir / "sae" / "sae.json", fx.sae);

    std::vector<ActivationRecord> records = fx.en.records;
    records.insert(records.end(), fx.zh.records.begin(), fx.zh.records.end());
    write_activation_records(dir / "activations.jsonl", std::move(records));

    for (const ToyLanguage* lang : {&fx.en, &fx.zh}) {
        const std::string code(to_string(lang->lang));
        std::ostringstream edges;
        for (const auto& [cue, response] : lang->edges) edges << cue << '\t' << response << "\t1\n";
        write_file_atomic(dir / ("swow_" + code + ".tsv"), edges.str());
        write_lexicon(dir / ("lexicon_" + code + ".tsv"), lang->lexicon);
    }
    std::ostringstream pairs;
    for (const auto& [a, b] : fx.pairs) pairs << a << '\t' << b << '\n';
    write_file_atomic(dir / "pairs.tsv", pairs.str());
    write_score_table(dir / "scores.csv", fx.scores);
    write_matrix(dir / "prompt" / "prompt.json", fx.prompt_states);

    nlohmann::ordered_json cfg;
    cfg["seed"] = fx.config.seed;
    cfg["out_dir"] = "out";
    cfg["sae"] = "sae/sae.json";
    cfg["activations"] = "activations.jsonl";
    cfg["association"] = {{"en", "swow_en.tsv"}, {"zh", "swow_zh.tsv"}};
    cfg["lexicon"] = {{"en", "lexicon_en.tsv"}, {"zh", "lexicon_zh.tsv"}};
    cfg["pairs"] = "pairs.tsv";
    cfg["scores"] = "scores.csv";
    cfg["states"] = "prompt/prompt.json";
    const fs::path path = dir / "pipeline.json";
    write_file_atomic(path, cfg.dump(2) + "\n");
    return path;
}

}  // namespace emospace::toy

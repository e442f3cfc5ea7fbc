#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "emospace/affectpred.hpp"
#include "emospace/concepts.hpp"
#include "emospace/dataio.hpp"
#include "emospace/latent.hpp"
#include "emospace/sae.hpp"
#include "emospace/space.hpp"
#include "emospace/stats.hpp"
#include "emospace/steer.hpp"
#include "emospace_tools/pipeline.hpp"
#include "emospace_tools/toy.hpp"
#include "test_support.hpp"

using namespace emospace;
using emospace::testing::TempDir;
namespace fs = std::filesystem;

namespace {

/// Collects named sub-checks; the criterion passes when all of them hold.
class Checks {
public:
    void expect(bool ok, const std::string& what) {
        if (!ok) failures_.push_back(what);
        ++count_;
    }
    void note(const std::string& text) { notes_.push_back(text); }

    bool ok() const { return failures_.empty(); }
    std::size_t count() const { return count_; }
    const std::vector<std::string>& failures() const { return failures_; }
    const std::vector<std::string>& notes() const { return notes_; }

private:
    std::size_t count_ = 0;
    std::vector<std::string> failures_;
    std::vector<std::string> notes_;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// SAE math
// ---------------------------------------------------------------------------

void sae_math(Checks& c) {
    Rng rng(101);
    std::size_t mismatched_encode = 0, mismatched_decode = 0;
    double worst_linearity = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t d = 2 + rng.below(15);
        const std::size_t L = d + 1 + rng.below(64 - d);
        const SaeModel sae = emospace::testing::random_sae(rng, d, L, static_cast<float>(0.5 * rng.uniform()));
        const auto x = emospace::testing::random_vector(rng, d);

        // Dense oracle: W x + b in double, one rounding, then the jump rule.
        std::vector<float> dense(L, 0.0f);
        for (std::size_t i = 0; i < L; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += static_cast<double>(sae.encoder(i, j)) * x[j];
            const auto pre = static_cast<float>(acc + static_cast<double>(sae.encoder_bias[i]));
            dense[i] = (pre > sae.threshold[i] && pre > 0.0f) ? pre : 0.0f;
        }
        const SparseFeatureVector z = encode(sae, x);
        if (z.to_dense() != dense) ++mismatched_encode;

        std::vector<float> recon(d);
        for (std::size_t r = 0; r < d; ++r) {
            double acc = 0.0;
            for (std::size_t i = 0; i < L; ++i) acc += static_cast<double>(dense[i]) * sae.decoder(r, i);
            recon[r] = static_cast<float>(acc);
        }
        if (decode(sae, z) != recon) ++mismatched_decode;

        const SparseFeatureVector z1 = emospace::testing::random_code(rng, L, 0.3);
        const SparseFeatureVector z2 = emospace::testing::random_code(rng, L, 0.3);
        const double a = 0.5 + rng.uniform(), b = 0.5 + rng.uniform();
        std::vector<float> mix(L);
        const auto d1 = z1.to_dense(), d2 = z2.to_dense();
        for (std::size_t i = 0; i < L; ++i) mix[i] = static_cast<float>(a * d1[i] + b * d2[i]);
        const auto lhs = decode(sae, SparseFeatureVector::from_dense(mix));
        const auto r1 = decode(sae, z1), r2 = decode(sae, z2);
        std::vector<double> l(d), r(d);
        for (std::size_t i = 0; i < d; ++i) {
            l[i] = lhs[i];
            r[i] = a * r1[i] + b * r2[i];
        }
        worst_linearity = std::max(worst_linearity, emospace::testing::relative_error(l, r));
    }
    c.expect(mismatched_encode == 0, "encode differs from dense oracle in " + std::to_string(mismatched_encode) + " trials");
    c.expect(mismatched_decode == 0, "decode differs from dense oracle in " + std::to_string(mismatched_decode) + " trials");
    c.expect(worst_linearity <= 1e-6, "decode linearity error " + fmt(worst_linearity));
    c.note("200 random SAEs, linearity " + fmt(worst_linearity));
}

// ---------------------------------------------------------------------------
// Concept and space construction
// ---------------------------------------------------------------------------

struct Corpus {
    AssociationGraph graph;
    std::vector<std::pair<std::string, std::string>> edges;
    WordVectors vectors;
};

Corpus random_corpus(Rng& rng, Language lang, std::size_t words, std::size_t width) {
    Corpus c;
    std::vector<std::string> vocab;
    for (const auto& e : kEmotions) vocab.emplace_back(e.label_word(lang));
    const std::string prefix = lang == Language::En ? "en" : "zh";
    while (vocab.size() < words) vocab.push_back(prefix + std::to_string(vocab.size()));
    for (const auto& w : vocab) {
        if (rng.uniform() < 0.92) c.vectors[w] = emospace::testing::random_code(rng, width, 0.08);
    }
    const std::size_t edges = 6 * words;
    for (std::size_t i = 0; i < edges; ++i) {
        // Bias cues toward the labels so pools are non-trivial.
        const std::string& a = rng.uniform() < 0.4 ? vocab[rng.below(26)] : vocab[rng.below(vocab.size())];
        const std::string& b = vocab[rng.below(vocab.size())];
        c.graph.add_edge(a, b, 1 + rng.below(3));
        c.edges.emplace_back(a, b);
    }
    return c;
}

double oracle_cosine(const SparseFeatureVector& a, const SparseFeatureVector& b) {
    const auto x = a.to_dense(), y = b.to_dense();
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        dot += static_cast<double>(x[i]) * y[i];
        na += static_cast<double>(x[i]) * x[i];
        nb += static_cast<double>(y[i]) * y[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Brute-force concept set words for one emotion, or empty when none can be built.
std::vector<std::string> oracle_concepts(const Corpus& c, const EmotionLabel& e, Language lang, std::size_t k) {
    const std::string label(e.label_word(lang));
    std::set<std::string> pool;
    for (const auto& [a, b] : c.edges) {
        if (a == label && b != label) pool.insert(b);
        if (b == label && a != label) pool.insert(a);
    }
    const auto lit = c.vectors.find(label);
    if (pool.empty() || lit == c.vectors.end() || lit->second.empty()) return {};
    std::vector<std::pair<double, std::string>> scored;
    for (const auto& w : pool) {
        const auto it = c.vectors.find(w);
        if (it == c.vectors.end() || it->second.empty()) continue;
        scored.emplace_back(oracle_cosine(lit->second, it->second), w);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& x, const auto& y) {
        return x.first != y.first ? x.first > y.first : x.second < y.second;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < std::min(k, scored.size()); ++i) out.push_back(scored[i].second);
    return out;
}

EmotionSpace space_of(const std::vector<ConceptOutcome>& outcomes, const WordVectors& vectors) {
    std::vector<EmotionSubspace> subs;
    for (const auto& o : outcomes)
        if (o.concept_set) subs.push_back(build_subspace(*o.concept_set, vectors));
    return build_space(std::move(subs));
}

void concept_space(Checks& c) {
    Rng rng(202);
    std::size_t topk_mismatch = 0, subspace_mismatch = 0, algebra_mismatch = 0, rerun_mismatch = 0, built = 0;
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t width = 64 + rng.below(200);
        const std::size_t words = 100 + rng.below(401);
        const std::size_t k = 1 + rng.below(10);
        const Corpus en = random_corpus(rng, Language::En, words, width);
        const Corpus zh = random_corpus(rng, Language::Zh, words, width);

        std::set<std::uint32_t> brute_en, brute_zh;
        std::vector<EmotionSpace> spaces;
        for (const auto* corpus : {&en, &zh}) {
            const Language lang = corpus == &en ? Language::En : Language::Zh;
            const auto outcomes = build_all_concept_sets(corpus->graph, corpus->vectors, lang, k);
            for (const auto& o : outcomes) {
                const auto expected = oracle_concepts(*corpus, o.emotion, lang, k);
                std::vector<std::string> got;
                if (o.concept_set)
                    for (const auto& w : o.concept_set->words) got.push_back(w.word);
                if (got != expected) ++topk_mismatch;
                if (!o.concept_set) continue;
                ++built;
                std::set<std::uint32_t> support;
                for (const auto& w : got) {
                    const auto& v = corpus->vectors.at(w);
                    support.insert(v.indices.begin(), v.indices.end());
                }
                const EmotionSubspace sub = build_subspace(*o.concept_set, corpus->vectors);
                if (sub.feature_indices != IndexSet(support.begin(), support.end())) ++subspace_mismatch;
                (lang == Language::En ? brute_en : brute_zh).insert(support.begin(), support.end());
            }
            spaces.push_back(space_of(outcomes, corpus->vectors));
            const auto again = build_all_concept_sets(corpus->graph, corpus->vectors, lang, k);
            for (std::size_t i = 0; i < again.size(); ++i) {
                const bool same_presence = again[i].concept_set.has_value() == outcomes[i].concept_set.has_value();
                bool same = same_presence && again[i].diagnostics == outcomes[i].diagnostics;
                if (same && again[i].concept_set) {
                    const auto& a = again[i].concept_set->words;
                    const auto& b = outcomes[i].concept_set->words;
                    same = a.size() == b.size();
                    for (std::size_t j = 0; same && j < a.size(); ++j)
                        same = a[j].word == b[j].word && a[j].similarity == b[j].similarity;
                }
                if (!same) ++rerun_mismatch;
            }
        }
        if (spaces[0].union_indices != IndexSet(brute_en.begin(), brute_en.end())) ++algebra_mismatch;
        if (spaces[1].union_indices != IndexSet(brute_zh.begin(), brute_zh.end())) ++algebra_mismatch;
        const FeatureSetPartition p = partition_feature_sets(spaces[0], spaces[1]);
        IndexSet inter, uni, extra;
        for (std::uint32_t i = 0; i < width; ++i) {
            const bool a = brute_en.count(i) > 0, b = brute_zh.count(i) > 0;
            if (a && b) inter.push_back(i);
            if (a || b) uni.push_back(i);
            else extra.push_back(i);
        }
        if (p.intersection != inter || p.set_union != uni || p.extra != extra) ++algebra_mismatch;
    }
    c.expect(built > 100, "only " + std::to_string(built) + " concept sets were built");
    c.expect(topk_mismatch == 0, std::to_string(topk_mismatch) + " top-k selections differ from brute force");
    c.expect(subspace_mismatch == 0, std::to_string(subspace_mismatch) + " subspaces differ from brute-force unions");
    c.expect(algebra_mismatch == 0, std::to_string(algebra_mismatch) + " space/partition results differ");
    c.expect(rerun_mismatch == 0, std::to_string(rerun_mismatch) + " outcomes changed on rerun");
    c.note(std::to_string(built) + " concept sets over 8 corpus pairs");
}

// ---------------------------------------------------------------------------
// Cluster validity
// ---------------------------------------------------------------------------

MatrixD blobs(Rng& rng, std::size_t per_class, std::size_t classes, std::size_t dims, double offset,
              std::vector<int>& labels) {
    MatrixD p(per_class * classes, dims);
    labels.clear();
    for (std::size_t k = 0; k < classes; ++k) {
        for (std::size_t i = 0; i < per_class; ++i) {
            const std::size_t r = k * per_class + i;
            for (std::size_t j = 0; j < dims; ++j) p(r, j) = rng.normal() + (j == k % dims ? offset : 0.0);
            labels.push_back(static_cast<int>(k));
        }
    }
    return p;
}

void cluster_validity(Checks& c) {
    const MatrixD four(4, 2, std::vector<double>{0, 0, 0, 2, 10, 0, 10, 2});
    const std::vector<int> two{0, 0, 1, 1};
    const double db = davies_bouldin(four, two), ch = calinski_harabasz(four, two);
    c.expect(std::abs(db - 0.2) <= 1e-9, "davies_bouldin = " + fmt(db));
    c.expect(std::abs(ch - 50.0) <= 1e-9, "calinski_harabasz = " + fmt(ch));

    Rng rng(303);
    std::vector<int> labels;
    const MatrixD planted = blobs(rng, 12, 4, 4, 6.0, labels);
    for (ClusterMetric m : {ClusterMetric::DaviesBouldin, ClusterMetric::CalinskiHarabasz, ClusterMetric::LogRegAccuracy}) {
        const auto res = cluster_permutation_test(m, planted, labels, 1000, 7);
        c.expect(res.p == 1.0 / 1001.0, std::string(to_string(m)) + " planted p = " + fmt(res.p));
    }

    // Null calibration: unstructured points, random labels.
    const std::size_t replicates = 500;
    std::map<ClusterMetric, std::size_t> rejections;
    for (std::size_t rep = 0; rep < replicates; ++rep) {
        std::vector<int> lab;
        MatrixD pts = blobs(rng, 8, 4, 3, 0.0, lab);
        for (ClusterMetric m : {ClusterMetric::DaviesBouldin, ClusterMetric::CalinskiHarabasz}) {
            const auto res = cluster_permutation_test(m, pts, lab, 199, rng.next());
            if (res.p <= 0.05) ++rejections[m];
        }
    }
    for (const auto& [m, n] : rejections) {
        const double rate = static_cast<double>(n) / static_cast<double>(replicates);
        c.expect(rate >= 0.03 && rate <= 0.07, std::string(to_string(m)) + " null rejection rate " + fmt(rate));
        c.note(std::string(to_string(m)) + " null rate " + fmt(rate));
    }
}

// ---------------------------------------------------------------------------
// Latent embedding
// ---------------------------------------------------------------------------

void latent_embedding(Checks& c) {
    Rng rng(404);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 3 + rng.below(10), n = 6 + rng.below(10), b = 2 + rng.below(5);
        MatrixD x(n, m);
        for (double& v : x.data()) v = rng.normal();
        const MatrixD p = initial_projection(m, rng.next());
        InfoNceBatch batch;
        for (std::size_t i = 0; i < b; ++i) {
            batch.anchors.push_back(rng.below(n));
            batch.positives.push_back(rng.below(n));
        }
        const double t = 0.2 + rng.uniform();
        MatrixD grad;
        infonce_loss(p, x, batch, t, &grad);
        const double h = 1e-6;
        double num = 0, den = 0;
        for (std::size_t q = 0; q < p.size(); ++q) {
            MatrixD plus = p, minus = p;
            plus.data()[q] += h;
            minus.data()[q] -= h;
            const double fd = (infonce_loss(plus, x, batch, t) - infonce_loss(minus, x, batch, t)) / (2 * h);
            num += (fd - grad.data()[q]) * (fd - grad.data()[q]);
            den += fd * fd;
        }
        worst = std::max(worst, std::sqrt(num / std::max(den, 1e-300)));
    }
    c.expect(worst <= 1e-4, "gradient relative error " + fmt(worst));

    std::vector<int> labels;
    const MatrixD inputs = blobs(rng, 60, 3, 12, 2.5, labels);
    EmbeddingConfig cfg;
    cfg.steps = 2000;
    cfg.batch_size = 64;
    cfg.learning_rate = 0.05;
    cfg.temperature = 0.5;
    cfg.seed = 5;
    const EmbeddingModel model = train_embedding(inputs, labels, cfg);
    const Embedding emb = embed(model, inputs);
    const double acc = cv_logreg_accuracy(emb.points, labels, LogRegOptions{5, 1e-4, 300, 9});
    c.expect(acc >= 0.9, "planted 3-cluster CV accuracy " + fmt(acc));

    // Axis constructed to equal the valence rating.
    const std::size_t n = 40;
    MatrixD pts(n, 3);
    AffectiveLexicon lex;
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = rng.uniform(1.0, 9.0);
        pts(i, 0) = 0.1 * v - 0.5;
        pts(i, 1) = rng.normal();
        pts(i, 2) = rng.normal();
        words.push_back("w" + std::to_string(i));
        lex.entries[words.back()] = {v, rng.uniform(1.0, 9.0), {}, {}};
    }
    const auto rep = axis_affect_correlation(pts, lex, words);
    const auto& e = rep.entries.front();
    c.expect(e.dimension == 0 && e.target == AffectTarget::Valence, "first entry is not dim1/valence");
    c.expect(std::abs(e.r - 1.0) <= 1e-12, "valence axis r = " + fmt(e.r));
    c.expect(e.p_bonferroni < 0.001, "valence axis Bonferroni p = " + fmt(e.p_bonferroni));
    c.note("gradient error " + fmt(worst) + ", CV accuracy " + fmt(acc));
}

// ---------------------------------------------------------------------------
// Affect prediction
// ---------------------------------------------------------------------------

struct AffectData {
    AffectiveLexicon lexicon;
    WordVectors vectors;
    FeatureSetPartition partition;
};

/// Ratings on [1, 9]. The first `informative` intersection features (0-19) carry
/// valence linearly, 20-39 sit in one language's space only, 40-79 are extra
/// features with noise.
AffectData affect_data(Rng& rng, std::size_t n, std::size_t informative) {
    AffectData d;
    d.lexicon.bounds = {1, 9, 1, 9};
    const std::size_t width = 80;
    std::vector<double> weights(informative);
    for (double& w : weights) w = rng.uniform(0.2, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> dense(width, 0.0f);
        double s = 0.0;
        for (std::size_t f = 0; f < 20; ++f) {
            dense[f] = static_cast<float>(rng.uniform());
            if (f < informative) s += weights[f] * dense[f];
        }
        for (std::size_t f = 20; f < width; ++f)
            if (rng.uniform() < 0.4) dense[f] = static_cast<float>(0.05 + rng.uniform());
        const std::string w = "w" + std::to_string(i);
        d.vectors[w] = SparseFeatureVector::from_dense(dense);
        d.lexicon.entries[w] = {s, 0.0, {}, {}};
    }
    // Rescale valence onto the declared bounds; arousal is independent noise.
    double lo = 1e300, hi = -1e300;
    for (const auto& [w, e] : d.lexicon.entries) {
        lo = std::min(lo, e.valence_raw);
        hi = std::max(hi, e.valence_raw);
    }
    for (auto& [w, e] : d.lexicon.entries) {
        e.valence_raw = 1.0 + 8.0 * (e.valence_raw - lo) / (hi - lo);
        e.arousal_raw = rng.uniform(1.0, 9.0);
    }
    d.lexicon = normalize_ratings(d.lexicon);
    d.partition.width = width;
    for (std::uint32_t f = 0; f < 40; ++f) {
        if (f < 20) d.partition.intersection.push_back(f);
        d.partition.set_union.push_back(f);
    }
    for (std::uint32_t f = 40; f < width; ++f) d.partition.extra.push_back(f);
    return d;
}

void affect_prediction(Checks& c) {
    Rng rng(505);
    // Planted linear data, paper GBM parameters at desk-scale rounds.
    {
        const AffectData d = affect_data(rng, 1000, 5);
        ExperimentOptions opt;
        opt.seeds = 1;
        opt.n_perm = 100;
        opt.seed = 1;
        const AffectItems items = within_language_items(d.lexicon, d.vectors, AffectTarget::Valence);
        const ConditionResult r =
            run_condition(items, d.partition.intersection, FeatureCondition::Intersection, AffectTarget::Valence, opt);
        c.expect(r.mean_r >= 0.95, "planted linear 5-fold r = " + fmt(r.mean_r));
        c.note("linear r " + fmt(r.mean_r));
    }
    // Intersection signal vs extra noise over 10 seeds.
    {
        const AffectData d = affect_data(rng, 3000, 20);
        ExperimentOptions opt;
        opt.seed = 2;
        const std::vector<AffectTarget> targets{AffectTarget::Valence};
        const ExperimentReport rep = run_within_language(d.lexicon, d.vectors, d.partition, targets, opt);
        const auto& inter = rep.cell(FeatureCondition::Intersection, AffectTarget::Valence);
        const auto& extra = rep.cell(FeatureCondition::Extra, AffectTarget::Valence);
        c.expect(inter.r.size() == 50, "expected 50 held-out correlations per condition");
        c.expect(inter.mean_r > extra.mean_r, "r(intersection) " + fmt(inter.mean_r) + " <= r(extra) " + fmt(extra.mean_r));
        const auto cmp = std::find_if(rep.comparisons.begin(), rep.comparisons.end(), [](const auto& x) {
            return x.a == FeatureCondition::Intersection && x.b == FeatureCondition::Extra;
        });
        c.expect(cmp != rep.comparisons.end(), "no intersection/extra comparison");
        if (cmp != rep.comparisons.end()) {
            c.expect(cmp->p_bonferroni < 0.001, "Wilcoxon Bonferroni p = " + fmt(cmp->p_bonferroni));
            c.note("Wilcoxon p_bonf " + fmt(cmp->p_bonferroni));
        }
        double worst_threshold = 0.0;
        for (const auto& cell : rep.cells) worst_threshold = std::max(worst_threshold, cell.threshold);
        c.expect(worst_threshold < 0.1, "permutation threshold " + fmt(worst_threshold));
        c.note("r(int) " + fmt(inter.mean_r) + ", r(extra) " + fmt(extra.mean_r) + ", threshold " + fmt(worst_threshold));
    }
}

// ---------------------------------------------------------------------------
// Steering compiler
// ---------------------------------------------------------------------------

void steering_compiler(Checks& c) {
    Rng rng(606);
    std::size_t increases = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 3 + rng.below(10), l = 5 + rng.below(60);
        MatrixD s(k, l);
        for (double& v : s.data()) v = rng.uniform() < 0.4 ? rng.uniform() : 0.0;
        s(0, 0) = 1.0;
        const std::size_t comps = 1 + rng.below(std::min(k, l));
        const NmfFactors f = nmf(s, {comps, 200, rng.next()});
        for (std::size_t i = 1; i < f.error_trace.size(); ++i)
            if (f.error_trace[i] > f.error_trace[i - 1]) ++increases;
    }
    c.expect(increases == 0, std::to_string(increases) + " NMF iterations increased the error");

    MatrixD r1(6, 20);
    std::vector<double> u(6), v(20);
    for (double& x : u) x = 0.1 + rng.uniform();
    for (double& x : v) x = rng.uniform() < 0.7 ? 0.1 + rng.uniform() : 0.0;
    double norm = 0.0;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 20; ++j) {
            r1(i, j) = u[i] * v[j];
            norm += r1(i, j) * r1(i, j);
        }
    const NmfFactors f1 = nmf(r1, {1, 500, 3});
    const double rel = f1.error() / std::sqrt(norm);
    c.expect(rel < 1e-3, "rank-1 relative error " + fmt(rel));

    const MatrixF t(2, 3, std::vector<float>{0, 1, 2, 3, 4, 5});
    const std::vector<float> sv{1, 0, 2};
    c.expect(apply_steering(t, sv, 5.0) == MatrixF(2, 3, std::vector<float>{5, 1, 12, 8, 4, 15}), "hand example");

    double worst_add = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        MatrixF h(4, 16);
        for (float& x : h.data()) x = static_cast<float>(rng.normal());
        const auto vec = emospace::testing::random_vector(rng, 16);
        const double a = rng.uniform(-20, 20), b = rng.uniform(-20, 20);
        const MatrixF lhs = apply_steering(apply_steering(h, vec, a), vec, b);
        const MatrixF rhs = apply_steering(h, vec, a + b);
        std::vector<double> x(lhs.data().begin(), lhs.data().end()), y(rhs.data().begin(), rhs.data().end());
        worst_add = std::max(worst_add, emospace::testing::relative_error(x, y));
    }
    c.expect(worst_add <= 1e-6, "additivity relative error " + fmt(worst_add));

    TempDir dir("accept-steer");
    const SaeModel sae = emospace::testing::random_sae(rng, 16, 64);
    WordVectors vecs;
    ConceptSet cs;
    cs.emotion = kEmotions[16];
    for (int i = 0; i < 10; ++i) {
        const std::string w = "w" + std::to_string(i);
        vecs[w] = emospace::testing::random_code(rng, 64, 0.3);
        cs.words.push_back({w, 1.0 - 0.01 * i});
    }
    const SteeringVector compiled = compile_emotion_steering(sae, cs, vecs, {0, 3, 8, 200, 11});
    write_steering_bundle(dir / "fear.json", to_bundle(compiled, sae));
    const SteeringBundle loaded = load_steering_bundle(dir / "fear.json");
    verify_bundle(loaded, sae);
    MatrixF h(5, 16);
    for (float& x : h.data()) x = static_cast<float>(rng.normal());
    const MatrixF direct = apply_steering(h, compiled, 10.0);
    const MatrixF via = apply_steering(h, from_bundle(loaded), 10.0);
    std::vector<double> x(direct.data().begin(), direct.data().end()), y(via.data().begin(), via.data().end());
    const double round = emospace::testing::relative_error(y, x);
    c.expect(round <= 1e-6, "persist round trip relative error " + fmt(round));
    c.note("additivity " + fmt(worst_add) + ", rank-1 " + fmt(rel));
}

// ---------------------------------------------------------------------------
// Steering evaluation statistics
// ---------------------------------------------------------------------------

stats::LmmData simulate(Rng& rng, std::size_t groups, double slope) {
    std::vector<double> y, x;
    std::vector<std::string> g;
    for (std::size_t i = 0; i < groups; ++i) {
        const double u = rng.normal();
        for (double f : {0.0, 5.0, 10.0, 15.0, 20.0}) {
            x.push_back(f);
            y.push_back(1.0 + slope * f + u + 2.0 * rng.normal());
            g.push_back("cue" + std::to_string(i));
        }
    }
    return stats::make_lmm_data(y, x, g);
}

stats::PermutationResult lmm_permutation(const stats::LmmData& data, std::size_t n_perm, std::uint64_t seed) {
    return stats::permutation_test(
        data, [](const stats::LmmData& d) { return stats::fit_lmm_random_intercept(d).slope; },
        [](const stats::LmmData& d, Rng& r) {
            stats::LmmData copy = d;
            r.shuffle(std::span<double>(copy.x));
            return copy;
        },
        {n_perm, seed, stats::Tail::Greater, false});
}

void steering_evaluation(Checks& c) {
    Rng rng(707);
    const stats::LmmData planted = simulate(rng, 400, 0.5);
    const stats::LmmFit fit = stats::fit_lmm_random_intercept(planted);
    c.expect(std::abs(fit.slope - 0.5) <= 0.05, "beta1 = " + fmt(fit.slope));

    const stats::LmmData weak = simulate(rng, 400, 0.02);
    const auto perm = lmm_permutation(weak, 10000, 13);
    c.expect(perm.p < 0.01, "planted-effect permutation p = " + fmt(perm.p));

    // Null: the p-values of 200 replicates should look uniform (KS at the 1% level).
    std::vector<double> ps;
    for (int rep = 0; rep < 200; ++rep) ps.push_back(lmm_permutation(simulate(rng, 30, 0.0), 199, rng.next()).p);
    std::sort(ps.begin(), ps.end());
    double ks = 0.0;
    const double n = static_cast<double>(ps.size());
    for (std::size_t i = 0; i < ps.size(); ++i)
        ks = std::max({ks, std::abs(ps[i] - static_cast<double>(i) / n), std::abs(ps[i] - static_cast<double>(i + 1) / n)});
    c.expect(ks < 1.628 / std::sqrt(n), "null p KS distance " + fmt(ks));
    c.note("beta1 " + fmt(fit.slope) + ", weak-effect p " + fmt(perm.p) + ", null KS " + fmt(ks));
}

// ---------------------------------------------------------------------------
// End-to-end toy pipeline
// ---------------------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void end_to_end(Checks& c) {
    TempDir dir("accept-e2e");
    const toy::ToyFixture fx = toy::make_toy_fixture();
    c.expect(fx.sae.hidden_dim() == 16 && fx.sae.width() == 256, "toy SAE is not d=16, L=256");
    const fs::path cfg_path = toy::write_toy_fixture(fx, dir.path());

    const std::vector<std::string> chain{"build-space", "validate-space", "predict", "compile-steering", "apply-steering"};
    std::vector<fs::path> outs;
    for (const char* name : {"run1", "run2"}) {
        cli::PipelineConfig cfg = cli::load_config(cfg_path);
        cfg.out_dir = dir.path() / name;
        cfg.validate.n_perm = 1000;
        cfg.validate.n_perm_logreg = 19;
        cfg.predict.options.seeds = 3;
        for (const auto& cmd : chain) cli::run_command(cmd, cfg);
        outs.push_back(cfg.out_dir);
    }

    std::size_t files = 0, differing = 0;
    for (const auto& entry : fs::recursive_directory_iterator(outs[0])) {
        if (!entry.is_regular_file()) continue;
        ++files;
        const fs::path other = outs[1] / fs::relative(entry.path(), outs[0]);
        if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
    }
    c.expect(files > 20, "only " + std::to_string(files) + " output files");
    c.expect(differing == 0, std::to_string(differing) + " outputs differ between reruns");

    const auto validity = nlohmann::json::parse(slurp(outs[0] / "cluster_validity.json"));
    std::size_t results = 0;
    for (const auto& r : validity["results"]) {
        ++results;
        const double p = r["p"].get<double>(), floor = r["p_floor"].get<double>();
        c.expect(p == floor, r["lang"].get<std::string>() + "/" + r["metric"].get<std::string>() + " p = " + fmt(p) +
                                 " above floor " + fmt(floor));
    }
    c.expect(results == 6, "expected 6 cluster-validity results");

    double worst = 1.0;
    for (const char* lang : {"en", "zh"}) {
        const auto pred = nlohmann::json::parse(slurp(outs[0] / (std::string("predict_") + lang + ".json")));
        for (const auto& cell : pred["cells"]) {
            if (cell["condition"] != "all") continue;
            const double r = cell["mean_r"].get<double>();
            worst = std::min(worst, r);
            c.expect(r >= 0.8, std::string(lang) + "/" + cell["target"].get<std::string>() + " r = " + fmt(r));
        }
    }
    const auto steered = nlohmann::json::parse(slurp(outs[0] / "reports" / "apply-steering.json"));
    c.expect(!steered["outputs"].empty(), "apply-steering produced no outputs");
    c.note(std::to_string(files) + " files identical across reruns, min r(all) " + fmt(worst));
}

struct Criterion {
    const char* name;
    const char* title;
    double budget_s;
    std::function<void(Checks&)> run;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all{
        {"sae", "SAE math", 1.0, sae_math},
        {"concepts", "Concept/space construction", 5.0, concept_space},
        {"cluster", "Cluster validity", 60.0, cluster_validity},
        {"latent", "Latent embedding", 120.0, latent_embedding},
        {"affect", "Affect prediction", 600.0, affect_prediction},
        {"steering", "Steering compiler", 60.0, steering_compiler},
        {"lmm", "Steering evaluation statistics", 300.0, steering_evaluation},
        {"e2e", "End-to-end toy pipeline", 900.0, end_to_end},
    };
    return all;
}

bool run_one(const Criterion& cr) {
    Checks checks;
    const auto start = std::chrono::steady_clock::now();
    try {
        cr.run(checks);
    } catch (const std::exception& e) {
        checks.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    checks.expect(secs < cr.budget_s, "runtime " + fmt(secs) + " s over budget " + fmt(cr.budget_s) + " s");
    std::string detail;
    for (const auto& n : checks.notes()) detail += (detail.empty() ? "" : "; ") + n;
    std::cout << (checks.ok() ? "PASS " : "FAIL ") << cr.name << " (" << cr.title << "): " << checks.count()
              << " checks, " << fmt(secs) << " s" << (detail.empty() ? "" : ", " + detail) << "\n";
    for (const auto& f : checks.failures()) std::cout << "    " << f << "\n";
    std::cout.flush();
    return checks.ok();
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<const Criterion*> selected;
    for (int i = 1; i < argc; ++i) {
        const std::string want = argv[i];
        const auto it = std::find_if(criteria().begin(), criteria().end(), [&](const auto& c) { return want == c.name; });
        if (it == criteria().end()) {
            std::cerr << "unknown criterion '" << want << "'; choose from:";
            for (const auto& c : criteria()) std::cerr << " " << c.name;
            std::cerr << "\n";
            return 2;
        }
        selected.push_back(&*it);
    }
    if (selected.empty())
        for (const auto& c : criteria()) selected.push_back(&c);
    bool ok = true;
    for (const Criterion* c : selected) ok = run_one(*c) && ok;
    return ok ? 0 : 1;
}

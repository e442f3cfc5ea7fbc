#include "emospace/concepts.hpp"

#include <algorithm>
#include <string>

#include "emospace/error.hpp"

namespace emospace {

CandidatePool extract_candidates(const AssociationGraph& graph, const EmotionLabel& emotion, Language lang) {
    CandidatePool pool{emotion, lang, {}, {}, {}};
    const std::string label(emotion.label_word(lang));
    if (!graph.contains(label)) {
        pool.diagnostics.push_back("label word '" + label + "' not found in association norms");
        return pool;
    }
    for (const auto& w : graph.forward(label)) {
        if (w != label) pool.provenance[w] |= kForward;
    }
    for (const auto& w : graph.backward(label)) {
        if (w != label) pool.provenance[w] |= kBackward;
    }
    pool.words.reserve(pool.provenance.size());
    for (const auto& [w, bits] : pool.provenance) pool.words.push_back(w);
    return pool;
}

ConceptSet build_concept_set(const CandidatePool& pool, const SparseFeatureVector& label_vector,
                             const WordVectors& word_vectors, std::size_t k) {
    if (label_vector.squared_norm() == 0.0) {
        fail(ErrorCode::Degenerate, "label word of '" + std::string(pool.emotion.key) + "' has a zero feature vector");
    }
    ConceptSet cs{pool.emotion, pool.lang, {}, {}, pool.words.size()};
    std::vector<ScoredWord> scored;
    scored.reserve(pool.words.size());
    for (const auto& w : pool.words) {
        const auto it = word_vectors.find(w);
        if (it == word_vectors.end() || it->second.squared_norm() == 0.0) {
            cs.skipped.push_back(w);
            continue;
        }
        scored.push_back({w, cosine_similarity(label_vector, it->second)});
    }
    if (scored.empty()) {
        fail(ErrorCode::InsufficientData,
             "no candidate of '" + std::string(pool.emotion.key) + "' has a usable feature vector");
    }
    const auto better = [](const ScoredWord& a, const ScoredWord& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.word < b.word;
    };
    const std::size_t keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
    scored.resize(keep);
    cs.words = std::move(scored);
    std::sort(cs.skipped.begin(), cs.skipped.end());
    return cs;
}

std::vector<ConceptOutcome> build_all_concept_sets(const AssociationGraph& graph, const WordVectors& word_vectors,
                                                   Language lang, std::size_t k) {
    std::vector<ConceptOutcome> out;
    out.reserve(kEmotions.size());
    for (const auto& emotion : kEmotions) {
        ConceptOutcome outcome{emotion, std::nullopt, 0, {}};
        CandidatePool pool = extract_candidates(graph, emotion, lang);
        outcome.pool_size = pool.words.size();
        outcome.diagnostics = pool.diagnostics;
        const std::string label(emotion.label_word(lang));
        const auto label_it = word_vectors.find(label);
        if (pool.words.empty()) {
            outcome.diagnostics.push_back("empty candidate pool");
        } else if (label_it == word_vectors.end()) {
            outcome.diagnostics.push_back("label word '" + label + "' has no activation record");
        } else {
            try {
                outcome.concept_set = build_concept_set(pool, label_it->second, word_vectors, k);
                for (const auto& w : outcome.concept_set->skipped) {
                    outcome.diagnostics.push_back("skipped '" + w + "': no usable activation record");
                }
            } catch (const Error& e) {
                outcome.diagnostics.push_back(e.what());
            }
        }
        out.push_back(std::move(outcome));
    }
    return out;
}

}  // namespace emospace

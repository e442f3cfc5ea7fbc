#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "emospace/dataio.hpp"
#include "emospace/emotions.hpp"

namespace emospace {

enum CandidateSource : unsigned { kForward = 1u, kBackward = 2u };

/// Words associated with an emotion label in either direction (label word excluded).
struct CandidatePool {
    EmotionLabel emotion;
    Language lang = Language::En;
    std::vector<std::string> words;             // unique, codepoint order
    std::map<std::string, unsigned> provenance; // word -> CandidateSource bits
    std::vector<std::string> diagnostics;
};

CandidatePool extract_candidates(const AssociationGraph& graph, const EmotionLabel& emotion,
                                 Language lang);

struct ScoredWord {
    std::string word;
    double similarity = 0.0;
};

/// Top-k pool words ranked by cosine similarity to the label word's feature vector.
struct ConceptSet {
    EmotionLabel emotion;
    Language lang = Language::En;
    std::vector<ScoredWord> words;      // similarity non-increasing
    std::vector<std::string> skipped;   // pool words without a usable vector
    std::size_t pool_size = 0;
};

inline constexpr std::size_t kDefaultConceptSize = 10;

/// Ties on similarity are broken by codepoint order of the word. Pool words missing
/// from `word_vectors` (or with an all-zero vector) are skipped and listed.
ConceptSet build_concept_set(const CandidatePool& pool, const SparseFeatureVector& label_vector,
                             const WordVectors& word_vectors,
                             std::size_t k = kDefaultConceptSize);

/// Either a concept set or the reason one could not be produced.
struct ConceptOutcome {
    EmotionLabel emotion;
    std::optional<ConceptSet> concept_set;
    std::size_t pool_size = 0;
    std::vector<std::string> diagnostics;
};

/// Runs extraction and selection for all 26 emotions of one language.
std::vector<ConceptOutcome> build_all_concept_sets(const AssociationGraph& graph,
                                                   const WordVectors& word_vectors, Language lang,
                                                   std::size_t k = kDefaultConceptSize);

}  // namespace emospace

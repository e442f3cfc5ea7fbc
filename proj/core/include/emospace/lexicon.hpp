#pragma once

#include <map>
#include <optional>
#include <string>

#include "emospace/language.hpp"

namespace emospace {

struct RatingBounds {
    double valence_min = 0.0;
    double valence_max = 1.0;
    double arousal_min = 0.0;
    double arousal_max = 1.0;
};

enum class AffectTarget { Valence, Arousal };

std::string_view to_string(AffectTarget target) noexcept;
AffectTarget parse_affect_target(std::string_view name);

struct LexiconEntry {
    double valence_raw = 0.0;
    double arousal_raw = 0.0;
    std::optional<double> valence_norm;
    std::optional<double> arousal_norm;

    double raw(AffectTarget t) const noexcept {
        return t == AffectTarget::Valence ? valence_raw : arousal_raw;
    }
};

/// Word -> (valence, arousal) ratings with their declared scale.
struct AffectiveLexicon {
    Language language = Language::En;
    RatingBounds bounds;
    std::map<std::string, LexiconEntry> entries;
    bool normalized = false;

    std::size_t size() const noexcept { return entries.size(); }
    const LexiconEntry* find(const std::string& word) const;

    /// Normalized rating; throws Error(InvalidArgument) if the lexicon is not normalized.
    double normalized_value(const std::string& word, AffectTarget target) const;
};

}  // namespace emospace

#pragma once

#include <array>
#include <optional>
#include <string_view>

#include "emospace/language.hpp"

namespace emospace {

/// One of the 26 emotion categories with its English and Chinese label words.
struct EmotionLabel {
    int index;  // 1..26
    std::string_view english;
    std::string_view chinese;

    /// Identifier used in file names and reports ("aesthetic_appreciation").
    std::string_view key;

    /// Cue word looked up in association norms: lowercase English or the Chinese label.
    std::string_view label_word(Language lang) const noexcept {
        return lang == Language::En ? cue_english : chinese;
    }

    std::string_view cue_english;
};

inline constexpr std::array<EmotionLabel, 26> kEmotions = {{
    {1, "Admiration", "敬佩", "admiration", "admiration"},
    {2, "Adoration", "崇拜", "adoration", "adoration"},
    {3, "Aesthetic appreciation", "欣赏", "aesthetic_appreciation", "aesthetic appreciation"},
    {4, "Amusement", "有趣", "amusement", "amusement"},
    {5, "Anger", "愤怒", "anger", "anger"},
    {6, "Anxiety", "焦虑", "anxiety", "anxiety"},
    {7, "Awe", "敬重", "awe", "awe"},
    {8, "Awkwardness", "尴尬", "awkwardness", "awkwardness"},
    {9, "Boredom", "无聊", "boredom", "boredom"},
    {10, "Calmness", "平静", "calmness", "calmness"},
    {11, "Confusion", "困惑", "confusion", "confusion"},
    {12, "Craving", "渴望", "craving", "craving"},
    {13, "Disgust", "厌烦", "disgust", "disgust"},
    {14, "Empathic Pain", "心疼", "empathic_pain", "empathic pain"},
    {15, "Entrapment", "陷阱", "entrapment", "entrapment"},
    {16, "Excitement", "兴奋", "excitement", "excitement"},
    {17, "Fear", "恐惧", "fear", "fear"},
    {18, "Horror", "恐怖", "horror", "horror"},
    {19, "Interest", "兴趣", "interest", "interest"},
    {20, "Joy", "快乐", "joy", "joy"},
    {21, "Nostalgia", "怀旧", "nostalgia", "nostalgia"},
    {22, "Relief", "解脱", "relief", "relief"},
    {23, "Romance", "浪漫", "romance", "romance"},
    {24, "Sadness", "悲伤", "sadness", "sadness"},
    {25, "Satisfaction", "满足", "satisfaction", "satisfaction"},
    {26, "Surprise", "惊讶", "surprise", "surprise"},
}};

/// Looks up by key, English label (case-insensitive) or Chinese label.
std::optional<EmotionLabel> find_emotion(std::string_view name);

}  // namespace emospace

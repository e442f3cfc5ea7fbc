#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

#include "emospace/emotions.hpp"
#include "emospace/error.hpp"
#include "emospace/language.hpp"
#include "emospace/lexicon.hpp"
#include "emospace/parallel.hpp"
#include "emospace/random.hpp"

namespace emospace {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::Io: return "io";
        case ErrorCode::Format: return "format";
        case ErrorCode::Checksum: return "checksum";
        case ErrorCode::Shape: return "shape";
        case ErrorCode::Range: return "range";
        case ErrorCode::Duplicate: return "duplicate";
        case ErrorCode::InvalidArgument: return "invalid_argument";
        case ErrorCode::InsufficientData: return "insufficient_data";
        case ErrorCode::Degenerate: return "degenerate";
        case ErrorCode::Numerical: return "numerical";
    }
    return "unknown";
}

std::string_view to_string(Language lang) noexcept {
    return lang == Language::En ? "en" : "zh";
}

Language parse_language(std::string_view code) {
    if (code == "en") return Language::En;
    if (code == "zh") return Language::Zh;
    fail(ErrorCode::Format, "unknown language code '" + std::string(code) + "'");
}

std::string_view to_string(AffectTarget target) noexcept {
    return target == AffectTarget::Valence ? "valence" : "arousal";
}

AffectTarget parse_affect_target(std::string_view name) {
    if (name == "valence") return AffectTarget::Valence;
    if (name == "arousal") return AffectTarget::Arousal;
    fail(ErrorCode::InvalidArgument, "unknown affect target '" + std::string(name) + "'");
}

const LexiconEntry* AffectiveLexicon::find(const std::string& word) const {
    const auto it = entries.find(word);
    return it == entries.end() ? nullptr : &it->second;
}

double AffectiveLexicon::normalized_value(const std::string& word, AffectTarget target) const {
    const LexiconEntry* entry = find(word);
    if (entry == nullptr) fail(ErrorCode::InvalidArgument, "word not in lexicon: " + word);
    const auto& value = target == AffectTarget::Valence ? entry->valence_norm : entry->arousal_norm;
    if (!value) fail(ErrorCode::InvalidArgument, "lexicon has not been normalized");
    return *value;
}

std::optional<EmotionLabel> find_emotion(std::string_view name) {
    auto lower = [](std::string_view s) {
        std::string out(s);
        std::transform(out.begin(), out.end(), out.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        return out;
    };
    const std::string needle = lower(name);
    for (const auto& e : kEmotions) {
        if (needle == e.key || needle == lower(e.english) || name == e.chinese) return e;
    }
    return std::nullopt;
}

double Rng::normal() {
    // Box-Muller; the second variate is discarded so each call consumes two draws.
    const double u1 = uniform_open_low();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

namespace {
std::atomic<unsigned> g_threads{0};
}

void set_thread_count(unsigned threads) noexcept { g_threads.store(threads); }

unsigned thread_count() noexcept {
    const unsigned requested = g_threads.load();
    if (requested != 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    if (n == 0) return;
    const std::size_t workers = std::min<std::size_t>(thread_count(), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) body(i);
        return;
    }
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&, begin, end] {
            try {
                for (std::size_t i = begin; i < end; ++i) body(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace emospace

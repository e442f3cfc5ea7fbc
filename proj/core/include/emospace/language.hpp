#pragma once

#include <string_view>

namespace emospace {

enum class Language { En, Zh };

std::string_view to_string(Language lang) noexcept;
Language parse_language(std::string_view code);

}  // namespace emospace

#pragma once

#include <cstddef>
#include <string_view>

namespace arr {

// Heuristic token count: one token per CJK scalar plus one per four other
// scalars (rounded up).
std::size_t estimate_tokens(std::string_view text);

}  // namespace arr

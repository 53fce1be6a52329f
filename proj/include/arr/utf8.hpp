#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace arr::utf8 {

/// One decoded scalar together with the byte range it occupied.
struct Scalar {
  char32_t code_point;
  std::size_t offset;
  std::size_t length;
};

// Invalid or truncated sequences decode as U+FFFD covering a single byte, so
// every input byte belongs to exactly one scalar.
std::vector<Scalar> decode(std::string_view text);

std::size_t count_scalars(std::string_view text);

void append(std::string& out, char32_t code_point);

bool is_cjk(char32_t code_point);

}  // namespace arr::utf8

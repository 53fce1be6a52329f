#include "arr/tokens.hpp"

#include "arr/utf8.hpp"

namespace arr {

std::size_t estimate_tokens(std::string_view text) {
  std::size_t cjk = 0;
  std::size_t other = 0;
  for (const auto& s : utf8::decode(text)) {
    if (utf8::is_cjk(s.code_point)) {
      ++cjk;
    } else {
      ++other;
    }
  }
  return cjk + (other + 3) / 4;
}

}  // namespace arr

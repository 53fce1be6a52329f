#include "arr/utf8.hpp"

namespace arr::utf8 {

namespace {

constexpr char32_t kReplacement = 0xFFFD;

bool is_continuation(unsigned char byte) { return (byte & 0xC0) == 0x80; }

}  // namespace

std::vector<Scalar> decode(std::string_view text) {
  std::vector<Scalar> out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    char32_t min = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
      min = 0x80;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
      min = 0x800;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
      min = 0x10000;
    }

    bool ok = len != 0 && i + len <= text.size();
    for (std::size_t j = 1; ok && j < len; ++j) {
      const auto byte = static_cast<unsigned char>(text[i + j]);
      if (!is_continuation(byte)) {
        ok = false;
      } else {
        cp = (cp << 6) | (byte & 0x3F);
      }
    }
    // Reject overlong forms, surrogates and out-of-range values.
    if (ok && (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) {
      ok = false;
    }

    if (ok) {
      out.push_back({cp, i, len});
      i += len;
    } else {
      out.push_back({kReplacement, i, 1});
      i += 1;
    }
  }
  return out;
}

std::size_t count_scalars(std::string_view text) { return decode(text).size(); }

void append(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_cjk(char32_t cp) {
  return (cp >= 0x2E80 && cp <= 0x2FDF) ||    // radicals supplement, Kangxi radicals
         (cp >= 0x3000 && cp <= 0x303F) ||    // CJK symbols and punctuation
         (cp >= 0x3040 && cp <= 0x30FF) ||    // hiragana, katakana
         (cp >= 0x3100 && cp <= 0x31FF) ||    // bopomofo, hangul jamo compat, kanbun, strokes
         (cp >= 0x3200 && cp <= 0x4DBF) ||    // enclosed/compat CJK, extension A
         (cp >= 0x4E00 && cp <= 0x9FFF) ||    // unified ideographs
         (cp >= 0xAC00 && cp <= 0xD7AF) ||    // hangul syllables
         (cp >= 0xF900 && cp <= 0xFAFF) ||    // compatibility ideographs
         (cp >= 0xFE30 && cp <= 0xFE4F) ||    // compatibility forms
         (cp >= 0xFF00 && cp <= 0xFFEF) ||    // halfwidth and fullwidth forms
         (cp >= 0x20000 && cp <= 0x3134F);    // extensions B..G, compat supplement
}

}  // namespace arr::utf8

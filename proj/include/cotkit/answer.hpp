#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "cotkit/errors.hpp"

namespace cotkit {

enum class AnswerKind { Numeric, Fraction, Choice, FreeText };

// Canonicalized final answer. `value`, `num`/`den` and `unit` are derived from
// `canonical` and are not serialized separately.
struct AnswerValue {
  std::string raw;
  std::string canonical;
  AnswerKind kind = AnswerKind::FreeText;

  double value = 0.0;             // Numeric and Fraction
  long long num = 0, den = 1;     // Fraction only
  std::string unit;               // "°" or "%" when the input was unit-tagged

  bool numeric_capable() const {
    return kind == AnswerKind::Numeric || kind == AnswerKind::Fraction;
  }

  friend bool operator==(const AnswerValue& a, const AnswerValue& b) {
    return a.raw == b.raw && a.canonical == b.canonical && a.kind == b.kind;
  }
};

namespace ans_detail {

inline std::string collapse_ws(std::string_view s) {
  std::string out;
  bool in_ws = true;  // also trims leading
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = true;
    } else {
      if (in_ws && !out.empty()) out.push_back(' ');
      out.push_back(c);
      in_ws = false;
    }
  }
  return out;
}

inline std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

// Shortest round-trip decimal rendering.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;  // from_chars rejects a leading '+'
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
  if (s.empty()) return std::nullopt;
  long long v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return v;
}

// Strips wrapping punctuation: brackets/quotes on both ends, leading currency
// marks, trailing sentence punctuation.
inline std::string strip_punctuation(std::string s) {
  auto is_open = [](char c) { return c == '(' || c == '[' || c == '{' || c == '"' || c == '\''; };
  auto is_close = [](char c) { return c == ')' || c == ']' || c == '}' || c == '"' || c == '\''; };
  auto is_trail = [](char c) { return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?'; };
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    if (is_open(s.front()) && is_close(s.back()) && s.size() >= 2) {
      s = s.substr(1, s.size() - 2);
      changed = true;
    } else if (is_trail(s.back())) {
      s.pop_back();
      changed = true;
    } else if (s.front() == '$') {
      s.erase(s.begin());
      changed = true;
    }
    // re-trim
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  }
  return s;
}

// Recognizes a trailing degree/percent tag; returns the tag and chops it off.
inline std::string take_unit(std::string& s) {
  auto ends_with = [&](std::string_view suf) {
    return s.size() >= suf.size() &&
           std::string_view(s).substr(s.size() - suf.size()) == suf;
  };
  auto chop = [&](std::size_t n) {
    s.erase(s.size() - n);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
  };
  if (ends_with("\xc2\xb0")) {  // UTF-8 degree sign
    chop(2);
    return "\xc2\xb0";
  }
  if (ends_with("%")) {
    chop(1);
    return "%";
  }
  std::string lower = to_lower(s);
  for (std::string_view word : {" degrees", " degree", " deg"}) {
    if (lower.size() >= word.size() &&
        std::string_view(lower).substr(lower.size() - word.size()) == word) {
      chop(word.size());
      return "\xc2\xb0";
    }
  }
  return "";
}

// Removes "," used as a thousands separator (digit on both sides).
inline std::string strip_thousands(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && i + 1 < s.size() &&
        std::isdigit(static_cast<unsigned char>(s[i - 1])) &&
        std::isdigit(static_cast<unsigned char>(s[i + 1]))) {
      continue;
    }
    out.push_back(s[i]);
  }
  return out;
}

struct FractionParts {
  long long num, den;
};

inline std::optional<FractionParts> parse_fraction(const std::string& s) {
  static const std::regex plain(R"(^([+-]?\d+)\s*/\s*([+-]?\d+)$)");
  static const std::regex latex(R"(^\\d?frac\{([+-]?\d+)\}\{([+-]?\d+)\}$)");
  std::smatch m;
  if (std::regex_match(s, m, plain) || std::regex_match(s, m, latex)) {
    auto n = parse_int(m[1].str());
    auto d = parse_int(m[2].str());
    if (n && d && *d != 0) return FractionParts{*n, *d};
  }
  return std::nullopt;
}

// True when num/den has a terminating decimal expansion (den = 2^a * 5^b).
inline bool terminating(long long den) {
  den = std::abs(den);
  while (den % 2 == 0) den /= 2;
  while (den % 5 == 0) den /= 5;
  return den == 1;
}

}  // namespace ans_detail

// Total on non-empty input: trims and strips wrapping punctuation, lowercases
// choice letters, parses decimals and simple fractions (a/b, \frac{a}{b}),
// strips degree/percent symbols into unit-tagged numerics. Unparseable input
// falls back to whitespace-normalized FreeText. Idempotent on `canonical`.
inline AnswerValue canonicalize_answer(const std::string& raw) {
  using namespace ans_detail;
  AnswerValue out;
  out.raw = raw;

  std::string s = strip_punctuation(collapse_ws(raw));

  // Multiple-choice letter.
  if (s.size() == 1) {
    char c = static_cast<char>(std::tolower(static_cast<unsigned char>(s[0])));
    if (c >= 'a' && c <= 'e') {
      out.kind = AnswerKind::Choice;
      out.canonical = std::string(1, c);
      return out;
    }
  }

  // Simple fraction. Terminating ones canonicalize to their decimal value,
  // the rest keep exact num/den form.
  if (auto frac = parse_fraction(s)) {
    long long n = frac->num, d = frac->den;
    long long g = std::gcd(std::abs(n), std::abs(d));
    if (g > 0) {
      n /= g;
      d /= g;
    }
    if (d < 0) {
      n = -n;
      d = -d;
    }
    if (terminating(d)) {
      out.kind = AnswerKind::Numeric;
      out.value = static_cast<double>(n) / static_cast<double>(d);
      out.canonical = format_double(out.value);
    } else {
      out.kind = AnswerKind::Fraction;
      out.num = n;
      out.den = d;
      out.value = static_cast<double>(n) / static_cast<double>(d);
      out.canonical = std::to_string(n) + "/" + std::to_string(d);
    }
    return out;
  }

  // Plain numeric, optionally unit-tagged.
  {
    std::string t = s;
    std::string unit = take_unit(t);
    t = strip_thousands(t);
    if (auto v = parse_double(t)) {
      out.kind = AnswerKind::Numeric;
      out.value = *v;
      out.unit = unit;
      out.canonical = format_double(*v) + unit;
      return out;
    }
  }

  out.kind = AnswerKind::FreeText;
  out.canonical = to_lower(collapse_ws(s.empty() ? raw : s));
  return out;
}

// Numeric comparison: relative tolerance 1e-6, absolute 1e-9 near zero.
inline bool numbers_close(double x, double y) {
  double diff = std::fabs(x - y);
  return diff <= std::max(1e-9, 1e-6 * std::max(std::fabs(x), std::fabs(y)));
}

// Symmetric, reflexive equivalence on canonical forms. Numerics (incl.
// fractions) compare by value, choices by letter, free text by normalized
// string. A free-text side facing a numeric side gets one re-parse attempt.
inline bool equivalent(const AnswerValue& a, const AnswerValue& b) {
  if (a.numeric_capable() && b.numeric_capable()) {
    if (!a.unit.empty() && !b.unit.empty() && a.unit != b.unit) return false;
    return numbers_close(a.value, b.value);
  }
  if (a.kind == AnswerKind::Choice && b.kind == AnswerKind::Choice) {
    return a.canonical == b.canonical;
  }
  if (a.kind == AnswerKind::FreeText && b.kind == AnswerKind::FreeText) {
    return a.canonical == b.canonical;
  }
  // Cross-kind: retry the free-text side as a number or choice.
  if (a.kind == AnswerKind::FreeText) {
    AnswerValue ra = canonicalize_answer(a.canonical);
    if (ra.kind != AnswerKind::FreeText) return equivalent(ra, b);
    return false;
  }
  if (b.kind == AnswerKind::FreeText) return equivalent(b, a);
  return false;
}

struct VerifyResult {
  std::vector<bool> flags;
  bool any = false;
};

// Element-wise answer verification of rollouts against the gold answer plus
// the OR-fold used by the prefix binary search.
template <class TrajectoryLike>
VerifyResult verify_rollouts(const std::vector<TrajectoryLike>& rollouts,
                             const AnswerValue& gold) {
  if (rollouts.empty()) throw InvalidArgumentError("verify_rollouts: empty rollout list");
  VerifyResult r;
  r.flags.reserve(rollouts.size());
  for (const auto& t : rollouts) {
    bool ok = equivalent(t.final_answer, gold);
    r.flags.push_back(ok);
    r.any = r.any || ok;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Final-answer extraction from completion text.

// Extraction profile: regexes tried in order (first capture group wins)
// before the built-in heuristics. Benchmark-specific formats go here.
struct ExtractionProfile {
  std::vector<std::string> patterns;
};

inline std::optional<std::string> extract_final_answer(
    const std::string& text, const ExtractionProfile& profile = {}) {
  for (const auto& p : profile.patterns) {
    std::regex re(p, std::regex::icase);
    std::smatch m;
    std::string::const_iterator searched = text.begin();
    std::optional<std::string> last;
    while (std::regex_search(searched, text.end(), m, re)) {
      last = m.size() > 1 ? m[1].str() : m[0].str();
      searched = m.suffix().first;
    }
    if (last) return last;
  }

  // \boxed{...}, last occurrence.
  {
    static const std::regex boxed(R"(\\boxed\{([^{}]*)\})");
    std::smatch m;
    std::string::const_iterator searched = text.begin();
    std::optional<std::string> last;
    while (std::regex_search(searched, text.end(), m, boxed)) {
      last = m[1].str();
      searched = m.suffix().first;
    }
    if (last) return last;
  }

  // "Final answer: x" / "The answer is x", scanning lines bottom-up.
  {
    static const std::regex marker(
        R"((?:final answer|the answer is|answer)\s*[:=]?\s*(.+)$)", std::regex::icase);
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    lines.push_back(cur);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
      std::smatch m;
      if (std::regex_search(*it, m, marker)) return m[1].str();
    }
  }

  // Last numeric-looking token of the last non-empty line.
  {
    static const std::regex numberish(
        R"(([+-]?\d+(?:,\d{3})*(?:\.\d+)?(?:\s*/\s*\d+)?\s*(?:%|\xc2\xb0)?))");
    std::vector<std::string> lines;
    std::string cur;
    for (char c : text) {
      if (c == '\n') {
        lines.push_back(cur);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    lines.push_back(cur);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
      if (ans_detail::collapse_ws(*it).empty()) continue;
      std::smatch m;
      std::string::const_iterator searched = it->cbegin();
      std::optional<std::string> last;
      while (std::regex_search(searched, it->cend(), m, numberish)) {
        last = m[1].str();
        searched = m.suffix().first;
      }
      if (last) return last;
      break;
    }
  }
  return std::nullopt;
}

}  // namespace cotkit

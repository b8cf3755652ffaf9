#include "gg/aggregation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "gg/error.hpp"

namespace gg::aggregation {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

// Exact rational with int64 parts; nullopt on overflow or malformed input.
struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
};

std::optional<std::int64_t> checked_mul(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_mul_overflow(a, b, &r)) return std::nullopt;
  return r;
}

std::optional<std::int64_t> checked_add(std::int64_t a, std::int64_t b) {
  std::int64_t r;
  if (__builtin_add_overflow(a, b, &r)) return std::nullopt;
  return r;
}

std::optional<Rational> reduce(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  if (den < 0) {
    if (num == INT64_MIN || den == INT64_MIN) return std::nullopt;
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Rational{num, den};
}

// Parses [+-]digits[.digits] or [+-].digits
std::optional<Rational> parse_decimal(std::string_view s) {
  if (s.empty()) return std::nullopt;
  bool negative = false;
  if (s.front() == '+' || s.front() == '-') {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) return std::nullopt;
  std::int64_t num = 0;
  std::int64_t den = 1;
  bool seen_dot = false;
  bool seen_digit = false;
  for (char c : s) {
    if (c == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
      continue;
    }
    if (!is_digit(c)) return std::nullopt;
    seen_digit = true;
    auto m = checked_mul(num, 10);
    if (!m) return std::nullopt;
    auto a = checked_add(*m, c - '0');
    if (!a) return std::nullopt;
    num = *a;
    if (seen_dot) {
      auto d = checked_mul(den, 10);
      if (!d) return std::nullopt;
      den = *d;
    }
  }
  if (!seen_digit) return std::nullopt;
  return reduce(negative ? -num : num, den);
}

std::optional<Rational> divide(const Rational& a, const Rational& b) {
  if (b.num == 0) return std::nullopt;
  auto n = checked_mul(a.num, b.den);
  auto d = checked_mul(a.den, b.num);
  if (!n || !d) return std::nullopt;
  return reduce(*n, *d);
}

// Contents of a {...} group starting at s[pos] == '{'; advances pos past it.
std::optional<std::string_view> brace_group(std::string_view s, std::size_t& pos) {
  if (pos >= s.size() || s[pos] != '{') return std::nullopt;
  int depth = 0;
  for (std::size_t i = pos; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}') {
      if (--depth == 0) {
        auto inner = s.substr(pos + 1, i - pos - 1);
        pos = i + 1;
        return inner;
      }
    }
  }
  return std::nullopt;
}

std::optional<Rational> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  bool negative = false;
  std::string_view body = s;
  if (body.front() == '-') {
    negative = true;
    body = trim(body.substr(1));
  }
  for (std::string_view cmd : {"\\frac", "\\dfrac", "\\tfrac"}) {
    if (body.starts_with(cmd)) {
      std::size_t pos = cmd.size();
      auto top = brace_group(body, pos);
      auto bottom = brace_group(body, pos);
      if (!top || !bottom || pos != body.size()) return std::nullopt;
      auto a = parse_decimal(trim(*top));
      auto b = parse_decimal(trim(*bottom));
      if (!a || !b) return std::nullopt;
      auto r = divide(*a, *b);
      if (r && negative) r->num = -r->num;
      return r;
    }
  }
  if (auto slash = body.find('/'); slash != std::string_view::npos) {
    auto a = parse_decimal(trim(body.substr(0, slash)));
    auto b = parse_decimal(trim(body.substr(slash + 1)));
    if (!a || !b) return std::nullopt;
    auto r = divide(*a, *b);
    if (r && negative) r->num = -r->num;
    return r;
  }
  auto r = parse_decimal(body);
  if (r && negative) r->num = -r->num;
  return r;
}

std::string render(const Rational& r) {
  if (r.den == 1) return std::to_string(r.num);
  std::int64_t d = r.den;
  int twos = 0;
  int fives = 0;
  while (d % 2 == 0) { d /= 2; ++twos; }
  while (d % 5 == 0) { d /= 5; ++fives; }
  if (d != 1) {
    return std::to_string(r.num) + "/" + std::to_string(r.den);
  }
  // Terminating decimal: scale to 10^digits.
  const int digits = std::max(twos, fives);
  std::int64_t scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  auto scaled = checked_mul(r.num, scale / r.den);
  if (!scaled) return std::to_string(r.num) + "/" + std::to_string(r.den);
  const bool negative = *scaled < 0;
  const std::uint64_t mag = negative ? static_cast<std::uint64_t>(-(*scaled + 1)) + 1
                                     : static_cast<std::uint64_t>(*scaled);
  std::string whole = std::to_string(mag / static_cast<std::uint64_t>(scale));
  std::string frac = std::to_string(mag % static_cast<std::uint64_t>(scale));
  frac.insert(0, static_cast<std::size_t>(digits) - frac.size(), '0');
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  return (negative ? "-" : "") + whole + (frac.empty() ? "" : "." + frac);
}

}  // namespace

bool has_boxed_marker(std::string_view text) {
  return text.find(kBoxedMarker) != std::string_view::npos;
}

std::optional<ExtractedAnswer> extract_answer(std::string_view text) {
  const auto at = text.rfind(kBoxedMarker);
  if (at == std::string_view::npos) return std::nullopt;
  std::size_t pos = at + kBoxedMarker.size() - 1;  // at the '{'
  auto inner = brace_group(text, pos);
  if (!inner) return std::nullopt;
  ExtractedAnswer out;
  out.raw = std::string(*inner);
  out.canonical = normalize_answer(out.raw);
  return out;
}

std::string normalize_answer(std::string_view raw) {
  std::string_view s = trim(raw);
  while (s.size() >= 2 && s.front() == '$' && s.back() == '$') {
    s = trim(s.substr(1, s.size() - 2));
  }
  std::string cleaned = collapse_whitespace(s);
  if (auto r = parse_number(cleaned)) {
    return render(*r);
  }
  return cleaned;
}

VoteOutcome weighted_vote(std::span<const WeightedAnswer> answers) {
  if (answers.empty()) throw NoAnswerError();
  VoteOutcome out;
  for (const auto& a : answers) {
    if (!(a.weight >= 0.0) || !std::isfinite(a.weight)) {
      throw InvalidInput("weighted_vote: weights must be finite and non-negative");
    }
    auto& e = out.tally.entries[a.canonical];
    e.total_weight += a.weight;
    e.supporters += 1;
    e.max_weight = std::max(e.max_weight, a.weight);
  }
  const auto* best_key = &out.tally.entries.begin()->first;
  const auto* best = &out.tally.entries.begin()->second;
  for (const auto& [key, entry] : out.tally.entries) {
    if (&key == best_key) continue;
    const double scale = std::max(std::abs(entry.total_weight), std::abs(best->total_weight));
    const double diff = entry.total_weight - best->total_weight;
    const bool tied = std::abs(diff) <= 1e-12 * scale;
    // Map iteration is lexicographic, so on a full tie the earlier key stays.
    if ((!tied && diff > 0) || (tied && entry.max_weight > best->max_weight)) {
      best_key = &key;
      best = &entry;
    }
  }
  out.winner = *best_key;
  return out;
}

}  // namespace gg::aggregation

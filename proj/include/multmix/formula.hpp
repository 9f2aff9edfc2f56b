#ifndef MULTMIX_FORMULA_HPP
#define MULTMIX_FORMULA_HPP

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "multmix/dataset.hpp"
#include "multmix/error.hpp"

namespace multmix {

/// Multiplicative term mp(random, fixed): a per-level random slope of the
/// random factor on the centered effects of the fixed factor.
struct MultTerm {
  std::string random;
  std::string fixed;

  friend bool operator==(const MultTerm&, const MultTerm&) = default;
};

struct ModelSpec {
  std::string response;
  std::vector<std::string> fixed_factors;
  std::vector<std::string> random_intercepts;
  std::vector<std::pair<std::string, std::string>> random_interactions;
  std::optional<MultTerm> mult_term;
  bool has_intercept = true;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;

  bool has_random_intercept(const std::string& g) const {
    return std::find(random_intercepts.begin(), random_intercepts.end(), g) !=
           random_intercepts.end();
  }

  /// Interaction terms are unordered: (A:B) and (B:A) name the same term.
  bool has_random_interaction(const std::string& a, const std::string& b) const {
    return std::any_of(random_interactions.begin(), random_interactions.end(),
                       [&](const auto& t) {
                         return (t.first == a && t.second == b) ||
                                (t.first == b && t.second == a);
                       });
  }

  bool has_fixed(const std::string& f) const {
    return std::find(fixed_factors.begin(), fixed_factors.end(), f) != fixed_factors.end();
  }

  /// Every column the model reads, response excluded, without duplicates.
  std::vector<std::string> referenced_factors() const {
    std::vector<std::string> out;
    auto add = [&](const std::string& n) {
      if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    };
    for (const auto& f : fixed_factors) add(f);
    for (const auto& g : random_intercepts) add(g);
    for (const auto& [a, b] : random_interactions) {
      add(a);
      add(b);
    }
    if (mult_term) {
      add(mult_term->random);
      add(mult_term->fixed);
    }
    return out;
  }
};

/// Canonical text: intercept, fixed factors, random intercepts, random
/// interactions, then the multiplicative term.
inline std::string to_string(const ModelSpec& ms) {
  std::string s = ms.response + " ~ 1";
  for (const auto& f : ms.fixed_factors) s += " + " + f;
  for (const auto& g : ms.random_intercepts) s += " + (1|" + g + ")";
  for (const auto& [a, b] : ms.random_interactions) s += " + (1|" + a + ":" + b + ")";
  if (ms.mult_term) s += " + mp(" + ms.mult_term->random + "," + ms.mult_term->fixed + ")";
  return s;
}

namespace detail {

class FormulaParser {
 public:
  explicit FormulaParser(std::string_view src) : src_(src) {}

  ModelSpec parse() {
    ModelSpec ms;
    ms.response = ident("response name");
    expect('~');
    std::size_t n_mult = 0;
    do {
      skip_ws();
      const std::size_t at = pos_;
      term(ms, n_mult, at);
    } while (accept('+'));
    skip_ws();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    if (ms.mult_term && !ms.has_fixed(ms.mult_term->fixed))
      throw Error(ErrorKind::Semantic,
                  "fixed factor '" + ms.mult_term->fixed +
                      "' of the multiplicative term must appear in the mean structure");
    return ms;
  }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& msg) const { throw SyntaxError(pos_, msg); }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < src_.size() && src_[pos_] == c;
  }

  bool accept(char c) {
    if (peek(c)) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      skip_ws();
      fail(std::string("expected '") + c + "'");
    }
  }

  static bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }
  static bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  }

  std::string ident(const char* what) {
    skip_ws();
    if (pos_ >= src_.size() || !ident_start(src_[pos_]))
      fail(std::string("expected ") + what);
    const std::size_t start = pos_;
    while (pos_ < src_.size() && ident_char(src_[pos_])) ++pos_;
    return std::string(src_.substr(start, pos_ - start));
  }

  bool at_digit() {
    skip_ws();
    return pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]));
  }

  std::string number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    return std::string(src_.substr(start, pos_ - start));
  }

  static void add_unique(std::vector<std::string>& v, const std::string& name,
                         const std::string& what) {
    if (std::find(v.begin(), v.end(), name) != v.end())
      throw Error(ErrorKind::Semantic, "duplicate " + what + " term '" + name + "'");
    v.push_back(name);
  }

  void term(ModelSpec& ms, std::size_t& n_mult, std::size_t at) {
    if (at_digit()) {
      const std::string n = number();
      if (n == "1") return;
      if (n == "0")
        throw Error(ErrorKind::UnsupportedModel,
                    "models without an intercept are not supported");
      pos_ = at;
      fail("expected '1', a factor name, a random term or mp(...)");
    }
    if (accept('(')) {
      skip_ws();
      if (!at_digit()) fail("only random intercepts (1|g) are supported");
      const std::size_t one_at = pos_;
      if (number() != "1") {
        pos_ = one_at;
        fail("only random intercepts (1|g) are supported");
      }
      expect('|');
      const std::string g = ident("grouping factor");
      if (accept(':')) {
        const std::string h = ident("grouping factor");
        expect(')');
        if (g == h)
          throw Error(ErrorKind::Semantic, "interaction of '" + g + "' with itself");
        if (ms.has_random_interaction(g, h))
          throw Error(ErrorKind::Semantic,
                      "duplicate random interaction term '" + g + ":" + h + "'");
        ms.random_interactions.emplace_back(g, h);
      } else {
        expect(')');
        add_unique(ms.random_intercepts, g, "random intercept");
      }
      return;
    }
    const std::string name = ident("a term");
    if (name == "mp" && peek('(')) {
      expect('(');
      std::string r = ident("random factor of mp(...)");
      expect(',');
      std::string f = ident("fixed factor of mp(...)");
      expect(')');
      if (++n_mult > 1)
        throw Error(ErrorKind::UnsupportedModel,
                    "only one multiplicative term mp(...) is supported");
      if (r == f)
        throw Error(ErrorKind::Semantic, "mp(...) needs two different factors");
      ms.mult_term = MultTerm{std::move(r), std::move(f)};
      return;
    }
    add_unique(ms.fixed_factors, name, "fixed");
  }
};

}  // namespace detail

/// Parses "y ~ 1 + F + (1|G) + (1|G:F) + mp(G,F)". Whitespace-insensitive.
inline ModelSpec parse_formula(std::string_view src) {
  if (src.find_first_not_of(" \t\r\n") == std::string_view::npos)
    throw SyntaxError(0, "empty formula");
  return detail::FormulaParser(src).parse();
}

struct BoundFactor {
  std::string name;
  int n_levels = 0;
};

/// Result of checking a ModelSpec against a Dataset: each referenced column
/// with its level count.
struct ModelBinding {
  std::vector<BoundFactor> factors;

  int levels(const std::string& name) const {
    for (const auto& f : factors)
      if (f.name == name) return f.n_levels;
    throw Error(ErrorKind::UnknownFactor, "factor '" + name + "' is not bound");
  }
};

inline ModelBinding validate_against(const ModelSpec& ms, const Dataset& ds) {
  if (ms.response != ds.response_name())
    throw Error(ErrorKind::MissingColumn,
                "response '" + ms.response + "' is not the dataset response '" +
                    ds.response_name() + "'");
  if (ms.fixed_factors.size() > 1)
    throw Error(ErrorKind::UnsupportedModel,
                "at most one fixed factor is supported; combine factors at ingest");
  ModelBinding b;
  for (const auto& name : ms.referenced_factors()) {
    if (!ds.has_factor(name))
      throw Error(ErrorKind::MissingColumn, "unknown column '" + name + "'");
    const int n = level_counts(ds, name);
    if (n < 2)
      throw Error(ErrorKind::DegenerateFactor,
                  "factor '" + name + "' has a single level");
    b.factors.push_back({name, n});
  }
  return b;
}

}  // namespace multmix

#endif  // MULTMIX_FORMULA_HPP

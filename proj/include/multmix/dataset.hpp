#ifndef MULTMIX_DATASET_HPP
#define MULTMIX_DATASET_HPP

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/tokenizer.hpp>

#include "multmix/error.hpp"

namespace multmix {

/// A categorical column: one level index per observation plus the level
/// dictionary. Index k of `levels` is the label of code k.
struct Factor {
  std::vector<int> codes;
  std::vector<std::string> levels;

  int n_levels() const { return static_cast<int>(levels.size()); }
};

/// Encode labels in first-appearance order, or lexicographically when
/// `sort_levels` is set.
inline Factor encode_factor(const std::vector<std::string>& labels,
                            bool sort_levels = false) {
  Factor f;
  f.codes.reserve(labels.size());
  std::unordered_map<std::string, int> index;
  for (const auto& lab : labels) {
    auto [it, inserted] = index.try_emplace(lab, f.n_levels());
    if (inserted) f.levels.push_back(lab);
    f.codes.push_back(it->second);
  }
  if (sort_levels) {
    std::vector<int> order(f.levels.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return f.levels[a] < f.levels[b]; });
    std::vector<int> remap(order.size());
    std::vector<std::string> sorted;
    sorted.reserve(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      remap[order[k]] = static_cast<int>(k);
      sorted.push_back(f.levels[order[k]]);
    }
    for (auto& c : f.codes) c = remap[c];
    f.levels = std::move(sorted);
  }
  return f;
}

/// Long-format table: one numeric response and named categorical factors.
/// Immutable after construction.
class Dataset {
 public:
  Dataset() = default;

  /// Builds from already-encoded factors. Throws on any broken invariant.
  Dataset(std::string response_name, std::vector<double> response,
          std::vector<std::pair<std::string, Factor>> factors,
          std::size_t dropped = 0)
      : response_name_(std::move(response_name)),
        response_(std::move(response)),
        dropped_(dropped) {
    if (response_.empty())
      throw Error(ErrorKind::EmptyData, "dataset has no usable rows");
    for (auto& [name, f] : factors) {
      if (f.codes.size() != response_.size())
        throw Error(ErrorKind::InvalidArgument,
                    "factor '" + name + "' length differs from response");
      for (int c : f.codes)
        if (c < 0 || c >= f.n_levels())
          throw Error(ErrorKind::InvalidArgument,
                      "factor '" + name + "' has an out-of-range level code");
      if (factors_.count(name))
        throw Error(ErrorKind::InvalidArgument, "duplicate factor '" + name + "'");
      names_.push_back(name);
      factors_.emplace(name, std::move(f));
    }
  }

  /// Convenience for in-memory tables given as label columns.
  static Dataset from_labels(
      std::string response_name, std::vector<double> response,
      const std::vector<std::pair<std::string, std::vector<std::string>>>& cols,
      bool sort_levels = false) {
    std::vector<std::pair<std::string, Factor>> fs;
    for (const auto& [name, labels] : cols)
      fs.emplace_back(name, encode_factor(labels, sort_levels));
    return Dataset(std::move(response_name), std::move(response), std::move(fs));
  }

  std::size_t n_obs() const { return response_.size(); }
  const std::string& response_name() const { return response_name_; }
  const std::vector<double>& response() const { return response_; }
  const std::vector<std::string>& factor_names() const { return names_; }
  std::size_t dropped() const { return dropped_; }

  bool has_factor(const std::string& name) const { return factors_.count(name) > 0; }

  const Factor& factor(const std::string& name) const {
    auto it = factors_.find(name);
    if (it == factors_.end())
      throw Error(ErrorKind::UnknownFactor, "unknown factor '" + name + "'");
    return it->second;
  }

  /// Per-observation labels of a factor (decoding of the level indices).
  std::vector<std::string> labels(const std::string& name) const {
    const Factor& f = factor(name);
    std::vector<std::string> out;
    out.reserve(f.codes.size());
    for (int c : f.codes) out.push_back(f.levels[c]);
    return out;
  }

  /// Same table with a different response vector (simulation, rescaling).
  Dataset with_response(std::vector<double> y) const {
    if (y.size() != response_.size())
      throw Error(ErrorKind::InvalidArgument, "response length mismatch");
    Dataset d = *this;
    d.response_ = std::move(y);
    return d;
  }

  /// Rows reordered so that new row k is old row perm[k].
  Dataset permuted(const std::vector<std::size_t>& perm) const {
    if (perm.size() != n_obs())
      throw Error(ErrorKind::InvalidArgument, "permutation length mismatch");
    return rows(perm);
  }

  /// The listed rows, in the given order. Level dictionaries are kept whole.
  Dataset rows(const std::vector<std::size_t>& idx) const {
    if (idx.empty()) throw Error(ErrorKind::EmptyData, "row selection is empty");
    Dataset d = *this;
    d.response_.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (idx[k] >= n_obs()) throw Error(ErrorKind::InvalidArgument, "row index out of range");
      d.response_[k] = response_[idx[k]];
    }
    for (auto& [name, f] : d.factors_) {
      const auto& src = factors_.at(name).codes;
      f.codes.resize(idx.size());
      for (std::size_t k = 0; k < idx.size(); ++k) f.codes[k] = src[idx[k]];
    }
    return d;
  }

 private:
  std::string response_name_;
  std::vector<double> response_;
  std::vector<std::string> names_;
  std::map<std::string, Factor> factors_;
  std::size_t dropped_ = 0;
};

/// Number of distinct observed levels of a factor.
inline int level_counts(const Dataset& ds, const std::string& factor) {
  return ds.factor(factor).n_levels();
}

/// A derived factor whose labels are the source labels joined with ":".
struct CombineSpec {
  std::string name;
  std::vector<std::string> parts;
};

struct ReadOptions {
  bool sort_levels = false;
  std::vector<CombineSpec> combine;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline bool is_missing(std::string_view s) { return s.empty() || s == "NA"; }

inline std::vector<std::string> split_csv_line(const std::string& line) {
  using Sep = boost::escaped_list_separator<char>;
  boost::tokenizer<Sep> tok(line, Sep('\\', ',', '"'));
  std::vector<std::string> out;
  for (const auto& t : tok) out.emplace_back(trim(t));
  return out;
}

inline std::optional<double> parse_real(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Reads a comma-separated file with a header row. Empty cells and "NA" are
/// missing; rows missing the response or any requested factor are dropped and
/// counted in Dataset::dropped().
inline Dataset read_csv(std::istream& in, const std::string& response,
                        const std::vector<std::string>& factor_cols,
                        const ReadOptions& opts = {}) {
  std::string line;
  if (!std::getline(in, line))
    throw Error(ErrorKind::EmptyData, "input has no header row");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  const auto header = detail::split_csv_line(line);

  auto column = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw Error(ErrorKind::MissingColumn, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t ycol = column(response);
  // Every raw column needed: the requested factors that are not combined
  // outputs, plus all combine parts.
  std::vector<std::string> raw;
  auto add_raw = [&](const std::string& n) {
    if (std::find(raw.begin(), raw.end(), n) == raw.end()) raw.push_back(n);
  };
  auto find_combine = [&](const std::string& n) -> const CombineSpec* {
    for (const auto& c : opts.combine)
      if (c.name == n) return &c;
    return nullptr;
  };
  for (const auto& f : factor_cols) {
    if (const auto* c = find_combine(f)) {
      for (const auto& p : c->parts) add_raw(p);
    } else {
      add_raw(f);
    }
  }
  std::vector<std::size_t> raw_idx;
  for (const auto& n : raw) raw_idx.push_back(column(n));

  std::vector<double> y;
  std::vector<std::vector<std::string>> raw_vals(raw.size());
  std::size_t dropped = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() < header.size()) cells.resize(header.size());
    const std::string& ycell = cells[ycol];
    bool missing = detail::is_missing(ycell);
    for (std::size_t r = 0; r < raw.size() && !missing; ++r)
      missing = detail::is_missing(cells[raw_idx[r]]);
    if (missing) {
      ++dropped;
      continue;
    }
    auto v = detail::parse_real(ycell);
    if (!v)
      throw Error(ErrorKind::Parse, "cannot parse '" + ycell + "' as a number in column '" +
                                        response + "' at row " + std::to_string(lineno));
    y.push_back(*v);
    for (std::size_t r = 0; r < raw.size(); ++r) raw_vals[r].push_back(cells[raw_idx[r]]);
  }
  if (y.empty()) throw Error(ErrorKind::EmptyData, "no usable rows after removing missing values");

  auto raw_column = [&](const std::string& n) -> const std::vector<std::string>& {
    return raw_vals[static_cast<std::size_t>(
        std::find(raw.begin(), raw.end(), n) - raw.begin())];
  };
  std::vector<std::pair<std::string, Factor>> fs;
  for (const auto& f : factor_cols) {
    if (const auto* c = find_combine(f)) {
      std::vector<std::string> joined(y.size());
      for (std::size_t k = 0; k < y.size(); ++k) {
        for (std::size_t p = 0; p < c->parts.size(); ++p) {
          if (p) joined[k] += ':';
          joined[k] += raw_column(c->parts[p])[k];
        }
      }
      fs.emplace_back(f, encode_factor(joined, opts.sort_levels));
    } else {
      fs.emplace_back(f, encode_factor(raw_column(f), opts.sort_levels));
    }
  }
  return Dataset(response, std::move(y), std::move(fs), dropped);
}

inline Dataset read_csv(const std::string& path, const std::string& response,
                        const std::vector<std::string>& factor_cols,
                        const ReadOptions& opts = {}) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
  return read_csv(in, response, factor_cols, opts);
}

}  // namespace multmix

#endif  // MULTMIX_DATASET_HPP

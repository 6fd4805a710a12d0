#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace bhip {

enum class TargetKind { continuous, binary };

inline const char* to_string(TargetKind k) { return k == TargetKind::continuous ? "continuous" : "binary"; }

struct ColumnScale {
  double mean = 0.0;
  double sd = 1.0;
};

/// Record of the pooled affine transform applied by standardize().
struct Standardization {
  std::vector<ColumnScale> predictors;
  std::optional<ColumnScale> target;  // absent for binary targets
};

struct EnvironmentBlock {
  std::string label;
  Eigen::MatrixXd X;  // n_e x D
  Eigen::VectorXd y;  // n_e
};

/// Per-environment design matrices and targets sharing one column layout.
struct EnvironmentDataset {
  std::vector<EnvironmentBlock> environments;
  std::vector<std::string> predictor_names;
  std::string target_name = "y";
  TargetKind target_kind = TargetKind::continuous;
  std::optional<Standardization> standardization;

  std::size_t n_predictors() const { return predictor_names.size(); }
  std::size_t n_environments() const { return environments.size(); }
  std::size_t n_total() const {
    std::size_t n = 0;
    for (const auto& b : environments) n += static_cast<std::size_t>(b.y.size());
    return n;
  }

  void validate() const {
    if (environments.empty()) throw std::invalid_argument("dataset has no environments");
    const auto d = static_cast<Eigen::Index>(predictor_names.size());
    for (const auto& b : environments) {
      if (b.y.size() < 1) throw std::invalid_argument("environment '" + b.label + "' is empty");
      if (b.X.cols() != d || b.X.rows() != b.y.size())
        throw std::invalid_argument("environment '" + b.label + "' has inconsistent shape");
    }
    if (standardization) {
      for (const auto& c : standardization->predictors)
        if (!(c.sd > 0.0)) throw std::invalid_argument("standardization sd must be positive");
      if (standardization->target && !(standardization->target->sd > 0.0))
        throw std::invalid_argument("standardization sd must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Number formatting

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::optional<double> parse_double(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  if (b == e) return std::nullopt;
  const char* first = s.data() + b;
  if (*first == '+') ++first;
  double v = 0.0;
  auto res = std::from_chars(first, s.data() + e, v);
  if (res.ec != std::errc() || res.ptr != s.data() + e) return std::nullopt;
  return v;
}

// ---------------------------------------------------------------------------
// CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw std::invalid_argument("column '" + name + "' not found in CSV header");
    return static_cast<std::size_t>(it - header.begin());
  }
  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

/// RFC-4180 style reader: quoted fields, doubled quotes, CRLF or LF.
inline CsvTable parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool in_quotes = false, field_started = false, any = false;
  char c;
  auto end_field = [&] {
    record.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
    record.clear();
  };
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (field_started && !field.empty()) throw std::invalid_argument("CSV: stray quote inside unquoted field");
        in_quotes = true;
        field_started = true;
        break;
      case ',':
        end_field();
        break;
      case '\r':
        if (in.peek() == '\n') in.get(c);
        end_record();
        break;
      case '\n':
        end_record();
        break;
      default:
        field.push_back(c);
        field_started = true;
    }
  }
  if (in_quotes) throw std::invalid_argument("CSV: unterminated quoted field");
  if (any && (field_started || !field.empty() || !record.empty())) end_record();
  if (records.empty()) throw std::invalid_argument("CSV: missing header row");

  CsvTable t;
  t.header = std::move(records.front());
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].size() != t.header.size())
      throw std::invalid_argument("CSV: row " + std::to_string(i + 1) + " has " + std::to_string(records[i].size()) +
                                  " fields, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(records[i]));
  }
  return t;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return parse_csv(in);
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// ---------------------------------------------------------------------------
// Table -> dataset

enum class TargetKindOption { automatic, continuous, binary };

struct LoadOptions {
  TargetKindOption target_kind = TargetKindOption::automatic;
  std::vector<std::string> drop_columns;
};

namespace detail {

struct EncodedColumns {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;  // per output column, per row
};

inline void encode_predictor(const CsvTable& t, std::size_t col, EncodedColumns& out) {
  const std::string& name = t.header[col];
  std::vector<double> numeric;
  numeric.reserve(t.rows.size());
  bool is_numeric = true;
  for (const auto& row : t.rows) {
    if (row[col].empty()) throw std::invalid_argument("column '" + name + "' has a missing value");
    auto v = parse_double(row[col]);
    if (!v) {
      is_numeric = false;
      break;
    }
    numeric.push_back(*v);
  }
  if (is_numeric) {
    out.names.push_back(name);
    out.values.push_back(std::move(numeric));
    return;
  }
  // One-hot with the alphabetically first level dropped.
  std::set<std::string> levels;
  for (const auto& row : t.rows) levels.insert(row[col]);
  if (levels.size() < 2) throw std::invalid_argument("categorical column '" + name + "' has a single level");
  auto it = levels.begin();
  for (++it; it != levels.end(); ++it) {
    std::vector<double> dummy;
    dummy.reserve(t.rows.size());
    for (const auto& row : t.rows) dummy.push_back(row[col] == *it ? 1.0 : 0.0);
    out.names.push_back(name + "_" + *it);
    out.values.push_back(std::move(dummy));
  }
}

inline std::pair<std::vector<double>, TargetKind> encode_target(const CsvTable& t, std::size_t col,
                                                                TargetKindOption opt) {
  const std::string& name = t.header[col];
  std::vector<double> y;
  y.reserve(t.rows.size());
  bool is_numeric = true;
  for (const auto& row : t.rows) {
    auto v = parse_double(row[col]);
    if (!v) {
      is_numeric = false;
      break;
    }
    y.push_back(*v);
  }
  if (is_numeric) {
    bool zero_one = std::all_of(y.begin(), y.end(), [](double v) { return v == 0.0 || v == 1.0; });
    if (opt == TargetKindOption::binary && !zero_one)
      throw std::invalid_argument("target '" + name + "' is not binary");
    TargetKind kind = opt == TargetKindOption::binary || (opt == TargetKindOption::automatic && zero_one)
                          ? TargetKind::binary
                          : TargetKind::continuous;
    return {std::move(y), kind};
  }
  std::set<std::string> levels;
  for (const auto& row : t.rows) levels.insert(row[col]);
  if (levels.size() != 2 || opt == TargetKindOption::continuous)
    throw std::invalid_argument("target '" + name + "' is non-numeric and not a two-level factor");
  const std::string& positive = *std::next(levels.begin());
  y.clear();
  for (const auto& row : t.rows) y.push_back(row[col] == positive ? 1.0 : 0.0);
  return {std::move(y), TargetKind::binary};
}

}  // namespace detail

/// Groups rows by the environment column; blocks appear in order of first
/// occurrence and keep file order within each block.
inline EnvironmentDataset to_dataset(const CsvTable& t, const std::string& target_column,
                                     const std::string& env_column, const LoadOptions& opts = {}) {
  const std::size_t tcol = t.column(target_column);
  const std::size_t ecol = t.column(env_column);
  if (tcol == ecol) throw std::invalid_argument("target and environment columns must differ");
  if (t.rows.empty()) throw std::invalid_argument("CSV has no data rows");
  for (const auto& d : opts.drop_columns) (void)t.column(d);

  detail::EncodedColumns enc;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (c == tcol || c == ecol) continue;
    if (std::find(opts.drop_columns.begin(), opts.drop_columns.end(), t.header[c]) != opts.drop_columns.end())
      continue;
    detail::encode_predictor(t, c, enc);
  }
  auto [y, kind] = detail::encode_target(t, tcol, opts.target_kind);

  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& lab = t.rows[r][ecol];
    if (lab.empty()) throw std::invalid_argument("row " + std::to_string(r + 2) + " has an empty environment label");
    auto [it, inserted] = groups.try_emplace(lab);
    if (inserted) labels.push_back(lab);
    it->second.push_back(r);
  }

  EnvironmentDataset ds;
  ds.predictor_names = enc.names;
  ds.target_name = target_column;
  ds.target_kind = kind;
  const auto d = static_cast<Eigen::Index>(enc.names.size());
  for (const auto& lab : labels) {
    const auto& rows = groups[lab];
    if (rows.empty()) throw std::invalid_argument("environment '" + lab + "' is empty");
    EnvironmentBlock b;
    b.label = lab;
    b.X.resize(static_cast<Eigen::Index>(rows.size()), d);
    b.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      for (Eigen::Index j = 0; j < d; ++j) b.X(ii, j) = enc.values[static_cast<std::size_t>(j)][rows[i]];
      b.y(ii) = y[rows[i]];
    }
    ds.environments.push_back(std::move(b));
  }
  ds.validate();
  return ds;
}

inline EnvironmentDataset load_csv(const std::string& path, const std::string& target_column,
                                   const std::string& env_column, const LoadOptions& opts = {}) {
  return to_dataset(read_csv_file(path), target_column, env_column, opts);
}

/// Two environments from a numeric column: rows at or below its median form
/// environment "0", rows above form "1". The split column is not a predictor.
inline EnvironmentDataset derive_env_by_median(const CsvTable& t, const std::string& target_column,
                                               const std::string& split_column, const LoadOptions& opts = {}) {
  const std::size_t scol = t.column(split_column);
  std::vector<double> v;
  v.reserve(t.rows.size());
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto x = parse_double(t.rows[r][scol]);
    if (!x) throw std::invalid_argument("split column '" + split_column + "' is not numeric at row " +
                                        std::to_string(r + 2));
    v.push_back(*x);
  }
  if (v.empty()) throw std::invalid_argument("CSV has no data rows");
  auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (*mn == *mx) throw std::invalid_argument("split column '" + split_column + "' is constant");
  std::vector<double> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  std::string env_name = "__env__";
  while (t.has_column(env_name)) env_name += "_";
  CsvTable aug;
  aug.header = t.header;
  aug.header[scol] = env_name;
  aug.rows = t.rows;
  std::size_t n_low = 0;
  for (std::size_t r = 0; r < aug.rows.size(); ++r) {
    bool low = v[r] <= median;
    n_low += low;
    aug.rows[r][scol] = low ? "0" : "1";
  }
  if (n_low == 0 || n_low == n) throw std::invalid_argument("median split of '" + split_column + "' leaves an empty environment");
  auto ds = to_dataset(aug, target_column, env_name, opts);
  // Environment "0" (near the median or below) always comes first.
  if (ds.environments.front().label != "0") std::swap(ds.environments[0], ds.environments[1]);
  return ds;
}

inline void write_csv(const EnvironmentDataset& ds, std::ostream& out) {
  out << "env," << csv_escape(ds.target_name);
  for (const auto& n : ds.predictor_names) out << ',' << csv_escape(n);
  out << '\n';
  for (const auto& b : ds.environments) {
    for (Eigen::Index i = 0; i < b.y.size(); ++i) {
      out << csv_escape(b.label) << ',' << format_double(b.y(i));
      for (Eigen::Index j = 0; j < b.X.cols(); ++j) out << ',' << format_double(b.X(i, j));
      out << '\n';
    }
  }
}

inline void write_csv_file(const EnvironmentDataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_csv(ds, out);
}

// ---------------------------------------------------------------------------
// Standardization

namespace detail {

inline ColumnScale pooled_scale(const EnvironmentDataset& ds, Eigen::Index col /* -1: target */) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& b : ds.environments) {
    sum += col < 0 ? b.y.sum() : b.X.col(col).sum();
    n += static_cast<std::size_t>(b.y.size());
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& b : ds.environments) {
    if (col < 0)
      ss += (b.y.array() - mean).square().sum();
    else
      ss += (b.X.col(col).array() - mean).square().sum();
  }
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  return {mean, sd};
}

}  // namespace detail

/// Pooled (cross-environment) centering and scaling to unit sample sd.
/// Binary targets are left on the 0/1 scale.
inline EnvironmentDataset standardize(const EnvironmentDataset& in) {
  in.validate();
  EnvironmentDataset out = in;
  Standardization rec;
  const auto d = static_cast<Eigen::Index>(in.n_predictors());
  for (Eigen::Index j = 0; j < d; ++j) {
    ColumnScale s = detail::pooled_scale(in, j);
    if (!(s.sd > 1e-12 * std::max(1.0, std::abs(s.mean))))
      throw std::invalid_argument("predictor '" + in.predictor_names[static_cast<std::size_t>(j)] +
                                  "' has zero variance");
    for (auto& b : out.environments) b.X.col(j) = (b.X.col(j).array() - s.mean) / s.sd;
    rec.predictors.push_back(s);
  }
  if (in.target_kind == TargetKind::continuous) {
    ColumnScale s = detail::pooled_scale(in, -1);
    if (!(s.sd > 1e-12 * std::max(1.0, std::abs(s.mean))))
      throw std::invalid_argument("target '" + in.target_name + "' has zero variance");
    for (auto& b : out.environments) b.y = (b.y.array() - s.mean) / s.sd;
    rec.target = s;
  }
  if (in.standardization) {
    // Compose with the earlier transform so the record maps back to raw units.
    const auto& prev = *in.standardization;
    for (std::size_t j = 0; j < rec.predictors.size(); ++j) {
      auto& r = rec.predictors[j];
      const auto& p = prev.predictors[j];
      r = {p.mean + p.sd * r.mean, p.sd * r.sd};
    }
    if (rec.target && prev.target) rec.target = ColumnScale{prev.target->mean + prev.target->sd * rec.target->mean,
                                                            prev.target->sd * rec.target->sd};
  }
  out.standardization = rec;
  return out;
}

/// Pooled sample sd of the target as stored in the dataset.
inline double pooled_target_sd(const EnvironmentDataset& ds) { return detail::pooled_scale(ds, -1).sd; }

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const EnvironmentDataset& ds) {
  nlohmann::json j;
  j["target_name"] = ds.target_name;
  j["target_kind"] = to_string(ds.target_kind);
  j["predictor_names"] = ds.predictor_names;
  j["environments"] = nlohmann::json::array();
  for (const auto& b : ds.environments) {
    nlohmann::json e;
    e["label"] = b.label;
    nlohmann::json X = nlohmann::json::array();
    for (Eigen::Index i = 0; i < b.X.rows(); ++i) {
      std::vector<double> row(static_cast<std::size_t>(b.X.cols()));
      for (Eigen::Index k = 0; k < b.X.cols(); ++k) row[static_cast<std::size_t>(k)] = b.X(i, k);
      X.push_back(row);
    }
    e["X"] = std::move(X);
    e["y"] = std::vector<double>(b.y.data(), b.y.data() + b.y.size());
    j["environments"].push_back(std::move(e));
  }
  if (ds.standardization) {
    nlohmann::json s;
    s["predictors"] = nlohmann::json::array();
    for (const auto& c : ds.standardization->predictors) s["predictors"].push_back({{"mean", c.mean}, {"sd", c.sd}});
    if (ds.standardization->target)
      s["target"] = {{"mean", ds.standardization->target->mean}, {"sd", ds.standardization->target->sd}};
    j["standardization"] = std::move(s);
  } else {
    j["standardization"] = nullptr;
  }
  return j;
}

}  // namespace bhip

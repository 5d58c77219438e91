#include "io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>

#include "mselect/errors.hpp"

namespace mselect::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::optional<double> parse_number(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size()) return std::nullopt;
  return v;
}

struct KeyValue {
  std::size_t line;
  std::string key;
  std::string value;
};

// `key = value` lines; blank lines and '#' comments are skipped.
std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source) {
  std::vector<KeyValue> out;
  std::set<std::string> seen;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string t = trim(raw);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw InputError(source + ":" + std::to_string(line) + ": expected 'key = value'");
    KeyValue kv{line, trim(t.substr(0, eq)), trim(t.substr(eq + 1))};
    if (kv.key.empty()) throw InputError(source + ":" + std::to_string(line) + ": empty key");
    if (!seen.insert(kv.key).second)
      throw InputError(source + ":" + std::to_string(line) + ": duplicate key '" + kv.key + "'");
    out.push_back(std::move(kv));
  }
  return out;
}

std::string where(const std::string& source, std::size_t line) { return source + ":" + std::to_string(line) + ": "; }

bool parse_bool(const KeyValue& kv, const std::string& source) {
  if (kv.value == "true" || kv.value == "1") return true;
  if (kv.value == "false" || kv.value == "0") return false;
  throw InputError(where(source, kv.line) + "'" + kv.key + "' must be true or false");
}

// outcome index in a key such as outcome.2.value (1-based)
std::size_t outcome_index(const std::string& text, const KeyValue& kv, const std::string& source) {
  const auto v = parse_number(text);
  if (!v || *v < 1.0 || *v != std::floor(*v) || *v > 1e6)
    throw InputError(where(source, kv.line) + "bad outcome number in '" + kv.key + "'");
  return static_cast<std::size_t>(*v) - 1;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  return in;
}

Vector parse_vector(const std::string& text, const KeyValue& kv, const std::string& source) {
  const auto items = split_list(text, ',');
  Vector v(static_cast<Index>(items.size()));
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto x = parse_number(items[i]);
    if (!x || !std::isfinite(*x)) throw InputError(where(source, kv.line) + "'" + kv.key + "' has a non-numeric entry");
    v(static_cast<Index>(i)) = *x;
  }
  return v;
}

CovariateLaw parse_law(const std::string& text, const KeyValue& kv, const std::string& source) {
  static const std::regex re(R"(^\s*(normal|t|uniform)\s*\(([^)]*)\)\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, re))
    throw InputError(where(source, kv.line) + "covariate law must be normal(mean, sd), t(df) or uniform(lo, hi)");
  const Vector args = parse_vector(m[2].str(), kv, source);
  const std::string kind = m[1].str();
  if (kind == "t") {
    if (args.size() != 1) throw InputError(where(source, kv.line) + "t(df) takes one argument");
    return CovariateLaw::student_t(args(0));
  }
  if (args.size() != 2) throw InputError(where(source, kv.line) + kind + "(...) takes two arguments");
  return kind == "normal" ? CovariateLaw::normal(args(0), args(1)) : CovariateLaw::uniform(args(0), args(1));
}

}  // namespace

// ---------------------------------------------------------------------------

OutcomeDesign Schema::design() const {
  OutcomeDesign d;
  const Index extra = intercept ? 1 : 0;
  for (const auto& o : outcomes) {
    d.outcome_dims.push_back(static_cast<Index>(o.outcome_covariates.size()) + extra);
    d.selection_dims.push_back(static_cast<Index>(o.selection_covariates.size()) + extra);
  }
  return d;
}

std::vector<std::string> Schema::coefficient_labels() const {
  std::vector<std::string> out;
  for (const auto& o : outcomes) {
    if (intercept) out.emplace_back("(intercept)");
    out.insert(out.end(), o.outcome_covariates.begin(), o.outcome_covariates.end());
    if (intercept) out.emplace_back("(intercept)");
    out.insert(out.end(), o.selection_covariates.begin(), o.selection_covariates.end());
  }
  return out;
}

Schema parse_schema(std::istream& in, const std::string& source) {
  Schema schema;
  std::optional<std::size_t> declared;
  std::map<std::size_t, OutcomeColumns> cols;
  std::map<std::size_t, std::size_t> first_line;
  std::map<std::size_t, std::set<std::string>> fields;
  for (const KeyValue& kv : parse_key_values(in, source)) {
    if (kv.key == "intercept") {
      schema.intercept = parse_bool(kv, source);
      continue;
    }
    if (kv.key == "outcomes") {
      const auto v = parse_number(kv.value);
      if (!v || *v < 1.0 || *v != std::floor(*v))
        throw InputError(where(source, kv.line) + "'outcomes' must be a positive integer");
      declared = static_cast<std::size_t>(*v);
      continue;
    }
    const auto parts = split_list(kv.key, '.');
    if (parts.size() != 3 || parts[0] != "outcome")
      throw InputError(where(source, kv.line) + "unknown key '" + kv.key + "'");
    const std::size_t r = outcome_index(parts[1], kv, source);
    first_line.emplace(r, kv.line);
    OutcomeColumns& c = cols[r];
    const std::string& field = parts[2];
    if (field == "value") {
      c.value = kv.value;
    } else if (field == "indicator") {
      c.indicator = kv.value;
    } else if (field == "outcome_covariates" || field == "selection_covariates") {
      auto list = kv.value.empty() ? std::vector<std::string>{} : split_list(kv.value, ',');
      if (std::any_of(list.begin(), list.end(), [](const std::string& s) { return s.empty(); }))
        throw InputError(where(source, kv.line) + "empty column name in '" + kv.key + "'");
      (field == "outcome_covariates" ? c.outcome_covariates : c.selection_covariates) = std::move(list);
    } else {
      throw InputError(where(source, kv.line) + "unknown field '" + field + "'");
    }
    if ((field == "value" || field == "indicator") && kv.value.empty())
      throw InputError(where(source, kv.line) + "'" + kv.key + "' needs a column name");
    fields[r].insert(field);
  }
  if (cols.empty()) throw InputError(source + ": no outcomes declared");
  if (cols.rbegin()->first + 1 != cols.size())
    throw InputError(source + ": outcomes must be numbered 1.." + std::to_string(cols.size()) + " without gaps");
  if (declared && *declared != cols.size())
    throw InputError(source + ": 'outcomes' says " + std::to_string(*declared) + " but " +
                     std::to_string(cols.size()) + " are described");
  for (const auto& [r, c] : cols) {
    for (const char* f : {"value", "indicator"})
      if (!fields[r].count(f))
        throw InputError(where(source, first_line[r]) + "outcome " + std::to_string(r + 1) + " lacks '" + f + "'");
    if (!schema.intercept && (c.outcome_covariates.empty() || c.selection_covariates.empty()))
      throw InputError(where(source, first_line[r]) + "outcome " + std::to_string(r + 1) +
                       " has an empty equation and no intercept");
    schema.outcomes.push_back(c);
  }
  return schema;
}

Schema read_schema(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_schema(in, path.string());
}

std::string schema_text(const Schema& schema) {
  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s;
  };
  std::ostringstream os;
  os << "outcomes = " << schema.outcomes.size() << "\n";
  os << "intercept = " << (schema.intercept ? "true" : "false") << "\n";
  for (std::size_t r = 0; r < schema.outcomes.size(); ++r) {
    const auto& o = schema.outcomes[r];
    const std::string k = "outcome." + std::to_string(r + 1) + ".";
    os << k << "value = " << o.value << "\n";
    os << k << "indicator = " << o.indicator << "\n";
    os << k << "outcome_covariates = " << join(o.outcome_covariates) << "\n";
    os << k << "selection_covariates = " << join(o.selection_covariates) << "\n";
  }
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) throw InputError("unterminated quoted field");
  out.push_back(cur);
  return out;
}

Dataset parse_dataset(std::istream& in, const Schema& schema, const std::string& source) {
  std::string raw;
  std::size_t line = 0;
  std::vector<std::string> header;
  while (std::getline(in, raw)) {
    ++line;
    const std::string t = trim(raw);
    if (t.empty() || t.front() == '#') continue;
    try {
      header = split_csv_line(raw);
    } catch (const InputError& e) {
      throw InputError(where(source, line) + e.what());
    }
    for (auto& h : header) h = trim(h);
    break;
  }
  if (header.empty()) throw InputError(source + ": missing header row");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (!index.emplace(header[i], i).second)
      throw InputError(where(source, line) + "duplicate column '" + header[i] + "'");
  auto column = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw InputError(where(source, line) + "schema column '" + name + "' not in header");
    return it->second;
  };
  struct Cols {
    std::size_t value, indicator;
    std::vector<std::size_t> x, w;
  };
  std::vector<Cols> cols;
  for (const auto& o : schema.outcomes) {
    Cols c{column(o.value), column(o.indicator), {}, {}};
    for (const auto& n : o.outcome_covariates) c.x.push_back(column(n));
    for (const auto& n : o.selection_covariates) c.w.push_back(column(n));
    cols.push_back(std::move(c));
  }

  const std::size_t r = schema.outcomes.size();
  const Index extra = schema.intercept ? 1 : 0;
  Dataset ds;
  ds.observed.assign(r, 0);
  ds.unobserved.assign(r, 0);
  while (std::getline(in, raw)) {
    ++line;
    const std::string t = trim(raw);
    if (t.empty() || t.front() == '#') continue;
    std::vector<std::string> f;
    try {
      f = split_csv_line(raw);
    } catch (const InputError& e) {
      throw InputError(where(source, line) + e.what());
    }
    if (f.size() != header.size())
      throw InputError(where(source, line) + "expected " + std::to_string(header.size()) + " fields, found " +
                       std::to_string(f.size()));
    auto number = [&](std::size_t col) {
      const auto v = parse_number(f[col]);
      if (!v || !std::isfinite(*v))
        throw InputError(where(source, line) + "column '" + header[col] + "' must be a finite number, got '" +
                         trim(f[col]) + "'");
      return *v;
    };
    ObservationRecord rec;
    for (std::size_t k = 0; k < r; ++k) {
      const Cols& c = cols[k];
      const std::string ind = trim(f[c.indicator]);
      if (ind != "0" && ind != "1")
        throw InputError(where(source, line) + "indicator column '" + header[c.indicator] + "' must be 0 or 1, got '" +
                         ind + "'");
      const int sel = ind == "1" ? 1 : 0;
      const bool has_value = !trim(f[c.value]).empty();
      if (sel == 1 && !has_value)
        throw InputError(where(source, line) + "outcome column '" + header[c.value] + "' is empty but '" +
                         header[c.indicator] + "' = 1");
      if (sel == 0 && has_value)
        throw InputError(where(source, line) + "outcome column '" + header[c.value] + "' must be empty when '" +
                         header[c.indicator] + "' = 0");
      Vector x(static_cast<Index>(c.x.size()) + extra), w(static_cast<Index>(c.w.size()) + extra);
      if (extra) x(0) = w(0) = 1.0;
      for (std::size_t j = 0; j < c.x.size(); ++j) x(static_cast<Index>(j) + extra) = number(c.x[j]);
      for (std::size_t j = 0; j < c.w.size(); ++j) w(static_cast<Index>(j) + extra) = number(c.w[j]);
      rec.x.push_back(std::move(x));
      rec.w.push_back(std::move(w));
      rec.selected.push_back(sel);
      rec.y.push_back(sel ? std::optional<double>(number(c.value)) : std::nullopt);
      (sel ? ds.observed : ds.unobserved)[k]++;
    }
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) throw InputError(source + ": no data rows");
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path, const Schema& schema) {
  auto in = open_input(path);
  return parse_dataset(in, schema, path.string());
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::string& preamble)
    : out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw InputError("cannot write '" + path.string() + "'");
  std::istringstream lines(preamble);
  std::string l;
  while (std::getline(lines, l)) out_ << "# " << l << "\n";
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const std::string& f = fields[i];
    if (i) out_ << ',';
    if (f.find_first_of(",\"\n") != std::string::npos) {
      out_ << '"';
      for (char c : f) {
        if (c == '"') out_ << '"';
        out_ << c;
      }
      out_ << '"';
    } else {
      out_ << f;
    }
  }
  out_ << "\n";
  if (!out_) throw std::runtime_error("write failed");
}

ModelParams read_parameter_table(const std::filesystem::path& path, const OutcomeDesign& design) {
  auto in = open_input(path);
  const std::string source = path.string();
  std::string raw;
  std::size_t line = 0;
  std::vector<std::string> header;
  std::size_t name_col = 0, value_col = 0;
  const std::vector<std::string> names = parameter_names(design);
  std::map<std::string, double> values;
  while (std::getline(in, raw)) {
    ++line;
    const std::string t = trim(raw);
    if (t.empty() || t.front() == '#') continue;
    auto f = split_csv_line(raw);
    if (header.empty()) {
      header = f;
      const auto n = std::find(header.begin(), header.end(), "parameter");
      auto v = std::find(header.begin(), header.end(), "estimate");
      if (v == header.end()) v = std::find(header.begin(), header.end(), "value");
      if (n == header.end() || v == header.end())
        throw InputError(where(source, line) + "header needs a 'parameter' column and an 'estimate' or 'value' column");
      name_col = static_cast<std::size_t>(n - header.begin());
      value_col = static_cast<std::size_t>(v - header.begin());
      continue;
    }
    if (f.size() != header.size()) throw InputError(where(source, line) + "wrong number of fields");
    const auto v = parse_number(f[value_col]);
    if (!v || !std::isfinite(*v)) throw InputError(where(source, line) + "value must be a finite number");
    if (std::find(names.begin(), names.end(), f[name_col]) == names.end())
      throw InputError(where(source, line) + "parameter '" + f[name_col] + "' does not belong to the schema");
    if (!values.emplace(f[name_col], *v).second)
      throw InputError(where(source, line) + "parameter '" + f[name_col] + "' repeated");
  }
  Vector flat(static_cast<Index>(names.size()));
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto it = values.find(names[i]);
    if (it == values.end()) throw InputError(source + ": parameter '" + names[i] + "' missing");
    flat(static_cast<Index>(i)) = it->second;
  }
  ModelParams p = unflatten_params(flat, design);
  try {
    p.validate();
  } catch (const Error& e) {
    throw InputError(source + ": " + e.what());
  }
  return p;
}

Scenario parse_scenario(std::istream& in, const std::string& source) {
  Scenario s;
  s.name = "custom";
  std::map<std::size_t, Vector> beta, gamma;
  std::map<std::size_t, std::array<CovariateLaw, 2>> laws;
  bool have_sigma = false, have_rho = false, have_psi = false;
  std::size_t psi_line = 0;
  for (const KeyValue& kv : parse_key_values(in, source)) {
    if (kv.key == "sigma" || kv.key == "rho") {
      const auto v = parse_number(kv.value);
      if (!v || !std::isfinite(*v)) throw InputError(where(source, kv.line) + "'" + kv.key + "' must be a number");
      (kv.key == "sigma" ? s.truth.sigma : s.truth.rho) = *v;
      (kv.key == "sigma" ? have_sigma : have_rho) = true;
      continue;
    }
    if (kv.key == "name") {
      s.name = kv.value;
      continue;
    }
    if (kv.key == "psi") {
      const auto rows = split_list(kv.value, ';');
      const auto dim = static_cast<Index>(rows.size());
      s.truth.psi.resize(dim, dim);
      for (Index i = 0; i < dim; ++i) {
        const Vector row = parse_vector(rows[static_cast<std::size_t>(i)], kv, source);
        if (row.size() != dim) throw InputError(where(source, kv.line) + "psi must be square");
        s.truth.psi.row(i) = row.transpose();
      }
      have_psi = true;
      psi_line = kv.line;
      continue;
    }
    const auto parts = split_list(kv.key, '.');
    if (parts.size() != 2) throw InputError(where(source, kv.line) + "unknown key '" + kv.key + "'");
    const std::size_t r = outcome_index(parts[1], kv, source);
    if (parts[0] == "beta") {
      beta[r] = parse_vector(kv.value, kv, source);
    } else if (parts[0] == "gamma") {
      gamma[r] = parse_vector(kv.value, kv, source);
    } else if (parts[0] == "covariates") {
      // split on the commas between the two laws, not inside them
      static const std::regex re(R"(^\s*([a-z]+\s*\([^)]*\))\s*,\s*([a-z]+\s*\([^)]*\))\s*$)");
      std::smatch m;
      if (!std::regex_match(kv.value, m, re))
        throw InputError(where(source, kv.line) + "'" + kv.key + "' needs two covariate laws");
      laws[r] = {parse_law(m[1].str(), kv, source), parse_law(m[2].str(), kv, source)};
    } else {
      throw InputError(where(source, kv.line) + "unknown key '" + kv.key + "'");
    }
  }
  if (!have_sigma || !have_rho || !have_psi) throw InputError(source + ": sigma, rho and psi are required");
  const std::size_t r = static_cast<std::size_t>(s.truth.psi.rows());
  if (beta.size() != r || gamma.size() != r || laws.size() != r || (r > 0 && beta.rbegin()->first + 1 != r) ||
      (r > 0 && gamma.rbegin()->first + 1 != r) || (r > 0 && laws.rbegin()->first + 1 != r))
    throw InputError(where(source, psi_line) + "psi has " + std::to_string(r) +
                     " rows; beta.k, gamma.k and covariates.k are required for k = 1.." + std::to_string(r));
  for (std::size_t k = 0; k < r; ++k) {
    s.truth.beta.push_back(beta[k]);
    s.truth.gamma.push_back(gamma[k]);
    s.laws.push_back(laws[k]);
  }
  try {
    s.validate();
  } catch (const Error& e) {
    throw InputError(source + ": " + e.what());
  }
  return s;
}

Scenario read_scenario(const std::string& spec) {
  if (spec == "1") return scenario1();
  if (spec == "2") return scenario2();
  const std::string prefix = "custom:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::filesystem::path path = spec.substr(prefix.size());
    auto in = open_input(path);
    return parse_scenario(in, path.string());
  }
  throw InputError("scenario must be 1, 2 or custom:<file>, got '" + spec + "'");
}

}  // namespace mselect::cli

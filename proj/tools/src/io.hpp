#pragma once

// File formats of the command-line tool: schema, dataset, parameter tables,
// custom scenarios and the CSV writer.

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mselect/model.hpp"
#include "mselect/sim.hpp"

namespace mselect::cli {

/// Malformed user input; the message carries the file and line when known.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutcomeColumns {
  std::string value;
  std::string indicator;
  std::vector<std::string> outcome_covariates;
  std::vector<std::string> selection_covariates;
};

/// Column layout of a dataset. Key-value text, one `key = value` per line:
///   outcomes = 2
///   intercept = true
///   outcome.1.value = lwage
///   outcome.1.indicator = inlf
///   outcome.1.outcome_covariates = educ, exper
///   outcome.1.selection_covariates = educ, exper, age
struct Schema {
  std::vector<OutcomeColumns> outcomes;
  bool intercept = true;

  OutcomeDesign design() const;
  /// Covariate label of every coefficient, in stacked coefficient order.
  std::vector<std::string> coefficient_labels() const;
};

Schema parse_schema(std::istream& in, const std::string& source);
Schema read_schema(const std::filesystem::path& path);
std::string schema_text(const Schema& schema);

struct Dataset {
  std::vector<ObservationRecord> records;
  std::vector<std::size_t> observed;    ///< per outcome
  std::vector<std::size_t> unobserved;  ///< per outcome
};

/// Reads a CSV with a mandatory header. Lines starting with '#' are skipped.
/// Unobserved outcomes are empty fields.
Dataset parse_dataset(std::istream& in, const Schema& schema, const std::string& source);
Dataset read_dataset(const std::filesystem::path& path, const Schema& schema);

/// Splits one CSV line; supports double-quoted fields.
std::vector<std::string> split_csv_line(const std::string& line);

/// 17 significant digits, "nan"/"inf" spelled out.
std::string fmt(double v);

/// Writes `# ` prefixed header lines, then the rows.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& preamble);
  void row(const std::vector<std::string>& fields);

 private:
  std::ofstream out_;
};

/// Parameter table with a `parameter` column and an `estimate` or `value`
/// column; rows are matched by parameter name.
ModelParams read_parameter_table(const std::filesystem::path& path, const OutcomeDesign& design);

/// Custom scenario, key-value text:
///   sigma = 2
///   rho = 0.6
///   psi = 1, 0.4; 0.4, 1
///   beta.1 = 1, 0.3          (intercept, slope on v1)
///   gamma.1 = 1, 0.3, -0.7   (intercept, v1, v2)
///   covariates.1 = normal(0, 1), t(6)
/// Outcomes are numbered from 1 without gaps.
Scenario parse_scenario(std::istream& in, const std::string& source);
Scenario read_scenario(const std::string& spec);  ///< "1", "2" or "custom:<file>"

}  // namespace mselect::cli

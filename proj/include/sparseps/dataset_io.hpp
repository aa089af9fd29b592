#pragma once

#include "sparseps/bsps.hpp"
#include "sparseps/model.hpp"
#include "sparseps/simulation.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace sparseps {

/// A dataset read from CSV together with its covariate column names.
struct CsvDataset {
  Dataset data;
  std::vector<std::string> covariate_names;
};

/// Header row `y,delta,<covariates...>`; one unit per row. y is left empty
/// where delta = 0. The intercept column is added on read. Malformed input
/// throws DataError naming the line and column.
CsvDataset read_dataset_csv(std::istream& in);
CsvDataset read_dataset_csv(const std::string& path);

/// Inverse of read_dataset_csv; the intercept column is dropped. Missing
/// names default to x2, x3, ...
void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::vector<std::string>& covariate_names = {});

/// One row per kept draw: iteration, theta, phi_*, z_*, and for optimal-sampler
/// output u_*, beta_*, sigma2_e.
void write_chain_csv(std::ostream& out, const PosteriorSample& sample);

/// Column order is fixed; absent values are empty fields.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows);
std::vector<MetricsRow> read_metrics_csv(std::istream& in);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace sparseps

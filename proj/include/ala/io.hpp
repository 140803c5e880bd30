#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ala/data_model.hpp"
#include "ala/search.hpp"

namespace ala {

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  Matrix values;

  /// Column index, or -1.
  int find(const std::string& name) const;
};

/// Throws ParseError naming the file and line of the first bad cell.
CsvTable read_csv(const std::string& path);
void write_csv(const std::string& path, const CsvTable& table);

struct IngestOptions {
  std::string response = "y";
  /// Event indicator column (1 = observed); AFT only.
  std::optional<std::string> status;
  /// Prepend a forced "(Intercept)" group.
  bool add_intercept = true;
  /// Centre and scale every covariate column to unit variance.
  bool standardize = false;
  int max_groups = -1;
};

struct Dataset {
  std::shared_ptr<const DesignMatrix> design;
  Vector y;
  std::optional<SurvivalData> surv;
  /// User group id of each design group; -1 for the added intercept.
  std::vector<long> group_ids;
  ConstraintSet constraints{0};
};

/// Reads data.csv, groups.csv ("column,group") and optionally a
/// constraints.csv with "child_group,parent_group" rows. Columns are ordered
/// by group id, keeping file order within a group; data columns absent from
/// groups.csv are ignored.
Dataset ingest(const std::string& data_csv, const std::string& groups_csv,
               const std::optional<std::string>& constraints_csv,
               const IngestOptions& options = {});

/// Writes the covariates (without an added intercept) and response back out
/// so that ingest() reproduces the same design.
void export_dataset(const Dataset& data, const std::string& data_csv,
                    const std::string& groups_csv,
                    const std::string& response = "y",
                    const std::string& status = "status");

/// Cubic B-spline basis of x with interior knots at equispaced quantiles,
/// residualized as a block against [1, x] and reduced to `dim` orthogonal
/// columns scaled to unit mean square.
Matrix spline_deviation_basis(const Vector& x, int dim = 5);

/// Adds a spline-deviation group for each listed column of data.csv and
/// writes the expanded data, a groups file and a constraints file in which
/// each spline group requires its linear term.
void expand_splines(const std::string& data_csv, const std::vector<std::string>& columns,
                    const std::string& response, const std::string& out_data,
                    const std::string& out_groups, const std::string& out_constraints,
                    int dim = 5, const std::vector<std::string>& keep = {});

/// "model,groups,size,log_score,log_prior,prob,count" with one row per model.
void write_models_csv(const std::string& path, const PosteriorSummary& summary,
                      const Dataset& data);
/// "group,columns,inclusion[,inclusion_rb]".
void write_inclusion_csv(const std::string& path, const PosteriorSummary& summary,
                         const Dataset& data);

/// Space-separated user group ids of the active groups.
std::string model_groups(const ModelId& model, const Dataset& data);

}  // namespace ala

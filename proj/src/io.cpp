#include "ala/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unsupported/Eigen/Splines>

#include "ala/errors.hpp"

namespace ala {
namespace {

std::string Trim(std::string s) {
  auto space = [](unsigned char c) { return std::isspace(c) != 0; };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), space));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> SplitLine(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
      cell += c;
    } else if (c == ',' && !quoted) {
      out.push_back(Trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.push_back(Trim(cell));
  return out;
}

bool ParseDouble(const std::string& s, double* out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), *out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

long ParseLong(const std::string& s, const std::string& where) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(where + ": expected an integer group id, got '" + s + "'");
  }
  return v;
}

/// Non-empty lines with their 1-based line numbers.
std::vector<std::pair<int, std::string>> ReadLines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  std::vector<std::pair<int, std::string>> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (Trim(line).empty()) continue;
    out.emplace_back(number, line);
  }
  return out;
}

std::string FormatDouble(double v) {
  std::ostringstream s;
  s << std::setprecision(17) << v;
  return s.str();
}

std::ofstream OpenOut(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

}  // namespace

int CsvTable::find(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  const auto lines = ReadLines(path);
  if (lines.empty()) throw ParseError(path + ": empty file, expected a header row");
  CsvTable table;
  table.header = SplitLine(lines.front().second);
  std::set<std::string> seen;
  for (const auto& h : table.header) {
    if (h.empty()) throw ParseError(path + ":" + std::to_string(lines.front().first) + ": empty column name");
    if (!seen.insert(h).second) throw ParseError(path + ": duplicate column '" + h + "'");
  }
  const int cols = static_cast<int>(table.header.size());
  table.values.resize(static_cast<Eigen::Index>(lines.size() - 1), cols);
  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto& [number, line] = lines[r];
    const auto cells = SplitLine(line);
    const std::string where = path + ":" + std::to_string(number);
    if (static_cast<int>(cells.size()) != cols) {
      throw ParseError(where + ": expected " + std::to_string(cols) + " fields, found " +
                       std::to_string(cells.size()));
    }
    for (int c = 0; c < cols; ++c) {
      double v = 0.0;
      if (!ParseDouble(cells[c], &v)) {
        throw ParseError(where + ": non-numeric value '" + cells[c] + "' in column '" +
                         table.header[c] + "'");
      }
      table.values(static_cast<Eigen::Index>(r - 1), c) = v;
    }
  }
  return table;
}

void write_csv(const std::string& path, const CsvTable& table) {
  auto out = OpenOut(path);
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    out << (c ? "," : "") << table.header[c];
  }
  out << "\n";
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
      out << (c ? "," : "") << FormatDouble(table.values(r, c));
    }
    out << "\n";
  }
}

Dataset ingest(const std::string& data_csv, const std::string& groups_csv,
               const std::optional<std::string>& constraints_csv,
               const IngestOptions& options) {
  const CsvTable data = read_csv(data_csv);
  const int yc = data.find(options.response);
  if (yc < 0) throw ParseError(data_csv + ": missing response column '" + options.response + "'");
  int sc = -1;
  if (options.status) {
    sc = data.find(*options.status);
    if (sc < 0) throw ParseError(data_csv + ": missing status column '" + *options.status + "'");
  }

  // column name -> group id
  std::map<std::string, long> group_of;
  const auto glines = ReadLines(groups_csv);
  for (std::size_t i = 0; i < glines.size(); ++i) {
    const auto& [number, line] = glines[i];
    const auto cells = SplitLine(line);
    const std::string where = groups_csv + ":" + std::to_string(number);
    if (cells.size() != 2) throw ParseError(where + ": expected 'column,group'");
    if (i == 0 && data.find(cells[0]) < 0) {
      long ignored = 0;
      auto [p, ec] = std::from_chars(cells[1].data(), cells[1].data() + cells[1].size(), ignored);
      if (ec != std::errc() || p != cells[1].data() + cells[1].size()) continue;  // header row
    }
    if (data.find(cells[0]) < 0) {
      throw ParseError(where + ": column '" + cells[0] + "' not found in " + data_csv);
    }
    if (cells[0] == options.response || (options.status && cells[0] == *options.status)) {
      throw ParseError(where + ": column '" + cells[0] + "' is the response");
    }
    if (!group_of.emplace(cells[0], ParseLong(cells[1], where)).second) {
      throw ParseError(where + ": column '" + cells[0] + "' listed twice");
    }
  }
  if (group_of.empty()) throw ParseError(groups_csv + ": no covariate columns");

  std::vector<long> ids;
  for (const auto& [name, id] : group_of) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  const int n = static_cast<int>(data.values.rows());
  std::vector<int> cols;
  std::vector<int> sizes;
  std::vector<std::string> names;
  Dataset out;
  if (options.add_intercept) {
    sizes.push_back(1);
    names.push_back("(Intercept)");
    out.group_ids.push_back(-1);
  }
  for (long id : ids) {
    int size = 0;
    for (std::size_t c = 0; c < data.header.size(); ++c) {
      auto it = group_of.find(data.header[c]);
      if (it != group_of.end() && it->second == id) {
        cols.push_back(static_cast<int>(c));
        names.push_back(data.header[c]);
        ++size;
      }
    }
    sizes.push_back(size);
    out.group_ids.push_back(id);
  }

  const int offset = options.add_intercept ? 1 : 0;
  Matrix X(n, static_cast<int>(cols.size()) + offset);
  if (options.add_intercept) X.col(0).setOnes();
  for (std::size_t k = 0; k < cols.size(); ++k) {
    Vector x = data.values.col(cols[k]);
    if (options.standardize) {
      const double mean = x.mean();
      const double sd = std::sqrt((x.array() - mean).square().sum() / std::max(1, n - 1));
      if (sd > 0) x = (x.array() - mean) / sd;
    }
    X.col(static_cast<Eigen::Index>(k) + offset) = x;
  }
  const std::optional<int> forced =
      options.add_intercept ? std::optional<int>(0) : std::nullopt;
  out.design = std::make_shared<const DesignMatrix>(std::move(X), sizes, forced, names);
  out.y = data.values.col(yc);
  if (sc >= 0) {
    Eigen::VectorXi status(n);
    for (int i = 0; i < n; ++i) {
      const double s = data.values(i, sc);
      if (s != 0.0 && s != 1.0) {
        throw ParseError(data_csv + ":" + std::to_string(i + 2) + ": status must be 0 or 1");
      }
      status[i] = static_cast<int>(s);
    }
    out.surv = SurvivalData(out.y, status);
  }

  auto index_of = [&](long id, const std::string& where) {
    auto it = std::find(out.group_ids.begin(), out.group_ids.end(), id);
    if (it == out.group_ids.end() || id < 0) {
      throw ParseError(where + ": unknown group id " + std::to_string(id));
    }
    return static_cast<int>(it - out.group_ids.begin());
  };
  std::vector<std::pair<int, int>> deps;
  if (constraints_csv) {
    const auto clines = ReadLines(*constraints_csv);
    for (std::size_t i = 0; i < clines.size(); ++i) {
      const auto& [number, line] = clines[i];
      const auto cells = SplitLine(line);
      const std::string where = *constraints_csv + ":" + std::to_string(number);
      if (cells.size() != 2) throw ParseError(where + ": expected 'child_group,parent_group'");
      long child = 0;
      auto [p, ec] = std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), child);
      if (i == 0 && (ec != std::errc() || p != cells[0].data() + cells[0].size())) continue;
      deps.emplace_back(index_of(ParseLong(cells[0], where), where),
                        index_of(ParseLong(cells[1], where), where));
    }
    if (auto cycle = ConstraintSet::FindCycle(static_cast<int>(sizes.size()), deps)) {
      std::string path;
      for (int g : *cycle) {
        path += (path.empty() ? "" : " -> ") + std::to_string(out.group_ids[g]);
      }
      throw ParseError(*constraints_csv + ": dependency cycle " + path);
    }
  }
  out.constraints = ConstraintSet(static_cast<int>(sizes.size()), options.max_groups,
                                  std::move(deps), forced);
  return out;
}

void export_dataset(const Dataset& data, const std::string& data_csv,
                    const std::string& groups_csv, const std::string& response,
                    const std::string& status) {
  const DesignMatrix& d = *data.design;
  CsvTable table;
  std::vector<int> keep;
  for (int j = 0; j < d.J(); ++j) {
    if (data.group_ids[j] < 0) continue;
    for (int c = d.group(j).begin; c < d.group(j).end; ++c) keep.push_back(c);
  }
  const bool surv = data.surv.has_value();
  table.values.resize(d.n(), static_cast<Eigen::Index>(keep.size()) + (surv ? 2 : 1));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    table.header.push_back(d.column_names()[keep[k]]);
    table.values.col(static_cast<Eigen::Index>(k)) = d.values().col(keep[k]);
  }
  table.header.push_back(response);
  table.values.col(static_cast<Eigen::Index>(keep.size())) = data.y;
  if (surv) {
    table.header.push_back(status);
    table.values.col(static_cast<Eigen::Index>(keep.size()) + 1) =
        data.surv->status.cast<double>();
  }
  write_csv(data_csv, table);

  auto out = OpenOut(groups_csv);
  out << "column,group\n";
  for (int j = 0; j < d.J(); ++j) {
    if (data.group_ids[j] < 0) continue;
    for (int c = d.group(j).begin; c < d.group(j).end; ++c) {
      out << d.column_names()[c] << "," << data.group_ids[j] << "\n";
    }
  }
}

Matrix spline_deviation_basis(const Vector& x, int dim) {
  using Spline = Eigen::Spline<double, 1, 3>;
  constexpr int kDegree = 3;
  const int n = static_cast<int>(x.size());
  if (dim < 1) throw ConfigError("spline dimension must be positive");
  if (n < dim + 2) throw DomainError("too few observations for the spline basis");
  // K interior knots give K + 4 B-splines: [1, x] plus K + 2 deviations.
  const int K = std::max(dim - 2, 1);
  std::vector<double> sorted(x.data(), x.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (!(hi > lo)) throw DomainError("spline expansion of a constant column");
  Spline::KnotVectorType knots(K + 2 * (kDegree + 1));
  for (int k = 0; k <= kDegree; ++k) {
    knots[k] = lo;
    knots[K + kDegree + 1 + k] = hi;
  }
  for (int k = 1; k <= K; ++k) {
    const double q = static_cast<double>(k) / (K + 1) * (n - 1);
    const int i = static_cast<int>(std::floor(q));
    const double frac = q - i;
    knots[kDegree + k] = sorted[i] + frac * (sorted[std::min(i + 1, n - 1)] - sorted[i]);
  }
  const int nb = K + kDegree + 1;
  Matrix B = Matrix::Zero(n, nb);
  const double top = std::nextafter(hi, lo);
  for (int i = 0; i < n; ++i) {
    const double u = std::min(x[i], top);
    const auto span = Spline::Span(u, kDegree, knots);
    const auto basis = Spline::BasisFunctions(u, kDegree, knots);
    for (int k = 0; k <= kDegree; ++k) B(i, span - kDegree + k) = basis[k];
  }
  Matrix L(n, 2);
  L.col(0).setOnes();
  L.col(1) = x;
  const Eigen::HouseholderQR<Matrix> qr(L);
  const Matrix Q = qr.householderQ() * Matrix::Identity(n, 2);
  const Matrix R = B - Q * (Q.transpose() * B);
  Eigen::JacobiSVD<Matrix> svd(R, Eigen::ComputeThinU);
  const int rank = std::min<int>(dim, static_cast<int>(svd.singularValues().size()));
  Matrix out = svd.matrixU().leftCols(rank) * std::sqrt(static_cast<double>(n));
  for (int k = 0; k < rank; ++k) {
    Eigen::Index arg = 0;
    out.col(k).cwiseAbs().maxCoeff(&arg);
    if (out(arg, k) < 0) out.col(k) *= -1.0;
  }
  return out;
}

void expand_splines(const std::string& data_csv, const std::vector<std::string>& columns,
                    const std::string& response, const std::string& out_data,
                    const std::string& out_groups, const std::string& out_constraints,
                    int dim, const std::vector<std::string>& keep) {
  const CsvTable in = read_csv(data_csv);
  std::vector<std::string> passthrough = keep;
  passthrough.push_back(response);
  CsvTable out;
  std::vector<Vector> cols;
  std::vector<long> group;
  std::vector<std::pair<long, long>> deps;
  long next_id = 1;
  for (std::size_t c = 0; c < in.header.size(); ++c) {
    const std::string& name = in.header[c];
    if (std::find(passthrough.begin(), passthrough.end(), name) != passthrough.end()) continue;
    out.header.push_back(name);
    cols.push_back(in.values.col(static_cast<Eigen::Index>(c)));
    group.push_back(next_id);
    const long linear = next_id++;
    if (std::find(columns.begin(), columns.end(), name) != columns.end()) {
      const Matrix S = spline_deviation_basis(in.values.col(static_cast<Eigen::Index>(c)), dim);
      for (Eigen::Index k = 0; k < S.cols(); ++k) {
        out.header.push_back(name + "_s" + std::to_string(k + 1));
        cols.push_back(S.col(k));
        group.push_back(next_id);
      }
      deps.emplace_back(next_id++, linear);
    }
  }
  for (const auto& name : columns) {
    if (in.find(name) < 0) throw ParseError(data_csv + ": no column '" + name + "' to expand");
  }
  for (const auto& name : passthrough) {
    const int c = in.find(name);
    if (c < 0) throw ParseError(data_csv + ": missing column '" + name + "'");
    out.header.push_back(name);
    cols.push_back(in.values.col(c));
  }
  out.values.resize(in.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) out.values.col(static_cast<Eigen::Index>(k)) = cols[k];
  write_csv(out_data, out);

  auto g = OpenOut(out_groups);
  g << "column,group\n";
  for (std::size_t k = 0; k < group.size(); ++k) g << out.header[k] << "," << group[k] << "\n";
  auto d = OpenOut(out_constraints);
  d << "child_group,parent_group\n";
  for (const auto& [child, parent] : deps) d << child << "," << parent << "\n";
}

std::string model_groups(const ModelId& model, const Dataset& data) {
  std::string s;
  for (int j : model.active()) {
    if (!s.empty()) s += ' ';
    s += data.group_ids[j] < 0 ? std::string("(Intercept)") : std::to_string(data.group_ids[j]);
  }
  return s;
}

void write_models_csv(const std::string& path, const PosteriorSummary& summary,
                      const Dataset& data) {
  auto out = OpenOut(path);
  out << "model,groups,size,log_score,log_prior,prob,count\n";
  for (const auto& e : summary.models) {
    out << e.model.bits() << "," << model_groups(e.model, data) << "," << e.model.size() << ","
        << FormatDouble(e.log_score) << "," << FormatDouble(e.log_prior) << ","
        << FormatDouble(e.prob) << "," << e.count << "\n";
  }
}

void write_inclusion_csv(const std::string& path, const PosteriorSummary& summary,
                         const Dataset& data) {
  auto out = OpenOut(path);
  const bool rb = summary.inclusion_rb.size() == summary.inclusion.size();
  out << "group,columns,inclusion" << (rb ? ",inclusion_rb" : "") << "\n";
  const DesignMatrix& d = *data.design;
  for (int j = 0; j < d.J(); ++j) {
    std::string cols;
    for (int c = d.group(j).begin; c < d.group(j).end; ++c) {
      cols += (cols.empty() ? "" : " ") + d.column_names()[c];
    }
    out << (data.group_ids[j] < 0 ? std::string("(Intercept)") : std::to_string(data.group_ids[j]))
        << "," << cols << "," << FormatDouble(summary.inclusion[j]);
    if (rb) out << "," << FormatDouble(summary.inclusion_rb[j]);
    out << "\n";
  }
}

}  // namespace ala

#include "ela/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "ela/errors.hpp"

namespace ela {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest = line;
  for (;;) {
    const auto comma = rest.find(',');
    out.push_back(trim(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line; ///< 1-based file line of each row
};

Table read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  Table t;
  std::string line;
  int number = 0;
  std::vector<std::string> issues;
  while (std::getline(in, line)) {
    ++number;
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size()) {
      issues.push_back("line " + std::to_string(number) + ": expected " +
                       std::to_string(t.header.size()) + " fields, found " +
                       std::to_string(fields.size()));
      continue;
    }
    t.rows.push_back(std::move(fields));
    t.line.push_back(number);
  }
  if (t.header.empty()) issues.push_back("'" + path + "' is empty");
  if (!issues.empty()) throw DataError(std::move(issues));
  return t;
}

// Column positions for `required`; missing columns are reported together.
std::map<std::string, std::size_t> locate(const Table& t,
                                          const std::vector<std::string>& required) {
  std::map<std::string, std::size_t> pos;
  std::vector<std::string> issues;
  for (const auto& name : required) {
    auto it = std::find(t.header.begin(), t.header.end(), name);
    if (it == t.header.end()) issues.push_back("missing column '" + name + "'");
    else pos[name] = static_cast<std::size_t>(it - t.header.begin());
  }
  if (!issues.empty()) throw DataError(std::move(issues));
  return pos;
}

bool parse_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

// Parses a 0/1 (or 1..3) code; appends an issue on failure.
int parse_code(const Table& t, std::size_t row, std::size_t col, int lo, int hi,
               std::vector<std::string>& issues) {
  double v = 0.0;
  const std::string& s = t.rows[row][col];
  if (!parse_double(s, v) || v != std::floor(v) || v < lo || v > hi) {
    issues.push_back("line " + std::to_string(t.line[row]) + ": " + t.header[col] + "='" + s +
                     "' must be an integer in [" + std::to_string(lo) + ", " +
                     std::to_string(hi) + "]");
    return lo;
  }
  return static_cast<int>(v);
}

double parse_real(const Table& t, std::size_t row, std::size_t col,
                  std::vector<std::string>& issues) {
  double v = 0.0;
  if (!parse_double(t.rows[row][col], v)) {
    issues.push_back("line " + std::to_string(t.line[row]) + ": " + t.header[col] + "='" +
                     t.rows[row][col] + "' is not a finite number");
  }
  return v;
}

// Relabels arbitrary codes as 0..k-1 in order of first appearance.
std::vector<int> compress(const std::vector<int>& codes) {
  std::map<int, int> seen;
  std::vector<int> out;
  out.reserve(codes.size());
  for (int c : codes) {
    auto [it, inserted] = seen.emplace(c, static_cast<int>(seen.size()));
    out.push_back(it->second);
  }
  return out;
}

std::vector<int> label_index(const std::vector<std::string>& labels) {
  std::map<std::string, int> seen;
  std::vector<int> out;
  for (const auto& l : labels) {
    auto [it, inserted] = seen.emplace(l, static_cast<int>(seen.size()));
    out.push_back(it->second);
  }
  return out;
}

Dataset load_salamander(const Table& t, std::string_view family) {
  const auto pos = locate(t, {"female_id", "male_id", "experiment", "trtf", "trtm", "season", "y"});
  std::vector<std::string> issues;
  std::set<std::tuple<std::string, std::string, int>> pairs;
  std::vector<std::string> females, males;
  std::vector<int> exp, trtf, trtm, season, y;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const int k = parse_code(t, r, pos.at("experiment"), 1, 3, issues);
    if (!pairs.emplace(row[pos.at("female_id")], row[pos.at("male_id")], k).second)
      issues.push_back("line " + std::to_string(t.line[r]) + ": duplicate (female " +
                       row[pos.at("female_id")] + ", male " + row[pos.at("male_id")] +
                       ", experiment " + std::to_string(k) + ")");
    females.push_back(row[pos.at("female_id")]);
    males.push_back(row[pos.at("male_id")]);
    exp.push_back(k);
    trtf.push_back(parse_code(t, r, pos.at("trtf"), 0, 1, issues));
    trtm.push_back(parse_code(t, r, pos.at("trtm"), 0, 1, issues));
    season.push_back(parse_code(t, r, pos.at("season"), 0, 1, issues));
    y.push_back(parse_code(t, r, pos.at("y"), 0, 1, issues));
  }
  if (!issues.empty()) throw DataError(std::move(issues));

  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < exp.size(); ++r)
    if (family != "summer_glmm" || exp[r] == 1) keep.push_back(r);
  if (keep.empty()) throw DataError("no rows left for " + std::string(family));

  Dataset d;
  d.schema = "salamander";
  const auto n = static_cast<Eigen::Index>(keep.size());
  d.y.resize(n);
  Eigen::VectorXd vf(n), vm(n), vs(n);
  std::vector<std::string> fl, ml;
  std::vector<int> ek;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::size_t r = keep[static_cast<std::size_t>(i)];
    d.y[i] = y[r];
    vf[i] = trtf[r];
    vm[i] = trtm[r];
    vs[i] = season[r];
    fl.push_back(females[r]);
    ml.push_back(males[r]);
    ek.push_back(exp[r]);
  }
  d.index["female"] = label_index(fl);
  d.index["male"] = label_index(ml);
  d.index["experiment"] = ek;
  d.covariates["trtf"] = vf;
  d.covariates["trtm"] = vm;
  d.covariates["season"] = vs;
  apply_salamander_design(d, family);
  return d;
}

Dataset load_rongelap(const Table& t) {
  const auto pos = locate(t, {"x_coord", "y_coord", "count", "time"});
  std::vector<std::string> issues;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Dataset d;
  d.schema = "rongelap";
  d.y.resize(n);
  d.time.resize(n);
  d.coords.resize(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    d.coords(i, 0) = parse_real(t, r, pos.at("x_coord"), issues);
    d.coords(i, 1) = parse_real(t, r, pos.at("y_coord"), issues);
    d.y[i] = parse_real(t, r, pos.at("count"), issues);
    d.time[i] = parse_real(t, r, pos.at("time"), issues);
    if (d.y[i] < 0.0)
      issues.push_back("line " + std::to_string(t.line[r]) + ": count must be non-negative");
    if (!(d.time[i] > 0.0))
      issues.push_back("line " + std::to_string(t.line[r]) + ": time must be positive");
  }
  if (!issues.empty()) throw DataError(std::move(issues));
  d.X = Eigen::MatrixXd::Ones(n, 1);
  d.x_names = {"beta0"};
  d.compute_distances();
  return d;
}

Dataset load_grouped(const Table& t) {
  const auto pos = locate(t, {"group", "y"});
  std::vector<std::size_t> xcols;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (t.header[c].size() > 1 && t.header[c][0] == 'x') xcols.push_back(c);
  std::vector<std::string> issues;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  Dataset d;
  d.schema = "grouped";
  d.y.resize(n);
  d.X.resize(n, 1 + static_cast<Eigen::Index>(xcols.size()));
  std::vector<std::string> labels;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    labels.push_back(t.rows[r][pos.at("group")]);
    d.y[i] = parse_real(t, r, pos.at("y"), issues);
    d.X(i, 0) = 1.0;
    for (std::size_t k = 0; k < xcols.size(); ++k)
      d.X(i, 1 + static_cast<Eigen::Index>(k)) = parse_real(t, r, xcols[k], issues);
  }
  if (!issues.empty()) throw DataError(std::move(issues));
  d.index["group"] = label_index(labels);
  d.x_names = {"intercept"};
  for (std::size_t c : xcols) d.x_names.push_back(t.header[c]);
  return d;
}

} // namespace

std::string_view schema_for(std::string_view family) {
  if (family == "summer_glmm" || family == "pooled_glmm" || family == "pooled_shared_glmm")
    return "salamander";
  if (family == "spatial_poisson" || family == "spatial_odp") return "rongelap";
  if (family == "normal_lmm" || family == "bernoulli_cluster_toy") return "grouped";
  std::string list;
  for (const auto& f : model_families()) list += (list.empty() ? "" : ", ") + f;
  throw ModelError("unknown model family '" + std::string(family) + "' (known: " + list + ")");
}

Dataset load_dataset(const std::string& path, std::string_view family) {
  const std::string_view schema = schema_for(family);
  const Table t = read_csv(path);
  Dataset d = schema == "salamander" ? load_salamander(t, family)
              : schema == "rongelap" ? load_rongelap(t)
                                     : load_grouped(t);
  d.validate();
  return d;
}

void apply_salamander_design(Dataset& data, std::string_view family) {
  const auto& f = data.covariates.at("trtf");
  const auto& m = data.covariates.at("trtm");
  const Eigen::Index n = data.rows();
  const bool pooled = family != "summer_glmm";
  data.X.resize(n, pooled ? 5 : 4);
  data.X.col(0).setOnes();
  Eigen::Index c = 1;
  if (pooled) data.X.col(c++) = data.covariates.at("season");
  data.X.col(c++) = f;
  data.X.col(c++) = m;
  data.X.col(c) = f.cwiseProduct(m);
  data.x_names = pooled ? std::vector<std::string>{"intercept", "season", "trtf", "trtm",
                                                   "trtf_trtm"}
                        : std::vector<std::string>{"intercept", "trtf", "trtm", "trtf_trtm"};
}

Dataset salamander_design(const std::vector<int>& experiments) {
  std::vector<int> fem, mal, exp;
  std::vector<double> tf, tm, season;
  for (int k : experiments) {
    if (k < 1 || k > 3) throw std::invalid_argument("experiment codes are 1, 2 or 3");
    const int base = k == 3 ? 20 : 0;
    const int shift = k == 2 ? 5 : 0;
    for (int fi = 0; fi < 20; ++fi)
      for (int mj = 0; mj < 20; ++mj) {
        const int off = ((mj % 10) - (fi % 10) - shift + 20) % 10;
        if (off > 2) continue;
        fem.push_back(base + fi);
        mal.push_back(base + mj);
        exp.push_back(k);
        tf.push_back(fi < 10 ? 0.0 : 1.0);
        tm.push_back(mj < 10 ? 0.0 : 1.0);
        season.push_back(k == 1 ? 0.0 : 1.0);
      }
  }
  Dataset d;
  d.schema = "salamander";
  const auto n = static_cast<Eigen::Index>(fem.size());
  d.y = Eigen::VectorXd::Zero(n);
  d.index["female"] = compress(fem);
  d.index["male"] = compress(mal);
  d.index["experiment"] = exp;
  d.covariates["trtf"] = Eigen::Map<Eigen::VectorXd>(tf.data(), n);
  d.covariates["trtm"] = Eigen::Map<Eigen::VectorXd>(tm.data(), n);
  d.covariates["season"] = Eigen::Map<Eigen::VectorXd>(season.data(), n);
  apply_salamander_design(d, experiments.size() == 1 ? "summer_glmm" : "pooled_glmm");
  return d;
}

Dataset grouped_design(int groups, int size, int covariates, std::uint64_t seed) {
  if (groups < 1 || size < 1) throw std::invalid_argument("grouped design needs groups, size >= 1");
  const Eigen::Index n = static_cast<Eigen::Index>(groups) * size;
  Dataset d;
  d.schema = "grouped";
  d.y = Eigen::VectorXd::Zero(n);
  d.X = Eigen::MatrixXd::Ones(n, 1 + covariates);
  d.x_names = {"intercept"};
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < covariates; ++k) {
    d.x_names.push_back("x" + std::to_string(k + 1));
    for (Eigen::Index i = 0; i < n; ++i) d.X(i, 1 + k) = normal(rng);
  }
  std::vector<int> g(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = static_cast<int>(i / size);
  d.index["group"] = g;
  return d;
}

Dataset spatial_design(int n, double extent, std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("spatial design needs at least two points");
  const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const double spacing = extent / std::max(1, side - 1);
  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(-0.2 * spacing, 0.2 * spacing);
  Dataset d;
  d.schema = "rongelap";
  d.y = Eigen::VectorXd::Zero(n);
  d.time = Eigen::VectorXd::Ones(n);
  d.coords.resize(n, 2);
  for (int i = 0; i < n; ++i) {
    d.coords(i, 0) = (i % side) * spacing + jitter(rng);
    d.coords(i, 1) = (i / side) * spacing + jitter(rng);
  }
  d.X = Eigen::MatrixXd::Ones(n, 1);
  d.x_names = {"beta0"};
  d.compute_distances();
  return d;
}

} // namespace ela

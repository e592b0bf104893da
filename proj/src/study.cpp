#include "ela/study.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "ela/data_io.hpp"
#include "ela/parallel.hpp"

namespace ela {

using nlohmann::json;

StudyConfig study_config_from_json(const json& j) {
  StudyConfig c;
  c.family = j.at("family").get<std::string>();
  c.truth = j.at("truth").get<std::vector<double>>();
  c.T = j.value("T", c.T);
  c.B_point = j.value("B_point", c.B_point);
  c.B_tau = j.value("B_tau", c.B_tau);
  c.B_se = j.value("B_se", c.B_se);
  if (j.contains("methods")) {
    c.methods.clear();
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  }
  if (j.contains("estimand")) c.estimand = estimand_from_string(j.at("estimand").get<std::string>());
  c.base_seed = j.value("base_seed", c.base_seed);
  c.workers = j.value("workers", c.workers);
  c.tol = j.value("tol", c.tol);
  c.data_path = j.value("data_path", c.data_path);
  c.n = j.value("n", c.n);
  c.extent = j.value("extent", c.extent);
  c.groups = j.value("groups", c.groups);
  c.group_size = j.value("group_size", c.group_size);
  if (c.T < 2) throw std::invalid_argument("a study needs T >= 2 replicates");
  if (c.methods.empty()) throw std::invalid_argument("a study needs at least one method");
  return c;
}

json to_json(const StudyConfig& c) {
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(to_string(m)));
  json j{{"family", c.family},   {"truth", c.truth},
         {"T", c.T},             {"B_point", c.B_point},
         {"B_tau", c.B_tau},     {"B_se", c.B_se},
         {"methods", methods},   {"estimand", std::string(to_string(c.estimand))},
         {"base_seed", c.base_seed}, {"workers", c.workers},
         {"tol", c.tol},         {"n", c.n},
         {"extent", c.extent},   {"groups", c.groups},
         {"group_size", c.group_size}};
  if (!c.data_path.empty()) j["data_path"] = c.data_path;
  return j;
}

void summarize(const Eigen::MatrixXd& estimates, const Eigen::MatrixXd& ses, Eigen::VectorXd& est,
               Eigen::VectorXd& se, Eigen::VectorXd& sd) {
  const Eigen::Index T = estimates.rows(), P = estimates.cols();
  if (T < 2) throw std::invalid_argument("summaries need at least two replicates");
  est = estimates.colwise().mean().transpose();
  sd.resize(P);
  se.resize(P);
  for (Eigen::Index k = 0; k < P; ++k) {
    sd[k] = std::sqrt((estimates.col(k).array() - est[k]).square().sum() /
                      static_cast<double>(T - 1));
    double total = 0.0;
    int count = 0;
    for (Eigen::Index t = 0; t < ses.rows(); ++t)
      if (std::isfinite(ses(t, k))) {
        total += ses(t, k);
        ++count;
      }
    se[k] = count > 0 ? total / count : std::numeric_limits<double>::quiet_NaN();
  }
}

Dataset study_design(const StudyConfig& c) {
  if (!c.data_path.empty()) return load_dataset(c.data_path, c.family);
  const std::string_view schema = schema_for(c.family);
  if (schema == "salamander")
    return c.family == "summer_glmm" ? salamander_design({1}) : salamander_design({1, 2, 3});
  if (schema == "rongelap") return spatial_design(c.n, c.extent, c.base_seed);
  return grouped_design(c.groups, c.group_size);
}

StudyResult run_study(const StudyConfig& config) {
  const ModelPtr design_model = build_model(config.family, study_design(config));
  const auto& layout = design_model->layout();
  if (static_cast<Eigen::Index>(config.truth.size()) != layout->size())
    throw std::invalid_argument("truth has " + std::to_string(config.truth.size()) +
                                " entries, " + config.family + " has " +
                                std::to_string(layout->size()) + " parameters");
  const Eigen::VectorXd truth =
      Eigen::Map<const Eigen::VectorXd>(config.truth.data(), layout->size());
  const ParamVec theta =
      ParamVec::from_natural(layout, truth.head(layout->p()), truth.tail(layout->q()));

  const std::size_t M = config.methods.size();
  const auto T = static_cast<std::size_t>(config.T);
  std::vector<std::vector<ReplicateResult>> results(M, std::vector<ReplicateResult>(T));

  parallel_for(T, worker_count(config.workers), [&](std::size_t t) {
    std::seed_seq seq{static_cast<std::uint32_t>(config.base_seed),
                      static_cast<std::uint32_t>(config.base_seed >> 32),
                      static_cast<std::uint32_t>(t)};
    Rng rng(seq);
    const Dataset data = design_model->simulate(theta, rng);
    ModelPtr model;
    std::string build_error;
    try {
      model = build_model(config.family, data);
    } catch (const std::exception& e) {
      build_error = e.what();
    }
    for (std::size_t m = 0; m < M; ++m) {
      ReplicateResult& r = results[m][t];
      r.index = static_cast<int>(t);
      if (!model) {
        r.error = build_error;
        continue;
      }
      FitOptions opts;
      opts.method = config.methods[m];
      opts.estimand = config.estimand;
      opts.B_point = config.B_point;
      opts.B_tau = config.B_tau;
      opts.B_se = config.B_se;
      opts.seed = config.base_seed + t;
      opts.tol = config.tol;
      try {
        const FitResult f = fit(*model, model->default_start(), opts);
        r.converged = f.converged;
        r.estimates = f.estimates;
        r.se = f.se.size() > 0
                   ? f.se
                   : Eigen::VectorXd::Constant(f.estimates.size(),
                                               std::numeric_limits<double>::quiet_NaN());
        if (!f.converged) r.error = "did not converge";
      } catch (const std::exception& e) {
        r.error = e.what();
      }
    }
  });

  StudyResult out;
  out.config = config;
  std::ostringstream failures;
  for (std::size_t m = 0; m < M; ++m) {
    SummaryTable table;
    table.method = std::string(to_string(config.methods[m]));
    table.names = layout->names();
    table.truth = truth;
    table.replicates = results[m];
    std::vector<const ReplicateResult*> ok;
    for (const auto& r : results[m]) {
      if (r.converged) ok.push_back(&r);
      else ++table.failures;
    }
    const auto P = layout->size();
    table.estimates.resize(static_cast<Eigen::Index>(ok.size()), P);
    table.ses.resize(static_cast<Eigen::Index>(ok.size()), P);
    for (std::size_t k = 0; k < ok.size(); ++k) {
      table.estimates.row(static_cast<Eigen::Index>(k)) = ok[k]->estimates.transpose();
      table.ses.row(static_cast<Eigen::Index>(k)) = ok[k]->se.transpose();
    }
    if (ok.size() >= 2) {
      summarize(table.estimates, table.ses, table.est, table.se, table.sd);
    } else {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      table.est = table.se = table.sd = Eigen::VectorXd::Constant(P, nan);
    }
    if (table.failures * 5 > config.T) {
      failures << "method " << table.method << ": " << table.failures << " of " << config.T
               << " replicates failed";
      for (const auto& r : table.replicates)
        if (!r.converged) failures << "\n  replicate " << r.index << ": " << r.error;
      failures << '\n';
    }
    out.tables.push_back(std::move(table));
  }
  if (!failures.str().empty()) throw StudyError(failures.str(), std::move(out));
  return out;
}

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json finite_or_null(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::isfinite(v[k])) out.push_back(v[k]);
    else out.push_back(nullptr);
  }
  return out;
}

} // namespace

std::string summary_csv(const StudyResult& result) {
  std::ostringstream out;
  out << "method,parameter,truth,est,se,sd,converged,failed\n";
  for (const auto& t : result.tables) {
    const auto ok = static_cast<int>(t.estimates.rows());
    for (std::size_t k = 0; k < t.names.size(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      out << t.method << ',' << t.names[k] << ',' << num(t.truth[i]) << ',' << num(t.est[i])
          << ',' << num(t.se[i]) << ',' << num(t.sd[i]) << ',' << ok << ',' << t.failures
          << '\n';
    }
  }
  return out.str();
}

json summary_json(const StudyResult& result) {
  json tables = json::array();
  for (const auto& t : result.tables) {
    json reps = json::array();
    for (const auto& r : t.replicates) {
      json jr{{"index", r.index}, {"converged", r.converged}};
      if (r.estimates.size() > 0) {
        jr["estimates"] = finite_or_null(r.estimates);
        jr["se"] = finite_or_null(r.se);
      }
      if (!r.error.empty()) jr["error"] = r.error;
      reps.push_back(std::move(jr));
    }
    tables.push_back({{"method", t.method},
                      {"names", t.names},
                      {"truth", finite_or_null(t.truth)},
                      {"est", finite_or_null(t.est)},
                      {"se", finite_or_null(t.se)},
                      {"sd", finite_or_null(t.sd)},
                      {"failures", t.failures},
                      {"replicates", std::move(reps)}});
  }
  // Worker count is left out so outputs match across parallelism settings.
  json config = to_json(result.config);
  config.erase("workers");
  return {{"schema", "ela-summary/1"}, {"config", config}, {"tables", tables}};
}

} // namespace ela

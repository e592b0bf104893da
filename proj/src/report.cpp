#include "ela/report.hpp"

#include <fstream>
#include <stdexcept>

namespace ela {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

json fit_to_json(const FitResult& fit) {
  json j;
  j["schema"] = kReportSchema;
  j["tool_version"] = kToolVersion;
  j["family"] = fit.family;
  j["method"] = std::string(to_string(fit.method));
  j["estimand"] = std::string(to_string(fit.estimand));
  j["names"] = fit.names;
  j["estimates"] = vector_json(fit.estimates);
  j["unconstrained"] = vector_json(fit.unconstrained);
  if (fit.se.size() > 0) {
    j["se"] = vector_json(fit.se);
    std::vector<double> rows;
    for (Eigen::Index r = 0; r < fit.cov.rows(); ++r)
      for (Eigen::Index c = 0; c < fit.cov.cols(); ++c) rows.push_back(fit.cov(r, c));
    j["cov"] = {{"rows", fit.cov.rows()}, {"cols", fit.cov.cols()}, {"row_major", rows}};
  }
  j["B"] = {{"point", fit.B_point}, {"tau", fit.B_tau}, {"se", fit.B_se}};
  j["seed"] = fit.seed;
  j["seeds"] = fit.seeds;
  j["converged"] = fit.converged;
  j["loglik"] = fit.loglik;
  j["restricted_loglik"] = fit.restricted_loglik;
  j["iterations"] = fit.iterations;
  j["trace"] = fit.trace;
  j["warnings"] = fit.warnings;
  j["p"] = fit.p;
  j["free_parameters"] = fit.free_parameters;
  return j;
}

FitResult fit_from_json(const json& j) {
  if (j.value("schema", std::string()) != kReportSchema)
    throw std::runtime_error("not an " + std::string(kReportSchema) + " document");
  FitResult f;
  f.family = j.at("family").get<std::string>();
  f.method = method_from_string(j.at("method").get<std::string>());
  f.estimand = estimand_from_string(j.at("estimand").get<std::string>());
  f.names = j.at("names").get<std::vector<std::string>>();
  f.estimates = vector_from(j.at("estimates"));
  f.unconstrained = vector_from(j.at("unconstrained"));
  if (j.contains("se")) {
    f.se = vector_from(j.at("se"));
    const auto& c = j.at("cov");
    const auto rows = c.at("rows").get<Eigen::Index>();
    const auto cols = c.at("cols").get<Eigen::Index>();
    const auto data = c.at("row_major").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
      throw std::runtime_error("covariance has the wrong number of entries");
    f.cov.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index k = 0; k < cols; ++k)
        f.cov(r, k) = data[static_cast<std::size_t>(r * cols + k)];
  }
  f.B_point = j.at("B").at("point").get<Eigen::Index>();
  f.B_tau = j.at("B").at("tau").get<Eigen::Index>();
  f.B_se = j.at("B").at("se").get<Eigen::Index>();
  f.seed = j.at("seed").get<std::uint64_t>();
  f.seeds = j.at("seeds").get<std::map<std::string, std::uint64_t>>();
  f.converged = j.at("converged").get<bool>();
  f.loglik = j.at("loglik").get<double>();
  f.restricted_loglik = j.at("restricted_loglik").get<double>();
  f.iterations = j.at("iterations").get<int>();
  f.trace = j.at("trace").get<std::vector<double>>();
  f.warnings = j.at("warnings").get<std::vector<std::string>>();
  f.p = j.at("p").get<Eigen::Index>();
  f.free_parameters = j.at("free_parameters").get<int>();
  return f;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

void write_report(const FitResult& fit, const std::string& path) {
  write_json(fit_to_json(fit), path);
}

FitResult read_report(const std::string& path) { return fit_from_json(read_json(path)); }

} // namespace ela

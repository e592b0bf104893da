#include "commands.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"

#include "ela/data_io.hpp"
#include "ela/ela.hpp"
#include "ela/errors.hpp"
#include "ela/fit.hpp"
#include "ela/laplace.hpp"
#include "ela/report.hpp"
#include "ela/study.hpp"

namespace ela::cli {

namespace {

struct FitFlags {
  std::string model, data, method = "ela", estimand = "ml", out, transform;
  long long B = 50, B_tau = 0, B_se = 1000;
  std::uint64_t seed = 1;
  std::vector<std::string> null_constraints;
  double tol = 1e-6;
  int max_iter = 500;
};

struct SimulateFlags {
  std::string study, out;
  int workers = 0;
};

struct DiagFlags {
  std::string model, data, theta;
  long long B = 1000;
  std::uint64_t seed = 1;
};

// Flag problems detected after parsing.
struct FlagError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string family_list() {
  std::string s;
  for (const auto& f : model_families()) s += (s.empty() ? "" : ", ") + f;
  return s;
}

void check_family(const std::string& family) {
  for (const auto& f : model_families())
    if (f == family) return;
  throw FlagError("unknown model family '" + family + "'; known families: " + family_list());
}

void print_fit(std::ostream& out, const FitResult& f) {
  out << f.family << "  method=" << to_string(f.method) << "  estimand=" << to_string(f.estimand)
      << "  converged=" << (f.converged ? "yes" : "no") << '\n';
  out << std::left << std::setw(14) << "parameter" << std::right << std::setw(14) << "estimate"
      << std::setw(14) << "se" << '\n';
  for (std::size_t k = 0; k < f.names.size(); ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    out << std::left << std::setw(14) << f.names[k] << std::right << std::setw(14)
        << std::setprecision(6) << f.estimates[i] << std::setw(14);
    if (f.se.size() > 0) out << f.se[i];
    else out << "-";
    out << '\n';
  }
  out << "loglik " << std::setprecision(10) << f.loglik;
  if (f.estimand == Estimand::reml) out << "  restricted " << f.restricted_loglik;
  out << '\n';
  for (const auto& w : f.warnings) out << "warning: " << w << '\n';
}

// Splits name=value constraints; rho_m=1 on the pooled model selects the
// shared random-effects submodel.
std::map<std::string, double> constraints(const std::vector<std::string>& raw,
                                          std::string& family) {
  std::map<std::string, double> out;
  for (const auto& c : raw) {
    const auto eq = c.find('=');
    if (eq == std::string::npos) throw FlagError("--null-constraint expects name=value, got '" + c + "'");
    const std::string name = c.substr(0, eq);
    double value = 0.0;
    try {
      value = std::stod(c.substr(eq + 1));
    } catch (const std::exception&) {
      throw FlagError("--null-constraint value in '" + c + "' is not a number");
    }
    if (family == "pooled_glmm" && name == "rho_m" && value == 1.0) {
      family = "pooled_shared_glmm";
      continue;
    }
    if (name.rfind("rho", 0) == 0 && std::abs(value) >= 1.0)
      throw FlagError("constraint " + c + " lies on the boundary; no submodel is registered for it");
    out[name] = value;
  }
  return out;
}

int cmd_fit(const FitFlags& f, std::ostream& out) {
  check_family(f.model);
  if (!f.transform.empty() && f.transform != "matern")
    throw FlagError("--transform accepts only 'matern'");
  FitOptions opts;
  opts.method = method_from_string(f.method);
  opts.estimand = estimand_from_string(f.estimand);
  opts.B_point = f.B;
  opts.B_tau = f.B_tau;
  opts.B_se = f.B_se;
  opts.seed = f.seed;
  opts.tol = f.tol;
  opts.max_iter = f.max_iter;
  if (opts.B_point < 1 || opts.B_se < 1) throw FlagError("--B and --B-se must be positive");
  std::string family = f.model;
  opts.fixed = constraints(f.null_constraints, family);

  out << "replay: ela_ml fit --model " << f.model << " --data " << f.data << " --method "
      << f.method << " --estimand " << f.estimand << " --B " << f.B << " --B-tau " << f.B_tau
      << " --B-se " << f.B_se << " --seed " << f.seed << " --tol " << f.tol << " --max-iter "
      << f.max_iter;
  if (!f.out.empty()) out << " --out " << f.out;
  for (const auto& c : f.null_constraints) out << " --null-constraint " << c;
  if (!f.transform.empty()) out << " --transform " << f.transform;
  out << '\n';

  const ModelPtr model = build_model(family, load_dataset(f.data, family));
  FitResult result = fit(*model, model->default_start(), opts);
  if (f.transform == "matern") result = matern_transform(result);
  if (!f.out.empty()) write_report(result, f.out);
  print_fit(out, result);
  return result.converged ? ok : not_converged;
}

int cmd_simulate(const SimulateFlags& f, std::ostream& out) {
  StudyConfig config = study_config_from_json(read_json(f.study));
  if (f.workers > 0) config.workers = f.workers;
  out << "replay: ela_ml simulate --study " << f.study << " --out " << f.out << " --workers "
      << config.workers << '\n';
  std::filesystem::create_directories(f.out);
  auto emit = [&](const StudyResult& r) {
    const std::string csv = summary_csv(r);
    std::ofstream(std::filesystem::path(f.out) / "summary.csv") << csv;
    write_json(summary_json(r), (std::filesystem::path(f.out) / "summary.json").string());
    out << csv;
  };
  try {
    emit(run_study(config));
  } catch (const StudyError& e) {
    emit(e.partial());
    out << e.what();
    return not_converged;
  }
  return ok;
}

ParamVec parse_theta(const std::string& text, const Model& model) {
  nlohmann::json j;
  if (std::filesystem::exists(text)) j = read_json(text);
  else {
    try {
      j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
      throw FlagError(std::string("--theta is neither a file nor JSON: ") + e.what());
    }
  }
  const auto& layout = model.layout();
  Eigen::VectorXd natural = model.default_start().natural();
  if (j.is_array()) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != layout->size())
      throw FlagError("--theta needs " + std::to_string(layout->size()) + " values");
    natural = Eigen::Map<const Eigen::VectorXd>(v.data(), layout->size());
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const Eigen::Index k = layout->index_of(it.key());
      if (k < 0) throw FlagError("--theta names unknown parameter '" + it.key() + "'");
      natural[k] = it.value().get<double>();
    }
  } else {
    throw FlagError("--theta must be a JSON array or object");
  }
  return ParamVec::from_natural(layout, natural.head(layout->p()), natural.tail(layout->q()));
}

int cmd_diag(const DiagFlags& f, std::ostream& out) {
  check_family(f.model);
  if (f.B < 1) throw FlagError("--B must be positive");
  out << "replay: ela_ml diag --model " << f.model << " --data " << f.data << " --theta '"
      << f.theta << "' --B " << f.B << " --seed " << f.seed << '\n';
  const ModelPtr model = build_model(f.model, load_dataset(f.data, f.model));
  const ParamVec theta = parse_theta(f.theta, *model);
  const double la = la_marginal(*model, theta);
  const ElaEstimate e =
      ela_marginal(*model, theta, CrnDraws(model->latent_dim(), f.B, derive_seed(f.seed, "point")));
  out << std::setprecision(12);
  out << "LA      " << la << '\n';
  out << "ELA     " << e.loglik << '\n';
  out << "ELBO    " << e.elbo << "  (gap " << e.loglik - e.elbo << ")\n";
  out << "ESS     " << e.ess << " of " << e.B << '\n';
  out << "mc_se   " << e.mc_se << '\n';
  return ok;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Maximum likelihood and REML for latent Gaussian models with the enhanced "
               "Laplace approximation"};
  app.require_subcommand(1);

  FitFlags ff;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a model to a dataset");
  fit_cmd->add_option("--model", ff.model, "Model family")->required();
  fit_cmd->add_option("--data", ff.data, "CSV dataset")->required();
  fit_cmd->add_option("--method", ff.method, "la or ela")->check(CLI::IsMember({"la", "ela"}));
  fit_cmd->add_option("--estimand", ff.estimand, "ml or reml")->check(CLI::IsMember({"ml", "reml"}));
  fit_cmd->add_option("--B", ff.B, "Draws for the point estimate");
  fit_cmd->add_option("--B-tau", ff.B_tau, "Draws for the restricted likelihood (0: same as --B)");
  fit_cmd->add_option("--B-se", ff.B_se, "Draws for the information matrix");
  fit_cmd->add_option("--seed", ff.seed, "Seed");
  fit_cmd->add_option("--out", ff.out, "Report path (JSON)");
  fit_cmd->add_option("--null-constraint", ff.null_constraints, "Hold name=value fixed");
  fit_cmd->add_option("--transform", ff.transform, "Reparameterization of the report (matern)");
  fit_cmd->add_option("--tol", ff.tol, "Parameter tolerance");
  fit_cmd->add_option("--max-iter", ff.max_iter, "Outer iteration cap");

  SimulateFlags sf;
  auto* sim_cmd = app.add_subcommand("simulate", "Run a simulation study");
  sim_cmd->add_option("--study", sf.study, "Study config (JSON)")->required();
  sim_cmd->add_option("--out", sf.out, "Output directory")->required();
  sim_cmd->add_option("--workers", sf.workers, "Worker threads (capped by ELA_ML_THREADS)");

  DiagFlags df;
  auto* diag_cmd = app.add_subcommand("diag", "Print LA, ELA, ELBO, ESS and MC error at theta");
  diag_cmd->add_option("--model", df.model, "Model family")->required();
  diag_cmd->add_option("--data", df.data, "CSV dataset")->required();
  diag_cmd->add_option("--theta", df.theta, "Natural-scale theta: JSON file or inline JSON")
      ->required();
  diag_cmd->add_option("--B", df.B, "Draws");
  diag_cmd->add_option("--seed", df.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return bad_flags;
  }

  try {
    if (fit_cmd->parsed()) return cmd_fit(ff, out);
    if (sim_cmd->parsed()) return cmd_simulate(sf, out);
    return cmd_diag(df, out);
  } catch (const FlagError& e) {
    err << "error: " << e.what() << '\n';
    return bad_flags;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return bad_flags;
  } catch (const ModelError& e) {
    err << "error: " << e.what() << '\n';
    return bad_flags;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return bad_data;
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return not_converged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return failure;
  }
}

} // namespace ela::cli

//! Command-line front end: simulate data, fit estimators, score them,
//! and run multi-estimator comparisons.  Identical arguments, input
//! bytes, and seed always produce identical output artifacts.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>

#include "ctdens/ctdens.hpp"

namespace {

using ctdens::io::format_double;

std::vector<std::string> all_estimator_names()
{
  std::vector<std::string> out;
  for (const auto& [id, name] : ctdens::estimator_names())
    out.push_back(name);
  return out;
}

std::vector<std::string> all_marginal_names()
{
  return {"kernel", "univ-mix-normal", "univ-mix-t", "implied-mix-normal", "implied-mix-t"};
}

struct SimulateSpec {
  int d = 2;
  int n = 0;
  int n_test = 1000;
  ctdens::DgpVariant variant = ctdens::DgpVariant::standard;
};

//! Parse "d=5,n=500[,test=1000][,variant=standard|motivating]".
SimulateSpec parse_simulate_spec(const std::string& text)
{
  SimulateSpec spec;
  bool saw_d = false, saw_n = false;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw CLI::ValidationError("--simulate", "expected key=value, got '" + item + "'");
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    try {
      if (key == "d") {
        spec.d = std::stoi(value);
        saw_d = true;
      } else if (key == "n") {
        spec.n = std::stoi(value);
        saw_n = true;
      } else if (key == "test") {
        spec.n_test = std::stoi(value);
      } else if (key == "variant") {
        if (value == "standard")
          spec.variant = ctdens::DgpVariant::standard;
        else if (value == "motivating")
          spec.variant = ctdens::DgpVariant::motivating;
        else
          throw CLI::ValidationError("--simulate", "unknown variant '" + value + "'");
      } else {
        throw CLI::ValidationError("--simulate", "unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw CLI::ValidationError("--simulate", "bad value in '" + item + "'");
    }
  }
  if (!saw_d || !saw_n || spec.d < 1 || spec.n < 1 || spec.n_test < 1)
    throw CLI::ValidationError("--simulate", "need d=<dim>,n=<rows> with positive values");
  return spec;
}

std::vector<ctdens::MarginalKind> parse_marginal_kinds(const std::vector<std::string>& names)
{
  std::vector<ctdens::MarginalKind> out;
  for (const auto& name : names)
    out.push_back(ctdens::marginal_kind_from_name(name));
  return out;
}

struct FitArgs {
  std::string data_path;
  std::string estimator;
  int k_init = 5;
  int folds_marginals = 10;
  std::uint64_t seed = 0;
  int nu_max = 100;
  double epsilon = 1e-3;
  std::string out_path = "model.json";
  std::string trace_path;
};

ctdens::CtOptions make_options(int k_init, int nu_max, double epsilon, std::uint64_t seed)
{
  ctdens::CtOptions opts;
  opts.priors.nu_max = nu_max;
  opts.priors.prune_epsilon = epsilon;
  opts.vb_opts.k_init = k_init;
  opts.vb_opts.seed = seed;
  return opts;
}

void write_trace(const std::string& path, const ctdens::DensityEstimate& est,
                 const std::vector<ctdens::vb::SweepRecord>& sweeps)
{
  std::string out;
  if (const auto* ct = std::get_if<ctdens::CopulaTypeModel>(&est.model)) {
    out = "iteration,loglik,n_components\n";
    for (const auto& rec : ct->iterations)
      out += std::to_string(rec.iteration) + "," + format_double(rec.loglik) + ","
             + std::to_string(rec.n_components) + "\n";
  } else if (std::holds_alternative<ctdens::vb::MixtureModel>(est.model)) {
    out = "sweep,elbo,n_components\n";
    for (const auto& rec : sweeps)
      out += std::to_string(rec.sweep) + "," + format_double(rec.elbo) + ","
             + std::to_string(rec.n_components) + "\n";
  } else {
    out = "iteration,loglik,n_components\n";
  }
  ctdens::io::atomic_write(path, out);
}

int run_fit(const FitArgs& args)
{
  const ctdens::io::Dataset data = ctdens::io::load_csv(args.data_path);
  const ctdens::EstimatorId id = ctdens::estimator_from_name(args.estimator);
  const ctdens::CtOptions opts = make_options(args.k_init, args.nu_max, args.epsilon, args.seed);

  ctdens::io::StoredModel stored;
  ctdens::io::json fit_info;
  fit_info["seed"] = args.seed;
  fit_info["k_init"] = args.k_init;
  fit_info["nu_max"] = args.nu_max;
  fit_info["prune_epsilon"] = args.epsilon;

  std::vector<ctdens::vb::SweepRecord> sweeps;
  if (ctdens::is_mixture_estimator(id)) {
    const ctdens::vb::VbFit fit =
        ctdens::vb::evb_fit(data.values, ctdens::estimator_family(id), opts.priors, opts.vb_opts);
    sweeps = fit.trace;
    stored.estimate.id = id;
    stored.estimate.model = fit.model;
    fit_info["elbo"] = fit.elbo;
  } else {
    fit_info["folds_marginals"] = args.folds_marginals;
    ctdens::vb::FitOptions sel_opts = opts.vb_opts;
    sel_opts.seed = ctdens::derive_seed(args.seed, 31);
    const ctdens::MarginalSelection sel =
        ctdens::select_marginals(data.values, parse_marginal_kinds(all_marginal_names()),
                                 args.folds_marginals, ctdens::derive_seed(args.seed, 37),
                                 opts.priors, sel_opts);
    ctdens::io::json classes = ctdens::io::json::array();
    for (ctdens::MarginalKind k : sel.winners)
      classes.push_back(ctdens::marginal_kind_name(k));
    fit_info["marginal_classes"] = std::move(classes);
    stored.estimate =
        ctdens::fit_estimator(data.values, id, ctdens::MarginalPlan::from_models(sel.models), opts);
  }
  stored.fit_info = std::move(fit_info);
  ctdens::io::save_model(args.out_path, stored);
  if (!args.trace_path.empty())
    write_trace(args.trace_path, stored.estimate, sweeps);
  std::cout << "wrote " << args.out_path << "\n";
  return 0;
}

int run_score(const std::string& model_path, const std::string& data_path)
{
  const ctdens::io::StoredModel stored = ctdens::io::load_model(model_path);
  const ctdens::io::Dataset data = ctdens::io::load_csv(data_path);
  const ctdens::LpdsResult result = ctdens::lpds(stored.estimate, data.values);
  if (!result.nonfinite_rows.empty())
    std::cerr << "warning: non-finite log density at " << result.nonfinite_rows.size()
              << " rows (first: row " << result.nonfinite_rows.front() + 1 << ")\n";
  std::cout << format_double(result.value) << "\n";
  return 0;
}

int run_simulate(int d, int n, std::uint64_t seed, const std::string& variant,
                 const std::string& out_path)
{
  const ctdens::Dgp dgp(variant == "motivating" ? ctdens::DgpVariant::motivating
                                                : ctdens::DgpVariant::standard,
                        d);
  const Eigen::MatrixXd y = dgp.simulate(n, seed);
  std::vector<std::string> names;
  for (int j = 1; j <= d; ++j)
    names.push_back("y" + std::to_string(j));
  ctdens::io::atomic_write(out_path, ctdens::io::to_csv(names, y));
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_compare(const std::string& data_path, const std::string& simulate_spec,
                const std::vector<std::string>& estimator_args, int folds, int reps,
                std::uint64_t seed, const std::string& out_path)
{
  std::vector<ctdens::EstimatorId> estimators;
  for (const auto& name : estimator_args.empty() ? all_estimator_names() : estimator_args)
    estimators.push_back(ctdens::estimator_from_name(name));

  const ctdens::CtOptions opts;
  std::vector<ctdens::ComparisonRow> rows;
  if (!simulate_spec.empty()) {
    if (folds != 0)
      throw CLI::ValidationError("--folds", "must be 0 with --simulate (train/test protocol)");
    const SimulateSpec spec = parse_simulate_spec(simulate_spec);
    const ctdens::Dgp dgp(spec.variant, spec.d);
    rows = ctdens::run_comparison_simulated(dgp, spec.n, spec.n_test, reps, estimators, seed, opts);
  } else {
    if (folds < 2)
      throw CLI::ValidationError("--folds", "need at least 2 folds with --data");
    const ctdens::io::Dataset data = ctdens::io::load_csv(data_path);
    rows = ctdens::run_comparison_cv(data.values, estimators, folds, reps, seed, opts);
  }

  std::string out = "estimator,mean_lpds,sd_lpds,mean_seconds,n,d,B,seed\n";
  for (const auto& row : rows)
    out += ctdens::estimator_name(row.id) + "," + format_double(row.mean_lpds) + ","
           + format_double(row.sd_lpds) + "," + format_double(row.mean_seconds) + ","
           + std::to_string(row.n) + "," + std::to_string(row.d) + "," + std::to_string(row.folds)
           + "," + std::to_string(row.seed) + "\n";
  ctdens::io::atomic_write(out_path, out);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int run_marginals(const std::string& data_path, const std::vector<std::string>& candidate_args,
                  int folds, std::uint64_t seed)
{
  const ctdens::io::Dataset data = ctdens::io::load_csv(data_path);
  const std::vector<std::string> names = candidate_args.empty() ? all_marginal_names() : candidate_args;
  ctdens::vb::FitOptions sel_opts;
  sel_opts.seed = ctdens::derive_seed(seed, 31);
  const ctdens::MarginalSelection sel = ctdens::select_marginals(
      data.values, parse_marginal_kinds(names), folds, ctdens::derive_seed(seed, 37), {}, sel_opts);
  std::cout << "column,candidate,cv_lpds,selected\n";
  for (std::size_t j = 0; j < sel.table.size(); ++j)
    for (const auto& score : sel.table[j]) {
      const bool selected = score.kind == sel.winners[j];
      std::cout << (j + 1) << "," << ctdens::marginal_kind_name(score.kind) << ","
                << format_double(score.cv_lpds) << "," << (selected ? 1 : 0) << "\n";
    }
  return 0;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"copula-type density estimation with variational mixture models"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit an estimator and save the model as JSON");
  fit->add_option("--data", fit_args.data_path, "training data CSV")->required();
  fit->add_option("--estimator", fit_args.estimator, "estimator id")
      ->required()
      ->check(CLI::IsMember(all_estimator_names()));
  fit->add_option("--k-init", fit_args.k_init, "initial component count");
  fit->add_option("--folds-marginals", fit_args.folds_marginals, "folds for marginal selection");
  fit->add_option("--seed", fit_args.seed, "random seed");
  fit->add_option("--nu-max", fit_args.nu_max, "upper bound of the integer dof grid");
  fit->add_option("--epsilon", fit_args.epsilon, "factor-pruning threshold");
  fit->add_option("--out", fit_args.out_path, "output model path");
  fit->add_option("--trace", fit_args.trace_path, "optional per-sweep / per-iteration trace CSV");

  std::string score_model, score_data;
  auto* score = app.add_subcommand("score", "print the mean negative log density of a saved model");
  score->add_option("--model", score_model, "model JSON path")->required();
  score->add_option("--data", score_data, "test data CSV")->required();

  int sim_d = 2, sim_n = 0;
  std::uint64_t sim_seed = 0;
  std::string sim_variant = "standard", sim_out = "sample.csv";
  auto* simulate = app.add_subcommand("simulate", "draw from the synthetic data generator");
  simulate->add_option("--d", sim_d, "dimension")->required();
  simulate->add_option("--n", sim_n, "number of rows")->required();
  simulate->add_option("--seed", sim_seed, "random seed");
  simulate->add_option("--variant", sim_variant, "generator variant")
      ->check(CLI::IsMember({"standard", "motivating"}));
  simulate->add_option("--out", sim_out, "output CSV path");

  std::string cmp_data, cmp_simulate, cmp_out = "report.csv";
  std::vector<std::string> cmp_estimators;
  int cmp_folds = 10, cmp_reps = 10;
  std::uint64_t cmp_seed = 0;
  auto* compare = app.add_subcommand("compare", "score several estimators and write a report CSV");
  auto* cmp_data_opt = compare->add_option("--data", cmp_data, "data CSV (cross-validated protocol)");
  auto* cmp_sim_opt =
      compare->add_option("--simulate", cmp_simulate, "d=<dim>,n=<rows>[,test=<rows>][,variant=<v>]");
  cmp_data_opt->excludes(cmp_sim_opt);
  compare->add_option("--estimators", cmp_estimators, "estimator ids")
      ->delimiter(',')
      ->check(CLI::IsMember(all_estimator_names()));
  compare->add_option("--folds", cmp_folds, "fold count; 0 for the simulated train/test protocol");
  compare->add_option("--reps", cmp_reps, "replications");
  compare->add_option("--seed", cmp_seed, "master seed");
  compare->add_option("--out", cmp_out, "report CSV path");

  std::string marg_data;
  std::vector<std::string> marg_candidates;
  int marg_folds = 10;
  std::uint64_t marg_seed = 0;
  auto* marginals = app.add_subcommand("marginals", "cross-validated marginal class selection table");
  marginals->add_option("--data", marg_data, "data CSV")->required();
  marginals->add_option("--candidates", marg_candidates, "candidate classes")
      ->delimiter(',')
      ->check(CLI::IsMember(all_marginal_names()));
  marginals->add_option("--folds", marg_folds, "fold count");
  marginals->add_option("--seed", marg_seed, "random seed");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(fit))
      return run_fit(fit_args);
    if (app.got_subcommand(score))
      return run_score(score_model, score_data);
    if (app.got_subcommand(simulate))
      return run_simulate(sim_d, sim_n, sim_seed, sim_variant, sim_out);
    if (app.got_subcommand(compare)) {
      if (cmp_data.empty() && cmp_simulate.empty())
        throw CLI::ValidationError("compare", "one of --data or --simulate is required");
      return run_compare(cmp_data, cmp_simulate, cmp_estimators, cmp_folds, cmp_reps, cmp_seed,
                         cmp_out);
    }
    if (app.got_subcommand(marginals))
      return run_marginals(marg_data, marg_candidates, marg_folds, marg_seed);
    return 1;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    std::cerr << "run '" << (argc > 0 ? argv[0] : "ctdens") << " --help' for usage\n";
    return 1;
  } catch (const ctdens::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const ctdens::fit_error& e) {
    std::cerr << "fit error: " << e.what() << "\n";
    return 3;
  } catch (const ctdens::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

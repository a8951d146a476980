// hdbekk: command-line driver for simulation, fitting, model selection,
// BEKK recovery, portfolio backtests and Monte Carlo runs.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "hdbekk/design.hpp"
#include "hdbekk/errors.hpp"
#include "hdbekk/fista.hpp"
#include "hdbekk/forecast.hpp"
#include "hdbekk/io.hpp"
#include "hdbekk/model_select.hpp"
#include "hdbekk/parallel.hpp"
#include "hdbekk/recovery.hpp"
#include "hdbekk/simulate.hpp"

namespace fs = std::filesystem;
using namespace hdbekk;
using io::json;

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kData = 3, kNumeric = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  bool center = false;
  std::string out = ".";
};

json load_config(const Common& c) {
  if (c.config.empty()) return json::object();
  std::ifstream in(c.config);
  if (!in) throw ConfigError("cannot open config '" + c.config + "'");
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
}

std::size_t thread_count(const Common& c) { return c.threads ? c.threads : default_thread_count(); }

std::string out_path(const Common& c, const std::string& name) {
  fs::create_directories(c.out);
  return (fs::path(c.out) / name).string();
}

json run_header(const Common& c, const std::string& command, json resolved) {
  return json{{"command", command},
              {"threads", thread_count(c)},
              {"center", c.center},
              {"config", std::move(resolved)}};
}

ReturnPanel load_panel(const Common& c, io::Fields& f) {
  if (!f.has("input")) throw ConfigError("config: missing key 'input' (panel CSV path)");
  std::string path;
  f.get("input", path);
  ReturnPanel panel = io::read_csv(path);
  check_panel(panel);
  return c.center ? center_columns(panel) : panel;
}

// ---------------------------------------------------------------------------

int cmd_simulate(const Common& c) {
  const json cfg = load_config(c);
  io::Fields f(cfg, "config");
  DgpSpec dgp;
  if (f.has("dgp")) dgp = io::read_dgp(f.raw("dgp"));
  Index t_len = 1000;
  f.get("T", t_len);
  f.finish();
  if (t_len < 1) throw ConfigError("config.T must be >= 1");
  if (c.seed) dgp.seed = *c.seed;

  Rng rng = make_stream(dgp.seed, 0, 0);
  const BekkParams params = gen_bekk_params(dgp, rng);
  const SimPath path = simulate_series(params, t_len, dgp.burn_in, dgp.innovation, rng);

  io::write_text(out_path(c, "panel.csv"), io::csv_string(path.returns));
  io::write_text(out_path(c, "theta.csv"), io::csv_string(theta_from_bekk(params).values));
  json out = run_header(c, "simulate", json{{"dgp", io::to_json(dgp)}, {"T", t_len}});
  out["params"] = io::to_json(params);
  io::write_text(out_path(c, "params.json"), io::dump(out));
  return kOk;
}

int cmd_fit(const Common& c) {
  const json cfg = load_config(c);
  io::Fields f(cfg, "config");
  const ReturnPanel panel = load_panel(c, f);
  int p = 1;
  f.get("p", p);
  std::optional<double> lambda, tau;
  if (f.has("lambda")) lambda = f.real(f.raw("lambda"), "lambda");
  if (f.has("tau")) tau = f.real(f.raw("tau"), "tau");
  SelectConfig sc;
  if (f.has("select")) sc = io::read_select(f.raw("select"));
  if (f.has("fista")) sc.fista = io::read_fista(f.raw("fista"));
  f.finish();
  if (p < 1) throw ConfigError("config.p must be >= 1");
  if (lambda && *lambda < 0) throw ConfigError("config.lambda must be >= 0");
  if (tau && !(*tau > 0)) throw ConfigError("config.tau must be positive");
  sc.threads = thread_count(c);
  sc.fista.threads = sc.threads;

  std::optional<TuneResult> tuned;
  if (!lambda || !tau) {
    if (tau) sc.tau_grid = {*tau * *tau};
    if (lambda) sc.lambda_grid = {*lambda};
    tuned = tune_lambda_tau(panel, p, sc);
  }
  const double lam = lambda ? *lambda : tuned->lambda;
  const double ta = tau ? *tau : tuned->tau;
  const FitReport rep = fit_at(panel, p, lam, ta, sc.fista);

  io::write_text(out_path(c, "theta.csv"), io::csv_string(rep.theta.values));
  json resolved{{"p", p}, {"lambda", io::number(lam)}, {"tau", io::number(ta)}, {"select", io::to_json(sc)}};
  json out = run_header(c, "fit", resolved);
  out["report"] = json{{"p", rep.selected_p},
                       {"lambda", io::number(rep.lambda)},
                       {"tau", io::number(rep.tau)},
                       {"theta_csv", "theta.csv"},
                       {"nonzeros", (rep.theta.values.array() != 0.0).count()},
                       {"diagnostics",
                        {{"objective_trace_length", rep.diagnostics.objective_trace_length},
                         {"kkt_residual", rep.diagnostics.kkt_residual},
                         {"iterations", rep.diagnostics.iterations},
                         {"converged", rep.diagnostics.converged},
                         {"wall_seconds", rep.diagnostics.wall_seconds}}}};
  io::write_text(out_path(c, "fit.json"), io::dump(out));
  return kOk;
}

int cmd_select(const Common& c) {
  const json cfg = load_config(c);
  io::Fields f(cfg, "config");
  const ReturnPanel panel = load_panel(c, f);
  SelectConfig sc;
  AdamConfig adam;
  if (f.has("select")) sc = io::read_select(f.raw("select"));
  if (f.has("adam")) adam = io::read_adam(f.raw("adam"));
  f.finish();
  sc.threads = thread_count(c);

  const ModelSelection sel = select_model(panel, sc, adam);
  io::write_text(out_path(c, "theta.csv"), io::csv_string(sel.fit.theta.values));
  json tuning = json::array();
  for (const auto& t : sel.tuning)
    tuning.push_back(json{{"lambda", io::number(t.lambda)},
                          {"tau", io::number(t.tau)},
                          {"lambda_grid", io::vector_json(t.lambda_grid)},
                          {"tau_grid_vech", io::vector_json(t.tau_grid)},
                          {"msfe", io::matrix_json(t.msfe)}});
  json spectra = json::array();
  for (const auto& a : sel.components.aux)
    spectra.push_back(io::vector_json(std::vector<double>(a.spectrum.data(), a.spectrum.data() + a.spectrum.size())));
  json out = run_header(c, "select", json{{"select", io::to_json(sc)}, {"adam", io::to_json(adam)}});
  out["result"] = json{{"p", sel.p},
                       {"K", sel.components.K},
                       {"lambda", io::number(sel.lambda)},
                       {"tau", io::number(sel.tau)},
                       {"bic", io::vector_json(sel.lags.bic)},
                       {"spectra", std::move(spectra)},
                       {"tuning", std::move(tuning)},
                       {"theta_csv", "theta.csv"}};
  io::write_text(out_path(c, "select.json"), io::dump(out));
  return kOk;
}

int cmd_recover(const Common& c) {
  const json cfg = load_config(c);
  io::Fields f(cfg, "config");
  if (!f.has("theta")) throw ConfigError("config: missing key 'theta' (coefficient CSV path)");
  std::string theta_path;
  f.get("theta", theta_path);
  int p = 1;
  f.get("p", p);
  std::vector<int> k;
  if (f.has("K")) f.get("K", k);
  std::string loss = "nuclear";
  f.get("loss", loss);
  double floor = kDefaultPsdFloor;
  f.get_real("floor", floor);
  AdamConfig adam;
  if (f.has("adam")) adam = io::read_adam(f.raw("adam"));
  f.finish();
  if (p < 1) throw ConfigError("config.p must be >= 1");
  if (k.empty()) k.assign(std::size_t(p), 1);
  if (int(k.size()) != p) throw ConfigError("config.K must list one component count per lag");
  if (loss != "nuclear" && loss != "te") throw ConfigError("config.loss must be \"nuclear\" or \"te\"");
  if (!(floor >= 0)) throw ConfigError("config.floor must be >= 0");

  const Matrix values = io::read_csv(theta_path);
  if (values.cols() < 1 || values.rows() != p * values.cols() + 1)
    throw DataError(theta_path + ": expected a (p d + 1) x d coefficient matrix for p = " + std::to_string(p));
  side_from_vech_dim(values.cols());
  const CoefStack theta(p, values);
  const BekkRecovery rec = recover_bekk(theta, k, loss == "te" ? SpectralLoss::Kind::TopEigen : SpectralLoss::Kind::Nuclear,
                                        adam, floor, thread_count(c));
  json spectra = json::array();
  for (const auto& a : rec.aux)
    spectra.push_back(io::vector_json(std::vector<double>(a.spectrum.data(), a.spectrum.data() + a.spectrum.size())));
  json out = run_header(c, "recover",
                        json{{"theta", theta_path}, {"p", p}, {"K", k}, {"loss", loss}, {"floor", floor},
                             {"adam", io::to_json(adam)}});
  out["bekk"] = io::to_json(rec.params);
  out["spectra"] = std::move(spectra);
  io::write_text(out_path(c, "bekk.json"), io::dump(out));
  return kOk;
}

int cmd_backtest(const Common& c) {
  const json cfg = load_config(c);
  io::Fields f(cfg, "config");
  const ReturnPanel panel = load_panel(c, f);
  BacktestConfig bc;
  std::string estimator = to_string(bc.estimator);
  f.get("estimator", estimator);
  bc.estimator = cov_estimator_from_string(estimator);
  f.get_real("test_fraction", bc.test_fraction);
  f.get("refit_every", bc.refit_every);
  f.get_real("floor", bc.floor);
  if (f.has("select")) bc.select = io::read_select(f.raw("select"));
  if (f.has("adam")) bc.adam = io::read_adam(f.raw("adam"));
  if (f.has("p")) {
    int p = 1;
    f.get("p", p);
    bc.p = p;
  }
  if (f.has("K")) {
    std::vector<int> k;
    f.get("K", k);
    bc.K = k;
  }
  if (f.has("lambda")) bc.lambda = f.real(f.raw("lambda"), "lambda");
  if (f.has("tau")) bc.tau = f.real(f.raw("tau"), "tau");
  f.finish();
  bc.select.threads = thread_count(c);
  try {
    bc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const BacktestReport rep = run_backtest(panel, bc);
  std::ostringstream csv;
  csv << "origin,return\n";
  for (std::size_t i = 0; i < rep.returns.size(); ++i) csv << rep.origins[i] << ',' << io::format_number(rep.returns[i]) << '\n';
  io::write_text(out_path(c, "returns.csv"), csv.str());
  json resolved{{"estimator", estimator},
                {"test_fraction", bc.test_fraction},
                {"refit_every", bc.refit_every},
                {"floor", bc.floor},
                {"select", io::to_json(bc.select)},
                {"adam", io::to_json(bc.adam)}};
  if (bc.p) resolved["p"] = *bc.p;
  if (bc.K) resolved["K"] = *bc.K;
  if (bc.lambda) resolved["lambda"] = io::number(*bc.lambda);
  if (bc.tau) resolved["tau"] = io::number(*bc.tau);
  json out = run_header(c, "backtest", resolved);
  out["report"] = io::to_json(rep);
  io::write_text(out_path(c, "backtest.json"), io::dump(out));
  return kOk;
}

int cmd_mc(const Common& c) {
  const json cfg = load_config(c);
  io::Fields f(cfg, "config");
  McConfig mc;
  if (f.has("dgp")) mc.dgp = io::read_dgp(f.raw("dgp"));
  f.get("T_grid", mc.t_grid);
  f.get("reps", mc.reps);
  f.get("tune", mc.tune);
  f.get_real("lambda", mc.lambda);
  f.get_real("tau", mc.tau);
  f.get("untruncated", mc.untruncated);
  f.get("recover", mc.recover);
  f.get("selection", mc.selection);
  f.get("pd", mc.pd);
  if (f.has("select")) mc.select = io::read_select(f.raw("select"));
  if (f.has("adam")) mc.adam = io::read_adam(f.raw("adam"));
  f.finish();
  if (c.seed) mc.dgp.seed = *c.seed;
  mc.threads = thread_count(c);
  try {
    mc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  const McResult res = run_mc(mc);
  std::ostringstream csv;
  write_mc_csv(csv, res);
  io::write_text(out_path(c, "mc.csv"), csv.str());
  json summary = json::array();
  for (const auto& e : res.summary()) summary.push_back(io::to_json(e));
  json failures = json::array();
  for (const auto& fl : res.failures) failures.push_back(json{{"rep", fl.rep}, {"T", fl.t}, {"message", fl.message}});
  json resolved{{"dgp", io::to_json(mc.dgp)},
                {"T_grid", mc.t_grid},
                {"reps", mc.reps},
                {"tune", mc.tune},
                {"lambda", io::number(mc.lambda)},
                {"tau", io::number(mc.tau)},
                {"untruncated", mc.untruncated},
                {"recover", mc.recover},
                {"selection", mc.selection},
                {"pd", mc.pd},
                {"select", io::to_json(mc.select)},
                {"adam", io::to_json(mc.adam)}};
  json out = run_header(c, "mc", resolved);
  out.erase("threads");  // the summary must not depend on the thread count
  out["summary"] = std::move(summary);
  out["failures"] = std::move(failures);
  io::write_text(out_path(c, "mc_summary.json"), io::dump(out));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Truncated l1-regularised estimation of high-dimensional BEKK-ARCH models"};
  app.require_subcommand(1);
  Common common;
  struct Entry {
    const char* name;
    const char* help;
    int (*run)(const Common&);
  };
  const Entry entries[] = {
      {"simulate", "Simulate a sparse BEKK-ARCH panel", cmd_simulate},
      {"fit", "Fit the truncated l1,1-regularised vech regression", cmd_fit},
      {"select", "Tune (lambda, tau), select p by BIC and K by the ridge ratio", cmd_select},
      {"recover", "Recover Omega and A_ik from a fitted coefficient matrix", cmd_recover},
      {"backtest", "Expanding-window minimum-variance portfolio backtest", cmd_backtest},
      {"mc", "Monte Carlo experiment", cmd_mc},
  };
  int (*chosen)(const Common&) = nullptr;
  for (const auto& e : entries) {
    CLI::App* sub = app.add_subcommand(e.name, e.help);
    sub->add_option("--config", common.config, "JSON config file");
    sub->add_option("--seed", common.seed, "Override the RNG seed");
    sub->add_option("--threads", common.threads, "Worker threads (default: available cores)");
    sub->add_flag("--center", common.center, "Demean panel columns before fitting");
    sub->add_option("--out", common.out, "Output directory");
    sub->callback([&chosen, run = e.run] { chosen = run; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  try {
    return chosen(common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
}

#include "sfsir/cli.hpp"
#include "sfsir/error.hpp"
#include "sfsir/evaluate.hpp"
#include "sfsir/parallel.hpp"
#include "sfsir/simd.hpp"
#include "sfsir/simulate.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace sfsir {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common
{
  std::size_t threads = 0;
};

void add_threads(CLI::App* cmd, Common& common)
{
  cmd->add_option("--threads", common.threads, "Worker threads (default: SFSIR_THREADS or all cores)");
}

void ensure_dir(const fs::path& dir)
{
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw InputError("cannot create output directory " + dir.string());
}

void write_json(const json& j, const fs::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json bandwidths_json(const BandwidthSet& b)
{
  return { { "h_mu", b.h_mu }, { "h_c", b.h_c }, { "b", b.b }, { "h_t", b.h_t }, { "h_y", b.h_y } };
}

class Manifest
{
public:
  Manifest(std::string command, const std::vector<std::string>& args)
    : start_(std::chrono::steady_clock::now())
  {
    j_["command"] = std::move(command);
    j_["arguments"] = args;
    j_["versions"] = { { "sfsir", kVersion },
                       { "eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION) },
                       { "cli11", CLI11_VERSION },
                       { "compiler", __VERSION__ } };
    j_["simd"] = std::string(simd::to_string(simd::active_level()));
    j_["threads"] = thread_count();
    j_["outputs"] = json::array();
  }

  void set(const std::string& key, json value) { j_[key] = std::move(value); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.filename().string()); }

  void write(const fs::path& dir)
  {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    j_["wall_time_seconds"] = secs;
    output(dir / "manifest.json");
    write_json(j_, dir / "manifest.json");
  }

private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

// ---------------------------------------------------------------------------

struct SimulateArgs
{
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& args, std::ostream& out)
{
  Manifest manifest("simulate", args);
  auto config = load_simulation_config(a.config);
  if (a.seed)
    config.seed = *a.seed;
  const fs::path dir(a.out);
  ensure_dir(dir);
  const auto data = simulate_dataset(config);
  save_dataset(data.dataset, dir / "observations.csv", dir / "responses.csv");
  write_truth_json(data, config, dir / "truth.json");
  for (const char* f : { "observations.csv", "responses.csv", "truth.json" })
    manifest.output(dir / f);
  manifest.set("config", to_json(config));
  manifest.set("seed", config.seed);
  manifest.write(dir);
  out << "simulated " << data.dataset.size() << " sites, " << data.dataset.total_observations() << " observations -> "
      << dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct DataArgs
{
  std::string observations;
  std::string responses;
  bool rescale_time = false;
};

void add_data_options(CLI::App* cmd, DataArgs& d)
{
  cmd->add_option("--observations", d.observations, "CSV with site_id,sx,sy,t,z")->required();
  cmd->add_option("--responses", d.responses, "CSV with site_id,y")->required();
  cmd->add_flag("--rescale-time", d.rescale_time, "Map the observed time range onto [0, 1]");
}

SpatialFunctionalDataset load(const DataArgs& d)
{
  return load_dataset(d.observations, d.responses, { d.rescale_time });
}

struct FitArgs
{
  DataArgs data;
  std::string out;
  std::string scheme = "subj";
  double theta = 0.5;
  std::optional<double> h_mu, h_c, b, h_t, h_y;
  bool cv = false;
  std::size_t folds = 3;
  std::uint64_t cv_seed = 0;
  std::vector<double> cv_span{ 0.5, 4.0 };
  double c_b = 1.0;
  std::size_t K = 1;
  std::size_t grid = 101;
  double alpha = 0.05;
  std::string method = "sfsir";
  double neighbor_fraction = 0.2;
  std::size_t bins = 0;
  std::string kernel = "epanechnikov";
  double fve = 0.95;
  std::optional<std::size_t> L;
};

void add_span_option(CLI::App* cmd, std::vector<double>& span)
{
  cmd->add_option("--cv-span", span, "Candidate range as multiples LO,HI of the pilot bandwidth")
    ->delimiter(',')
    ->expected(2)
    ->capture_default_str();
}

CandidateSpan candidate_span(const std::vector<double>& v)
{
  return { v.at(0), v.at(1) };
}

void add_fit_options(CLI::App* cmd, FitArgs& f)
{
  cmd->add_option("--scheme", f.scheme, "Weighting: subj, obs or mixed")->capture_default_str();
  cmd->add_option("--theta", f.theta, "OBS share for --scheme mixed")->capture_default_str();
  cmd->add_option("--h-mu", f.h_mu, "Mean bandwidth");
  cmd->add_option("--h-c", f.h_c, "Covariance bandwidth (Gamma and R)");
  cmd->add_option("--b", f.b, "Spatial bandwidth (default: rule with --c-b)");
  cmd->add_option("--h-t", f.h_t, "Time bandwidth of m(t, y)");
  cmd->add_option("--h-y", f.h_y, "Response bandwidth of m(t, y)");
  cmd->add_flag("--cv", f.cv, "Select h_mu, h_c, h_t, h_y by cross-validation");
  cmd->add_option("--folds", f.folds, "Cross-validation folds")->capture_default_str();
  cmd->add_option("--cv-seed", f.cv_seed, "Fold assignment seed")->capture_default_str();
  add_span_option(cmd, f.cv_span);
  cmd->add_option("--c-b", f.c_b, "Constant of the spatial bandwidth rule")->capture_default_str();
  cmd->add_option("--K", f.K, "Number of e.d.r. directions")->capture_default_str();
  cmd->add_option("--grid-size", f.grid, "Time grid points")->capture_default_str();
  cmd->add_option("--trim-alpha", f.alpha, "Response trimming level")->capture_default_str();
  cmd->add_option("--neighbor-fraction", f.neighbor_fraction, "Nearest-site fraction for cross products")
    ->capture_default_str();
  cmd->add_option("--bins", f.bins, "Time bins for cross products (0: none)")->capture_default_str();
  cmd->add_option("--kernel", f.kernel, "epanechnikov, quartic or uniform")->capture_default_str();
  cmd->add_option("--fve", f.fve, "Fraction of variance explained for the truncation")->capture_default_str();
  cmd->add_option("--L", f.L, "Fixed truncation order (overrides --fve)");
}

FitOptions fit_options(const FitArgs& f)
{
  FitOptions o;
  o.scheme = parse_weight_scheme(f.scheme, f.theta);
  BandwidthSet defaults;
  o.bandwidths = { f.h_mu.value_or(defaults.h_mu), f.h_c.value_or(defaults.h_c), f.b.value_or(defaults.b),
                   f.h_t.value_or(defaults.h_t), f.h_y.value_or(defaults.h_y) };
  o.cross_validate = f.cv;
  o.folds = f.folds;
  o.cv_seed = f.cv_seed;
  o.cv_span = candidate_span(f.cv_span);
  if (!f.b)
    o.c_b = f.c_b;
  o.K = f.K;
  o.truncation = f.L ? TruncationRule::fixed(*f.L) : TruncationRule::fve(f.fve);
  if (f.grid < 3)
    throw std::invalid_argument("--grid-size must be at least 3");
  o.grid_size = f.grid;
  o.trim = { f.alpha };
  o.spatial = { f.neighbor_fraction, f.bins };
  o.kernel = { parse_kernel_family(f.kernel) };
  return o;
}

json edr_json(const EdrResult& e)
{
  return { { "K", e.K },
           { "L", e.L },
           { "eigenvalues", e.eigenvalues },
           { "covariance_eigenvalues", e.covariance_eigenvalues },
           { "degenerate", e.degenerate },
           { "warning", e.warning } };
}

int cmd_fit(const FitArgs& f, const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  Manifest manifest("fit", args);
  const auto method = parse_method(f.method);
  auto options = fit_options(f);
  options.sfsir = method == Method::Sfsir;
  options.fsir = method == Method::Fsir;
  const auto dataset = load(f.data);
  const fs::path dir(f.out);
  ensure_dir(dir);

  const auto r = fit_model(dataset, options);
  auto emit = [&](const char* name, auto&& writer) {
    writer(dir / name);
    manifest.output(dir / name);
  };
  emit("mean.csv", [&](const fs::path& p) { write_mean_csv(r.mean, p); });
  emit("gamma.csv", [&](const fs::path& p) { write_surface_csv(r.gamma, p); });
  if (r.r0) {
    emit("r0.csv", [&](const fs::path& p) { write_surface_csv(*r.r0, p); });
    emit("nugget.csv", [&](const fs::path& p) { write_surface_csv(*r.nugget, p); });
  }
  emit("re.csv", [&](const fs::path& p) { write_surface_csv(r.re, p); });
  const auto& edr = method == Method::Sfsir ? *r.sfsir : *r.fsir;
  emit("directions.csv", [&](const fs::path& p) { write_directions_csv(edr, p); });

  json eigen = edr_json(edr);
  eigen["method"] = std::string(to_string(method));
  eigen["bandwidths"] = bandwidths_json(r.bandwidths);
  emit("eigen.json", [&](const fs::path& p) { write_json(eigen, p); });

  manifest.set("config", { { "method", std::string(to_string(method)) },
                           { "scheme", std::string(to_string(options.scheme)) },
                           { "theta", options.scheme.obs_share() },
                           { "bandwidths", bandwidths_json(r.bandwidths) },
                           { "cv", options.cross_validate },
                           { "folds", options.folds },
                           { "cv_span", { options.cv_span.lower, options.cv_span.upper } },
                           { "K", options.K },
                           { "grid_size", options.grid_size },
                           { "trim_alpha", options.trim.alpha },
                           { "neighbor_fraction", options.spatial.neighbor_fraction },
                           { "bins", options.spatial.bins },
                           { "kernel", std::string(to_string(options.kernel.family)) } });
  manifest.set("seed", options.cv_seed);
  manifest.write(dir);

  if (edr.degenerate)
    err << "warning: " << edr.warning << '\n';
  out << to_string(method) << ": L = " << edr.L << ", lambda =";
  for (double l : edr.eigenvalues)
    out << ' ' << l;
  out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct CvArgs
{
  DataArgs data;
  std::string out;
  std::string target = "all";
  std::string scheme = "subj";
  double theta = 0.5;
  std::size_t folds = 3;
  std::uint64_t seed = 0;
  std::vector<double> span{ 0.5, 4.0 };
  double c_b = 1.0;
};

int cmd_cv(const CvArgs& a, const std::vector<std::string>& args, std::ostream& out)
{
  Manifest manifest("cv", args);
  const auto scheme = parse_weight_scheme(a.scheme, a.theta);
  const auto dataset = load(a.data);
  std::vector<CvTarget> targets;
  if (a.target == "all")
    targets = { CvTarget::Mean, CvTarget::Gamma, CvTarget::M };
  else
    targets = { parse_cv_target(a.target) };

  CvPlan plan;
  plan.folds = a.folds;
  plan.seed = a.seed;
  plan.span = candidate_span(a.span);
  BandwidthSet bw;
  json report = json::object();
  for (CvTarget t : targets) {
    const auto r = cross_validate(dataset, plan, t, scheme, bw, {});
    bw = r.selected;
    json cands = json::array();
    for (std::size_t c = 0; c < r.candidates.size(); ++c) {
      json row = bandwidths_json(r.candidates[c]);
      row["score"] = std::isfinite(r.scores[c]) ? json(r.scores[c]) : json(nullptr);
      cands.push_back(row);
    }
    report[std::string(to_string(t))] = { { "selected_index", r.selected_index }, { "candidates", cands } };
  }
  bw.b = spatial_bandwidth_rule(dataset.size(), site_geometry(dataset).diameter, a.c_b);
  report["selected"] = bandwidths_json(bw);

  out << report["selected"].dump() << '\n';
  if (!a.out.empty()) {
    const fs::path dir(a.out);
    ensure_dir(dir);
    write_json(report, dir / "cv.json");
    manifest.output(dir / "cv.json");
    manifest.set("config", { { "target", a.target }, { "scheme", a.scheme }, { "folds", a.folds } });
    manifest.set("seed", a.seed);
    manifest.write(dir);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct StudyArgs
{
  std::size_t n = 50;
  std::size_t reps = 20;
  std::uint64_t seed = 1;
  std::vector<std::string> scenarios{ "sparse+nugget" };
  std::vector<std::string> schemes{ "subj" };
  double theta = 0.5;
  std::string out;
  bool plot = false;
  bool fixed_sites = false;
  bool no_cv = false;
  FitArgs fit;
};

int cmd_study(const StudyArgs& a, const std::vector<std::string>& args, std::ostream& out)
{
  Manifest manifest("study", args);
  StudyConfig config;
  config.n = a.n;
  config.reps = a.reps;
  config.seed = a.seed;
  config.fixed_sites = a.fixed_sites;
  config.scenarios.clear();
  for (const auto& s : a.scenarios)
    config.scenarios.push_back(parse_scenario(s));
  config.schemes.clear();
  for (const auto& s : a.schemes)
    config.schemes.push_back(parse_weight_scheme(s, a.theta));
  config.fit = fit_options(a.fit);
  config.fit.cross_validate = !a.no_cv;
  config.simulation.grid_size = config.fit.grid_size;
  if (config.n < 2)
    throw std::invalid_argument("--n must be at least 2");

  const auto result = run_study(config);
  const fs::path dir(a.out);
  ensure_dir(dir);
  write_study_csv(result, dir / "metrics.csv");
  manifest.output(dir / "metrics.csv");
  {
    std::ofstream txt(dir / "metrics.txt", std::ios::binary);
    if (!txt)
      throw InputError("cannot write " + (dir / "metrics.txt").string());
    write_study_table(result, txt);
  }
  manifest.output(dir / "metrics.txt");
  write_replications_csv(result, dir / "replications.csv");
  manifest.output(dir / "replications.csv");
  if (a.plot) {
    write_plot_data(result, dir / "plot_data.csv");
    manifest.output(dir / "plot_data.csv");
  }
  json scen = json::array();
  for (const auto& s : config.scenarios)
    scen.push_back(s.name());
  json sch = json::array();
  for (const auto& s : config.schemes)
    sch.push_back(std::string(to_string(s)));
  manifest.set("config", { { "n", config.n },
                           { "reps", config.reps },
                           { "scenarios", scen },
                           { "schemes", sch },
                           { "cv", config.fit.cross_validate },
                           { "grid_size", config.fit.grid_size },
                           { "fixed_sites", config.fixed_sites },
                           { "simulation", to_json(config.simulation) } });
  manifest.set("seed", config.seed);
  manifest.set("replications", { { "attempted", result.attempted }, { "succeeded", result.succeeded } });
  manifest.write(dir);

  write_study_table(result, out);
  for (const auto& r : result.records)
    if (!r.ok)
      out << "replication " << r.replication << " (" << r.scenario << ", " << r.scheme << ") failed: " << r.error
          << '\n';
  const bool enough = static_cast<double>(result.succeeded) >= 0.8 * static_cast<double>(result.attempted);
  return enough ? kExitOk : kExitComputation;
}

// ---------------------------------------------------------------------------

int cmd_geometry(const DataArgs& d, const std::string& out_dir, const std::vector<std::string>& args, std::ostream& out)
{
  Manifest manifest("geometry", args);
  const auto dataset = load(d);
  const auto g = site_geometry(dataset);
  const auto counts = dataset.counts();
  json j = { { "n", dataset.size() },
             { "total_observations", dataset.total_observations() },
             { "min_count", *std::min_element(counts.begin(), counts.end()) },
             { "max_count", *std::max_element(counts.begin(), counts.end()) },
             { "delta_n", g.delta_n },
             { "Delta_n", g.Delta_n },
             { "diameter", g.diameter } };
  out << j.dump(2) << '\n';
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    ensure_dir(dir);
    write_json(j, dir / "geometry.json");
    manifest.output(dir / "geometry.json");
    manifest.write(dir);
  }
  return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{ "Sliced inverse regression for spatially indexed functional data" };
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Common common;

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic dataset from a JSON config");
  c_sim->add_option("--config", sim.config, "Simulation config (JSON)")->required();
  c_sim->add_option("--out", sim.out, "Output directory")->required();
  c_sim->add_option("--seed", sim.seed, "Override the config seed");
  add_threads(c_sim, common);

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Estimate covariance surfaces and e.d.r. directions");
  add_data_options(c_fit, fit.data);
  c_fit->add_option("--out", fit.out, "Output directory")->required();
  c_fit->add_option("--method", fit.method, "sfsir or fsir")->capture_default_str();
  add_fit_options(c_fit, fit);
  add_threads(c_fit, common);

  CvArgs cv;
  auto* c_cv = app.add_subcommand("cv", "Cross-validate bandwidths");
  add_data_options(c_cv, cv.data);
  c_cv->add_option("--out", cv.out, "Output directory for cv.json");
  c_cv->add_option("--target", cv.target, "mean, gamma, m or all")->capture_default_str();
  c_cv->add_option("--scheme", cv.scheme, "Weighting: subj, obs or mixed")->capture_default_str();
  c_cv->add_option("--theta", cv.theta, "OBS share for --scheme mixed")->capture_default_str();
  c_cv->add_option("--folds", cv.folds, "Folds")->capture_default_str();
  c_cv->add_option("--seed", cv.seed, "Fold assignment seed")->capture_default_str();
  add_span_option(c_cv, cv.span);
  c_cv->add_option("--c-b", cv.c_b, "Constant of the spatial bandwidth rule")->capture_default_str();
  add_threads(c_cv, common);

  StudyArgs study;
  auto* c_study = app.add_subcommand("study", "Monte Carlo comparison of SFSIR and FSIR");
  c_study->add_option("--n", study.n, "Sites per replication")->capture_default_str();
  c_study->add_option("--reps", study.reps, "Replications per scenario")->capture_default_str();
  c_study->add_option("--seed", study.seed, "Base seed")->capture_default_str();
  c_study->add_option("--scenarios", study.scenarios, "e.g. sparse+nugget dense+no-nugget")
    ->delimiter(',')
    ->capture_default_str();
  c_study->add_option("--schemes", study.schemes, "subj, obs, mixed")->delimiter(',')->capture_default_str();
  c_study->add_option("--out", study.out, "Output directory")->required();
  c_study->add_flag("--emit-plot-data", study.plot, "Write plot_data.csv (mean curve +/- 1 SD)");
  c_study->add_flag("--fixed-sites", study.fixed_sites, "Reuse one site draw across replications");
  c_study->add_flag("--no-cv", study.no_cv, "Use the given bandwidths instead of cross-validation");
  add_fit_options(c_study, study.fit);
  c_study->remove_option(c_study->get_option("--scheme"));
  c_study->remove_option(c_study->get_option("--cv"));
  add_threads(c_study, common);

  DataArgs geo;
  std::string geo_out;
  auto* c_geo = app.add_subcommand("geometry", "Site geometry diagnostics");
  add_data_options(c_geo, geo);
  c_geo->add_option("--out", geo_out, "Output directory for geometry.json");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string(kVersion) + "\n" : app.help());
      return kExitOk;
    }
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (common.threads > 0)
      set_thread_count(common.threads);
    if (*c_sim)
      return cmd_simulate(sim, args, out);
    if (*c_fit)
      return cmd_fit(fit, args, out, err);
    if (*c_cv)
      return cmd_cv(cv, args, out);
    if (*c_study)
      return cmd_study(study, args, out);
    if (*c_geo)
      return cmd_geometry(geo, geo_out, args, out);
  } catch (const InputError& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const ComputationError& e) {
    err << "computation error: " << e.what() << '\n';
    return kExitComputation;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitComputation;
  }
  return kExitUsage;
}

} // namespace sfsir

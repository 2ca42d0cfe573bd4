#include "sfsir/evaluate.hpp"
#include "sfsir/error.hpp"
#include "sfsir/parallel.hpp"
#include "sfsir/smoothing.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace sfsir {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string lower(std::string_view s)
{
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double bandwidth_product(const BandwidthSet& bw, CvTarget target)
{
  switch (target) {
    case CvTarget::Mean:
      return bw.h_mu;
    case CvTarget::Gamma:
      return bw.h_c;
    case CvTarget::M:
    default:
      return bw.h_t * bw.h_y;
  }
}

std::string describe(const BandwidthSet& bw, CvTarget target)
{
  std::ostringstream s;
  switch (target) {
    case CvTarget::Mean:
      s << "h_mu=" << bw.h_mu;
      break;
    case CvTarget::Gamma:
      s << "h_c=" << bw.h_c;
      break;
    case CvTarget::M:
      s << "(h_t=" << bw.h_t << ", h_y=" << bw.h_y << ")";
      break;
  }
  return s.str();
}

// Pooled (T, Z) data with observation weights; optionally Y as a second covariate.
LocalLinearSmoother observation_smoother(const SpatialFunctionalDataset& d,
                                         const WeightScheme& scheme,
                                         bool with_response,
                                         KernelSpec kernel)
{
  const SchemeWeights weights(scheme, d.counts());
  SmootherData data;
  data.dims = with_response ? 2 : 1;
  data.reserve(d.total_observations());
  for (std::size_t i = 0; i < d.size(); ++i)
    for (std::size_t j = 0; j < d[i].count(); ++j) {
      const double x[2] = { d[i].times[j], d[i].response };
      data.push(std::span<const double>(x, static_cast<std::size_t>(data.dims)), d[i].values[j], weights.obs()[i]);
    }
  return LocalLinearSmoother(std::move(data), kernel);
}

double predict(const LocalLinearSmoother& s, const Point& at, const std::array<double, 3>& bw)
{
  const auto fit = s.fit(at, bw);
  return fit.status == FitStatus::Missing ? std::numeric_limits<double>::quiet_NaN() : fit.intercept;
}

// Held-out SSE of every candidate on one fold; NaN predictions give +inf.
std::vector<double> fold_scores(const SpatialFunctionalDataset& train,
                                const SpatialFunctionalDataset& test,
                                const std::vector<BandwidthSet>& candidates,
                                CvTarget target,
                                const WeightScheme& scheme,
                                const BandwidthSet& base,
                                KernelSpec kernel)
{
  std::vector<double> scores(candidates.size(), 0.0);
  auto accumulate = [&](std::size_t c, double predicted, double observed) {
    if (std::isnan(predicted))
      scores[c] = kInf;
    else
      scores[c] += (observed - predicted) * (observed - predicted);
  };

  if (target == CvTarget::Mean || target == CvTarget::M) {
    const bool with_y = target == CvTarget::M;
    const auto smoother = observation_smoother(train, scheme, with_y, kernel);
    parallel_for(candidates.size(), [&](std::size_t c) {
      const auto& bw = candidates[c];
      const std::array<double, 3> h = with_y ? std::array<double, 3>{ bw.h_t, bw.h_y, 1.0 }
                                             : std::array<double, 3>{ bw.h_mu, 1.0, 1.0 };
      for (const auto& s : test.subjects())
        for (std::size_t j = 0; j < s.count() && std::isfinite(scores[c]); ++j)
          accumulate(c, predict(smoother, { s.times[j], s.response, 0.0 }, h), s.values[j]);
    });
    return scores;
  }

  // Gamma: residuals against the training mean, evaluated at the raw times.
  const auto mean_smoother = observation_smoother(train, scheme, false, kernel);
  const std::array<double, 3> h_mu{ base.h_mu, 1.0, 1.0 };
  auto residuals = [&](const Subject& s) {
    std::vector<double> r(s.count());
    for (std::size_t j = 0; j < s.count(); ++j)
      r[j] = s.values[j] - predict(mean_smoother, { s.times[j], 0.0, 0.0 }, h_mu);
    return r;
  };

  std::vector<std::size_t> counts;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < train.size(); ++i)
    if (train[i].count() >= 2) {
      usable.push_back(i);
      counts.push_back(train[i].count());
    }
  if (counts.size() < 2)
    throw ComputationError("cross_validate: training fold has fewer than 2 subjects with repeated observations");
  const SchemeWeights weights(scheme, counts);
  SmootherData data;
  data.dims = 2;
  for (std::size_t u = 0; u < usable.size(); ++u) {
    const auto& s = train[usable[u]];
    const auto r = residuals(s);
    for (std::size_t j = 0; j < s.count(); ++j)
      for (std::size_t k = 0; k < s.count(); ++k)
        if (j != k && std::isfinite(r[j] * r[k])) {
          const double x[2] = { s.times[j], s.times[k] };
          data.push(x, r[j] * r[k], weights.within()[u]);
        }
  }
  const LocalLinearSmoother gamma_smoother(std::move(data), kernel);

  std::vector<std::vector<double>> test_residuals;
  for (const auto& s : test.subjects())
    test_residuals.push_back(residuals(s));
  parallel_for(candidates.size(), [&](std::size_t c) {
    const std::array<double, 3> h{ candidates[c].h_c, candidates[c].h_c, 1.0 };
    for (std::size_t i = 0; i < test.size() && std::isfinite(scores[c]); ++i) {
      const auto& s = test[i];
      const auto& r = test_residuals[i];
      // the fit is symmetric in (t1, t2), so score each unordered pair twice
      for (std::size_t j = 0; j < s.count(); ++j)
        for (std::size_t k = j + 1; k < s.count(); ++k) {
          const double g = predict(gamma_smoother, { s.times[j], s.times[k], 0.0 }, h);
          accumulate(c, g, r[j] * r[k]);
          accumulate(c, g, r[j] * r[k]);
        }
    }
  });
  return scores;
}

} // namespace

std::string_view to_string(CvTarget target) noexcept
{
  switch (target) {
    case CvTarget::Mean:
      return "mean";
    case CvTarget::Gamma:
      return "gamma";
    case CvTarget::M:
    default:
      return "m";
  }
}

CvTarget parse_cv_target(std::string_view name)
{
  const auto s = lower(name);
  if (s == "mean" || s == "mu")
    return CvTarget::Mean;
  if (s == "gamma")
    return CvTarget::Gamma;
  if (s == "m")
    return CvTarget::M;
  throw std::invalid_argument("unknown CV target '" + std::string(name) + "' (expected mean, gamma or m)");
}

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed)
{
  if (folds < 2)
    throw std::invalid_argument("cross-validation needs at least 2 folds");
  if (n < folds)
    throw std::invalid_argument("cross-validation needs at least as many subjects as folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{ 0 });
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> fold(n);
  for (std::size_t pos = 0; pos < n; ++pos)
    fold[order[pos]] = pos % folds;
  return fold;
}

double pilot_bandwidth(std::span<const double> values, std::size_t dims, std::size_t m)
{
  if (values.empty())
    throw std::invalid_argument("pilot_bandwidth: no values");
  if (m == 0)
    m = values.size();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  double range = *hi - *lo;
  if (!(range > 0.0))
    range = 1.0;
  return range * std::pow(static_cast<double>(m), -1.0 / (static_cast<double>(dims) + 4.0));
}

std::vector<double> candidate_values(double pilot, CandidateSpan span)
{
  if (!(span.lower > 0.0 && span.upper >= span.lower))
    throw std::invalid_argument("candidate span needs 0 < lower <= upper");
  std::vector<double> out;
  constexpr int count = 6;
  const double ratio = span.upper / span.lower;
  for (int k = 0; k < count; ++k)
    out.push_back(pilot * span.lower * std::pow(ratio, static_cast<double>(k) / (count - 1)));
  return out;
}

std::vector<BandwidthSet> default_candidates(const SpatialFunctionalDataset& dataset,
                                             CvTarget target,
                                             const BandwidthSet& base,
                                             CandidateSpan span)
{
  std::vector<double> times;
  std::size_t products = 0;
  for (const auto& s : dataset.subjects()) {
    times.insert(times.end(), s.times.begin(), s.times.end());
    products += s.count() * (s.count() - 1);
  }
  std::vector<BandwidthSet> out;
  switch (target) {
    case CvTarget::Mean:
      for (double h : candidate_values(pilot_bandwidth(times, 1), span)) {
        auto bw = base;
        bw.h_mu = h;
        out.push_back(bw);
      }
      break;
    case CvTarget::Gamma:
      for (double h : candidate_values(pilot_bandwidth(times, 2, products), span)) {
        auto bw = base;
        bw.h_c = h;
        out.push_back(bw);
      }
      break;
    case CvTarget::M: {
      const auto ys = dataset.responses();
      const auto ht = candidate_values(pilot_bandwidth(times, 2), span);
      const auto hy = candidate_values(pilot_bandwidth(ys, 2, times.size()), span);
      for (double a : ht)
        for (double b : hy) {
          auto bw = base;
          bw.h_t = a;
          bw.h_y = b;
          out.push_back(bw);
        }
      break;
    }
  }
  return out;
}

CvResult cross_validate(const SpatialFunctionalDataset& dataset,
                        const CvPlan& plan,
                        CvTarget target,
                        const WeightScheme& scheme,
                        const BandwidthSet& base,
                        KernelSpec kernel)
{
  CvResult result;
  result.candidates = plan.candidates.empty() ? default_candidates(dataset, target, base, plan.span) : plan.candidates;
  const auto folds = fold_assignment(dataset.size(), plan.folds, plan.seed);
  result.scores.assign(result.candidates.size(), 0.0);

  for (std::size_t f = 0; f < plan.folds; ++f) {
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i < dataset.size(); ++i)
      (folds[i] == f ? test_idx : train_idx).push_back(i);
    const auto train = dataset.subset(train_idx);
    const auto test = dataset.subset(test_idx);
    const auto scores = fold_scores(train, test, result.candidates, target, scheme, base, kernel);
    for (std::size_t c = 0; c < scores.size(); ++c)
      result.scores[c] += scores[c];
  }

  std::optional<std::size_t> best;
  for (std::size_t c = 0; c < result.candidates.size(); ++c) {
    const double s = result.scores[c];
    if (!std::isfinite(s))
      continue;
    if (!best) {
      best = c;
      continue;
    }
    const double b = result.scores[*best];
    const bool tie = std::fabs(s - b) <= 1e-12 * std::max(1.0, std::fabs(b));
    if ((!tie && s < b) ||
        (tie && bandwidth_product(result.candidates[c], target) < bandwidth_product(result.candidates[*best], target)))
      best = c;
  }
  if (!best) {
    std::string msg = "cross_validate: every candidate failed to predict some fold for target " +
                      std::string(to_string(target)) + "; candidates:";
    for (const auto& c : result.candidates)
      msg += " " + describe(c, target);
    throw ComputationError(msg);
  }
  result.selected_index = *best;
  result.selected = result.candidates[*best];
  return result;
}

double spatial_bandwidth_rule(std::size_t n, double diameter, double c_b)
{
  if (n < 2)
    throw std::invalid_argument("spatial bandwidth rule needs n >= 2");
  if (!(c_b > 0.0))
    throw std::invalid_argument("spatial bandwidth constant must be positive");
  return std::min(1.0, c_b) / std::sqrt(static_cast<double>(n - 1)) * diameter;
}

BandwidthSet select_bandwidths(const SpatialFunctionalDataset& dataset,
                               const WeightScheme& scheme,
                               std::size_t folds,
                               std::uint64_t seed,
                               double c_b,
                               KernelSpec kernel,
                               CandidateSpan span)
{
  CvPlan plan;
  plan.folds = folds;
  plan.seed = seed;
  plan.span = span;
  BandwidthSet bw;
  bw = cross_validate(dataset, plan, CvTarget::Mean, scheme, bw, kernel).selected;
  bw = cross_validate(dataset, plan, CvTarget::Gamma, scheme, bw, kernel).selected;
  bw = cross_validate(dataset, plan, CvTarget::M, scheme, bw, kernel).selected;
  bw.b = spatial_bandwidth_rule(dataset.size(), site_geometry(dataset).diameter, c_b);
  return bw;
}

// ---------------------------------------------------------------------------
// Pipeline

std::string_view to_string(Method method) noexcept
{
  return method == Method::Sfsir ? "SFSIR" : "FSIR";
}

Method parse_method(std::string_view name)
{
  const auto s = lower(name);
  if (s == "sfsir")
    return Method::Sfsir;
  if (s == "fsir")
    return Method::Fsir;
  throw std::invalid_argument("unknown method '" + std::string(name) + "' (expected sfsir or fsir)");
}

FitResult fit_model(const SpatialFunctionalDataset& dataset, const FitOptions& o)
{
  FitResult r;
  if (o.cross_validate) {
    r.bandwidths = select_bandwidths(dataset, o.scheme, o.folds, o.cv_seed, o.c_b.value_or(1.0), o.kernel, o.cv_span);
  } else {
    r.bandwidths = o.bandwidths;
    if (o.c_b)
      r.bandwidths.b = spatial_bandwidth_rule(dataset.size(), site_geometry(dataset).diameter, *o.c_b);
  }
  validate(r.bandwidths);
  const auto& bw = r.bandwidths;
  const TimeGrid grid(o.grid_size);

  r.mean = estimate_mean(dataset, o.scheme, bw.h_mu, grid, o.kernel);
  r.gamma = estimate_gamma(dataset, r.mean, o.scheme, bw.h_c, grid, o.kernel);
  r.m = estimate_m(dataset, o.scheme, bw.h_t, bw.h_y, grid, std::nullopt, o.kernel);
  const auto responses = dataset.responses();
  r.re = estimate_re(r.m, responses, o.trim);

  if (o.sfsir) {
    r.r0 = estimate_r_spatial(dataset, r.mean, o.scheme, bw.h_c, bw.b, 0.0, grid, o.spatial, o.kernel);
    r.nugget = estimate_nugget(r.gamma, *r.r0);
    r.sfsir = edr_directions(*r.r0, r.re, o.K, o.truncation);
  }
  if (o.fsir)
    r.fsir = edr_directions(r.gamma, r.re, o.K, o.truncation);
  return r;
}

// ---------------------------------------------------------------------------
// Metrics

StudyMetrics compute_metrics(const std::vector<Eigen::VectorXd>& estimates,
                             const Eigen::VectorXd& truth,
                             const TimeGrid& grid)
{
  if (estimates.size() < 2)
    throw std::invalid_argument("compute_metrics: IVAR needs at least 2 replications");
  const auto p = static_cast<Eigen::Index>(grid.size());
  if (truth.size() != p)
    throw std::invalid_argument("compute_metrics: truth is not on the grid");
  std::vector<Eigen::VectorXd> aligned;
  for (const auto& e : estimates) {
    if (e.size() != p)
      throw std::invalid_argument("compute_metrics: grid mismatch between estimate and truth");
    aligned.push_back(align_sign(e, truth, grid));
  }
  const double R = static_cast<double>(aligned.size());
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& a : aligned)
    mean += a;
  mean /= R;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(p);
  for (const auto& a : aligned)
    var += (a - mean).cwiseAbs2();
  var /= R;

  StudyMetrics m;
  m.replications = aligned.size();
  const Eigen::VectorXd bias = mean - truth;
  m.isb = grid.inner(bias, bias);
  m.ivar = grid.weights().dot(var);
  m.mise = m.isb + m.ivar;
  return m;
}

std::uint64_t Scenario::stream() const noexcept
{
  return (density == Density::Dense ? 2u : 0u) + (nugget ? 0u : 1u);
}

std::string Scenario::name() const
{
  return std::string(to_string(density)) + (nugget ? "+nugget" : "+no-nugget");
}

Scenario parse_scenario(std::string_view name)
{
  const auto s = lower(name);
  const auto plus = s.find('+');
  if (plus == std::string::npos)
    throw std::invalid_argument("scenario '" + std::string(name) + "' must look like sparse+nugget or dense+no-nugget");
  const auto d = s.substr(0, plus);
  const auto g = s.substr(plus + 1);
  Scenario sc;
  if (d == "sparse")
    sc.density = Density::Sparse;
  else if (d == "dense")
    sc.density = Density::Dense;
  else
    throw std::invalid_argument("scenario '" + std::string(name) + "': density must be sparse or dense");
  if (g == "nugget")
    sc.nugget = true;
  else if (g == "no-nugget" || g == "none")
    sc.nugget = false;
  else
    throw std::invalid_argument("scenario '" + std::string(name) + "': expected nugget or no-nugget");
  return sc;
}

// ---------------------------------------------------------------------------
// Study

StudyResult run_study(const StudyConfig& config)
{
  if (config.reps < 2)
    throw std::invalid_argument("study needs reps >= 2 (IVAR is undefined for one replication)");
  if (config.scenarios.empty() || config.schemes.empty())
    throw std::invalid_argument("study needs at least one scenario and one scheme");

  StudyResult result;
  SimulationConfig base = config.simulation;
  base.n = config.n;
  const auto truth = make_truth(base);
  result.grid = TimeGrid(config.fit.grid_size);
  if (result.grid.size() != truth.grid.size())
    throw std::invalid_argument("study: simulation grid and fit grid differ");
  result.truth = truth.beta;

  std::optional<std::vector<Site>> fixed;
  if (config.fixed_sites) {
    std::mt19937_64 rng(config.seed);
    fixed = sample_sites(config.n, base.sites, rng);
  }

  const std::size_t S = config.scenarios.size();
  const std::size_t tasks = S * config.reps;
  std::vector<std::vector<ReplicationRecord>> per_task(tasks);
  parallel_for(tasks, [&](std::size_t task) {
    const std::size_t sc = task / config.reps;
    const std::size_t rep = task % config.reps;
    const auto& scenario = config.scenarios[sc];
    SimulationConfig sim = base;
    sim.density = scenario.density;
    if (!scenario.nugget)
      sim.nugget.reset();
    else if (!sim.nugget)
      sim.nugget = std::array<double, 2>{ 0.5, 1.0 };
    sim.seed = replication_seed(config.seed, scenario.stream(), rep);

    std::optional<SimulatedData> data;
    std::string sim_error;
    try {
      data.emplace(simulate_dataset(sim, fixed ? std::optional<std::span<const Site>>(*fixed) : std::nullopt));
    } catch (const std::exception& e) {
      sim_error = std::string("simulation: ") + e.what();
    }

    for (const auto& scheme : config.schemes) {
      ReplicationRecord rec;
      rec.scenario = scenario.name();
      rec.scheme = std::string(to_string(scheme));
      rec.replication = rep;
      rec.seed = sim.seed;
      if (!data) {
        rec.error = sim_error;
        per_task[task].push_back(std::move(rec));
        continue;
      }
      try {
        FitOptions fit = config.fit;
        fit.scheme = scheme;
        fit.cv_seed = sim.seed;
        fit.sfsir = fit.fsir = true;
        const auto r = fit_model(data->dataset, fit);
        rec.bandwidths = r.bandwidths;
        const auto& grid = result.grid;
        auto finish = [&](const EdrResult& edr, Eigen::VectorXd& est, double& ise, double& angle) {
          est = align_sign(normalize_l2(edr.directions.col(0), grid), result.truth, grid);
          const Eigen::VectorXd diff = est - result.truth;
          ise = grid.inner(diff, diff);
          angle = angle_degrees(est, result.truth, grid);
        };
        finish(*r.sfsir, rec.estimate_sfsir, rec.ise_sfsir, rec.angle_sfsir);
        finish(*r.fsir, rec.estimate_fsir, rec.ise_fsir, rec.angle_fsir);
        rec.L_sfsir = r.sfsir->L;
        rec.L_fsir = r.fsir->L;
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.error = e.what();
      }
      per_task[task].push_back(std::move(rec));
    }
  });

  for (auto& t : per_task)
    for (auto& rec : t) {
      ++result.attempted;
      result.succeeded += rec.ok ? 1 : 0;
      result.records.push_back(std::move(rec));
    }

  for (const auto& scenario : config.scenarios)
    for (const auto& scheme : config.schemes)
      for (Method method : { Method::Fsir, Method::Sfsir }) {
        StudyRow row;
        row.scenario = scenario.name();
        row.scheme = std::string(to_string(scheme));
        row.method = std::string(to_string(method));
        std::vector<Eigen::VectorXd> estimates;
        for (const auto& rec : result.records) {
          if (rec.scenario != row.scenario || rec.scheme != row.scheme)
            continue;
          if (!rec.ok) {
            ++row.failures;
            continue;
          }
          estimates.push_back(method == Method::Sfsir ? rec.estimate_sfsir : rec.estimate_fsir);
        }
        if (estimates.size() >= 2) {
          row.metrics = compute_metrics(estimates, result.truth, result.grid);
        } else {
          const double nan = std::numeric_limits<double>::quiet_NaN();
          row.metrics = { nan, nan, nan, estimates.size() };
        }
        result.rows.push_back(row);
      }
  return result;
}

namespace {

std::ofstream open_output(const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write " + path.string());
  return out;
}

std::string csv_quote(const std::string& s)
{
  if (s.find_first_of(",\"\n") == std::string::npos)
    return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"')
      out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

} // namespace

void write_study_csv(const StudyResult& result, const std::filesystem::path& path)
{
  auto out = open_output(path);
  out << "scenario,scheme,method,isb,ivar,mise\n";
  for (const auto& r : result.rows)
    out << r.scenario << ',' << r.scheme << ',' << r.method << ',' << format_double(r.metrics.isb) << ','
        << format_double(r.metrics.ivar) << ',' << format_double(r.metrics.mise) << '\n';
}

void write_study_table(const StudyResult& result, std::ostream& out)
{
  out << std::left << std::setw(20) << "scenario" << std::setw(8) << "scheme" << std::setw(8) << "method"
      << std::right << std::setw(10) << "ISB" << std::setw(10) << "IVAR" << std::setw(10) << "MISE" << std::setw(8)
      << "reps" << '\n';
  std::string last;
  for (const auto& r : result.rows) {
    const std::string key = r.scenario + "/" + r.scheme;
    if (key != last) {
      out << std::left << std::setw(20) << r.scenario << std::setw(8) << r.scheme << std::setw(8) << "FLM"
          << std::right << std::setw(10) << "N/A" << std::setw(10) << "N/A" << std::setw(10) << "N/A" << std::setw(8)
          << "-" << '\n';
      last = key;
    }
    out << std::left << std::setw(20) << r.scenario << std::setw(8) << r.scheme << std::setw(8) << r.method
        << std::right << std::fixed << std::setprecision(4) << std::setw(10) << r.metrics.isb << std::setw(10)
        << r.metrics.ivar << std::setw(10) << r.metrics.mise << std::setw(8) << r.metrics.replications << '\n';
    out.unsetf(std::ios::floatfield);
  }
  out << "replications succeeded: " << result.succeeded << " of " << result.attempted << '\n';
}

void write_replications_csv(const StudyResult& result, const std::filesystem::path& path)
{
  auto out = open_output(path);
  out << "scenario,scheme,replication,seed,status,h_mu,h_c,b,h_t,h_y,ise_sfsir,ise_fsir,angle_sfsir,angle_fsir,L_sfsir,L_fsir,error\n";
  for (const auto& r : result.records) {
    out << r.scenario << ',' << r.scheme << ',' << r.replication << ',' << r.seed << ',' << (r.ok ? "ok" : "failed");
    if (r.ok) {
      const auto& b = r.bandwidths;
      for (double v : { b.h_mu, b.h_c, b.b, b.h_t, b.h_y, r.ise_sfsir, r.ise_fsir, r.angle_sfsir, r.angle_fsir })
        out << ',' << format_double(v);
      out << ',' << r.L_sfsir << ',' << r.L_fsir << ",\n";
    } else {
      out << ",,,,,,,,,,,," << csv_quote(r.error) << '\n';
    }
  }
}

void write_plot_data(const StudyResult& result, const std::filesystem::path& path)
{
  auto out = open_output(path);
  out << "scenario,scheme,method,t,truth,mean,lower,upper\n";
  const auto p = static_cast<Eigen::Index>(result.grid.size());
  for (const auto& row : result.rows) {
    std::vector<const Eigen::VectorXd*> curves;
    for (const auto& rec : result.records)
      if (rec.ok && rec.scenario == row.scenario && rec.scheme == row.scheme)
        curves.push_back(row.method == "SFSIR" ? &rec.estimate_sfsir : &rec.estimate_fsir);
    if (curves.empty())
      continue;
    for (Eigen::Index k = 0; k < p; ++k) {
      double mean = 0.0;
      for (const auto* c : curves)
        mean += (*c)(k);
      mean /= static_cast<double>(curves.size());
      double var = 0.0;
      for (const auto* c : curves)
        var += ((*c)(k)-mean) * ((*c)(k)-mean);
      const double sd = curves.size() > 1 ? std::sqrt(var / static_cast<double>(curves.size() - 1)) : 0.0;
      out << row.scenario << ',' << row.scheme << ',' << row.method << ','
          << format_double(result.grid[static_cast<std::size_t>(k)]) << ',' << format_double(result.truth(k)) << ','
          << format_double(mean) << ',' << format_double(mean - sd) << ',' << format_double(mean + sd) << '\n';
    }
  }
}

} // namespace sfsir

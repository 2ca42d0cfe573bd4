#include "sfsir/simulate.hpp"
#include "sfsir/error.hpp"
#include "sfsir/quadrature.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace sfsir {

namespace {

constexpr double kPi = std::numbers::pi;
const double kNugScale = std::sqrt(15.0 / 7.0);

double standard_normal(std::mt19937_64& rng)
{
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

} // namespace

double matern_cov(double u, const MaternParams& p)
{
  if (u <= 0.0)
    return p.variance;
  const double x = std::sqrt(2.0 * p.shape) * u / p.range;
  const double k = std::cyl_bessel_k(p.shape, x);
  return p.variance * std::pow(2.0, 1.0 - p.shape) / std::tgamma(p.shape) * std::pow(x, p.shape) * k;
}

std::string_view to_string(Density density) noexcept
{
  return density == Density::Sparse ? "sparse" : "dense";
}

// ---------------------------------------------------------------------------
// Config

namespace {

void read_positive(const nlohmann::json& j, const char* key, double& out, std::vector<std::string>& errors,
                   bool allow_zero = false)
{
  if (!j.contains(key))
    return;
  const auto& v = j.at(key);
  if (!v.is_number()) {
    errors.push_back(std::string(key) + ": expected a number");
    return;
  }
  const double x = v.get<double>();
  if (!std::isfinite(x) || x < 0.0 || (!allow_zero && x == 0.0)) {
    errors.push_back(std::string(key) + (allow_zero ? ": must be >= 0" : ": must be > 0"));
    return;
  }
  out = x;
}

} // namespace

SimulationConfig parse_simulation_config(const std::string& text)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object())
    throw InputError("simulation config: top level must be an object");

  SimulationConfig c;
  std::vector<std::string> errors;
  static const std::set<std::string> known{ "n",        "density",           "matern", "nugget",   "noise_sd",
                                            "response_noise_sd", "seed", "hole",   "grid_size" };
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      errors.push_back(key + ": unknown key");

  if (j.contains("n")) {
    const auto& v = j["n"];
    if (!v.is_number_integer() || v.get<long long>() < 2)
      errors.push_back("n: expected an integer >= 2");
    else
      c.n = v.get<std::size_t>();
  }
  if (j.contains("density")) {
    const auto& v = j["density"];
    if (v == "sparse")
      c.density = Density::Sparse;
    else if (v == "dense")
      c.density = Density::Dense;
    else
      errors.push_back("density: expected \"sparse\" or \"dense\"");
  }
  if (j.contains("matern")) {
    const auto& v = j["matern"];
    if (!v.is_array() || v.size() != 3) {
      errors.push_back("matern: expected an array of 3 objects");
    } else {
      for (std::size_t k = 0; k < 3; ++k) {
        const auto& m = v[k];
        const std::string where = "matern[" + std::to_string(k) + "].";
        if (!m.is_object()) {
          errors.push_back(where.substr(0, where.size() - 1) + ": expected an object");
          continue;
        }
        std::vector<std::string> sub;
        read_positive(m, "variance", c.matern[k].variance, sub);
        read_positive(m, "shape", c.matern[k].shape, sub);
        read_positive(m, "range", c.matern[k].range, sub);
        for (const auto& [key, value] : m.items())
          if (key != "variance" && key != "shape" && key != "range")
            sub.push_back(key + ": unknown key");
        for (auto& e : sub)
          errors.push_back(where + e);
      }
    }
  }
  if (j.contains("nugget")) {
    const auto& v = j["nugget"];
    if (v.is_boolean()) {
      if (v.get<bool>())
        c.nugget = std::array<double, 2>{ 0.5, 1.0 };
      else
        c.nugget.reset();
    } else if (v.is_null()) {
      c.nugget.reset();
    } else if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number() && v[0].get<double>() >= 0.0 &&
               v[1].get<double>() >= 0.0) {
      c.nugget = std::array<double, 2>{ v[0].get<double>(), v[1].get<double>() };
    } else {
      errors.push_back("nugget: expected a boolean, null, or two nonnegative variances");
    }
  }
  read_positive(j, "noise_sd", c.noise_sd, errors, true);
  read_positive(j, "response_noise_sd", c.response_noise_sd, errors, true);
  if (j.contains("seed")) {
    const auto& v = j["seed"];
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      errors.push_back("seed: expected a nonnegative integer");
    else
      c.seed = v.get<std::uint64_t>();
  }
  if (j.contains("hole")) {
    const auto& v = j["hole"];
    bool ok = v.is_array() && v.size() == 4;
    for (std::size_t k = 0; ok && k < 4; ++k)
      ok = v[k].is_number();
    if (ok) {
      c.sites = { v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>() };
      const auto& h = c.sites;
      if (!(h.hole_x0 <= h.hole_x1 && h.hole_y0 <= h.hole_y1) || (h.hole_x0 <= 0 && h.hole_x1 >= 1 && h.hole_y0 <= 0 && h.hole_y1 >= 1))
        errors.push_back("hole: expected [x0, x1, y0, y1] with x0 <= x1, y0 <= y1, not covering the square");
    } else {
      errors.push_back("hole: expected [x0, x1, y0, y1]");
    }
  }
  if (j.contains("grid_size")) {
    const auto& v = j["grid_size"];
    if (!v.is_number_integer() || v.get<long long>() < 3)
      errors.push_back("grid_size: expected an integer >= 3");
    else
      c.grid_size = v.get<std::size_t>();
  }

  if (!errors.empty()) {
    std::string msg = "invalid simulation config:";
    for (const auto& e : errors)
      msg += "\n  " + e;
    throw InputError(msg);
  }
  return c;
}

SimulationConfig load_simulation_config(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_simulation_config(ss.str());
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

nlohmann::json to_json(const SimulationConfig& c)
{
  nlohmann::json j;
  j["n"] = c.n;
  j["density"] = std::string(to_string(c.density));
  j["matern"] = nlohmann::json::array();
  for (const auto& m : c.matern)
    j["matern"].push_back({ { "variance", m.variance }, { "shape", m.shape }, { "range", m.range } });
  if (c.nugget)
    j["nugget"] = { (*c.nugget)[0], (*c.nugget)[1] };
  else
    j["nugget"] = false;
  j["noise_sd"] = c.noise_sd;
  j["response_noise_sd"] = c.response_noise_sd;
  j["seed"] = c.seed;
  j["hole"] = { c.sites.hole_x0, c.sites.hole_x1, c.sites.hole_y0, c.sites.hole_y1 };
  j["grid_size"] = c.grid_size;
  return j;
}

// ---------------------------------------------------------------------------
// Model

double true_mean(double t)
{
  return 2.0 * t * std::sin(2.0 * kPi * t);
}

double true_eigenfunction(int j, double t)
{
  switch (j) {
    case 0:
      return std::cos(2.0 * kPi * t);
    case 1:
      return std::sin(2.0 * kPi * t);
    case 2:
      return std::cos(4.0 * kPi * t);
    default:
      throw std::out_of_range("eigenfunction index");
  }
}

double nugget_basis(int j, double t)
{
  switch (j) {
    case 0:
      return std::sqrt(3.0) * t;
    case 1:
      return kNugScale * (1.0 - 2.0 * t * t);
    default:
      throw std::out_of_range("nugget basis index");
  }
}

double true_beta(double t)
{
  return std::sqrt(2.0) * std::sin(1.5 * kPi * t);
}

double true_link(double x)
{
  return x / (1.0 + std::exp(x));
}

std::vector<Site> sample_sites(std::size_t n, const SiteSampler& sampler, std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Site> sites;
  sites.reserve(n);
  while (sites.size() < n) {
    const Site s{ unit(rng), unit(rng) };
    if (sampler.in_hole(s))
      continue;
    bool duplicate = false;
    for (const auto& o : sites)
      duplicate = duplicate || (o.x == s.x && o.y == s.y);
    if (!duplicate)
      sites.push_back(s);
  }
  return sites;
}

std::vector<double> sample_grf_scores(std::span<const Site> sites, const MaternParams& params, std::mt19937_64& rng)
{
  const auto n = static_cast<Eigen::Index>(sites.size());
  Eigen::MatrixXd cov(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = a; b < n; ++b)
      cov(a, b) = cov(b, a) = matern_cov(distance(sites[a], sites[b]), params);

  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  for (double jitter = 1e-10; llt.info() != Eigen::Success; jitter *= 10.0) {
    if (jitter > 1e-6 * (1.0 + 1e-9))
      throw ComputationError("sample_grf_scores: covariance not positive definite after jitter 1e-6 V; sites too close?");
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += jitter * params.variance;
    llt.compute(jittered);
  }
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i)
    z(i) = standard_normal(rng);
  const Eigen::VectorXd draw = llt.matrixL() * z;
  return { draw.data(), draw.data() + n };
}

SimulationTruth make_truth(const SimulationConfig& config)
{
  SimulationTruth t;
  t.grid = TimeGrid(config.grid_size);
  const auto p = static_cast<Eigen::Index>(config.grid_size);

  Eigen::Matrix3d gram;
  for (int j = 0; j < 3; ++j) {
    t.beta_inner_pi[j] = simpson([j](double s) { return true_beta(s) * true_eigenfunction(j, s); }, 0.0, 1.0);
    for (int k = 0; k < 3; ++k)
      gram(j, k) = simpson([j, k](double s) { return true_eigenfunction(j, s) * true_eigenfunction(k, s); }, 0.0, 1.0);
  }
  t.beta_inner_mu = simpson([](double s) { return true_beta(s) * true_mean(s); }, 0.0, 1.0);
  const Eigen::Vector3d coef = gram.ldlt().solve(Eigen::Vector3d(t.beta_inner_pi[0], t.beta_inner_pi[1], t.beta_inner_pi[2]));

  t.beta.resize(p);
  t.mean.resize(p);
  t.beta_projection.resize(p);
  t.r0 = Eigen::MatrixXd::Zero(p, p);
  t.nugget = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd phi(p, 3), nug(p, 2);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double s = t.grid[static_cast<std::size_t>(k)];
    t.beta(k) = true_beta(s);
    t.mean(k) = true_mean(s);
    for (int j = 0; j < 3; ++j)
      phi(k, j) = true_eigenfunction(j, s);
    for (int j = 0; j < 2; ++j)
      nug(k, j) = nugget_basis(j, s);
  }
  t.beta_projection = phi * coef;
  for (int j = 0; j < 3; ++j)
    t.r0 += config.matern[j].variance * phi.col(j) * phi.col(j).transpose();
  if (config.nugget)
    for (int j = 0; j < 2; ++j)
      t.nugget += (*config.nugget)[j] * nug.col(j) * nug.col(j).transpose();
  return t;
}

SimulatedData simulate_dataset(const SimulationConfig& config, std::optional<std::span<const Site>> fixed_sites)
{
  std::mt19937_64 rng(config.seed);
  std::vector<Site> sites;
  if (fixed_sites) {
    if (fixed_sites->size() != config.n)
      throw std::invalid_argument("simulate_dataset: fixed site count differs from n");
    sites.assign(fixed_sites->begin(), fixed_sites->end());
  } else {
    sites = sample_sites(config.n, config.sites, rng);
  }

  std::array<std::vector<double>, 3> scores;
  for (int j = 0; j < 3; ++j)
    scores[j] = sample_grf_scores(sites, config.matern[j], rng);

  SimulationTruth truth = make_truth(config);
  const std::size_t max_count = config.density == Density::Sparse ? 7 : 15 + config.n / 10;
  const std::size_t min_count = config.density == Density::Sparse ? 3 : 10;
  std::uniform_int_distribution<std::size_t> count_dist(min_count, max_count);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int width = static_cast<int>(std::to_string(config.n).size());

  std::vector<Subject> subjects;
  subjects.reserve(config.n);
  for (std::size_t i = 0; i < config.n; ++i) {
    Subject s;
    std::string digits = std::to_string(i + 1);
    s.id = "s" + std::string(static_cast<std::size_t>(width) - digits.size(), '0') + digits;
    s.site = sites[i];
    const std::array<double, 3> a{ scores[0][i], scores[1][i], scores[2][i] };
    truth.scores.push_back(a);

    std::array<double, 2> b{ 0.0, 0.0 };
    if (config.nugget)
      for (int j = 0; j < 2; ++j)
        b[j] = std::sqrt((*config.nugget)[j]) * standard_normal(rng);

    const std::size_t count = count_dist(rng);
    for (std::size_t k = 0; k < count; ++k) {
      const double t = unit(rng);
      double z = true_mean(t);
      for (int j = 0; j < 3; ++j)
        z += a[j] * true_eigenfunction(j, t);
      if (config.nugget)
        z += b[0] * nugget_basis(0, t) + b[1] * nugget_basis(1, t);
      z += config.noise_sd * standard_normal(rng);
      s.times.push_back(t);
      s.values.push_back(z);
    }

    double index = truth.beta_inner_mu;
    for (int j = 0; j < 3; ++j)
      index += a[j] * truth.beta_inner_pi[j];
    s.response = 3.0 + true_link(index) + config.response_noise_sd * standard_normal(rng);
    subjects.push_back(std::move(s));
  }
  return { SpatialFunctionalDataset(std::move(subjects)), std::move(truth) };
}

std::uint64_t replication_seed(std::uint64_t seed, std::uint64_t scenario, std::uint64_t replication) noexcept
{
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ scenario) ^ replication);
}

void write_truth_json(const SimulatedData& data, const SimulationConfig& config, const std::filesystem::path& path)
{
  const auto& t = data.truth;
  nlohmann::json j;
  j["config"] = to_json(config);
  j["grid"] = std::vector<double>(t.grid.points().begin(), t.grid.points().end());
  j["beta"] = std::vector<double>(t.beta.data(), t.beta.data() + t.beta.size());
  j["beta_projection"] = std::vector<double>(t.beta_projection.data(), t.beta_projection.data() + t.beta_projection.size());
  j["mean"] = std::vector<double>(t.mean.data(), t.mean.data() + t.mean.size());
  j["eigenfunctions"] = { "cos(2 pi t)", "sin(2 pi t)", "cos(4 pi t)" };
  j["score_variances"] = { config.matern[0].variance, config.matern[1].variance, config.matern[2].variance };
  j["beta_inner_eigenfunctions"] = t.beta_inner_pi;
  j["beta_inner_mean"] = t.beta_inner_mu;
  nlohmann::json scores = nlohmann::json::array();
  for (std::size_t i = 0; i < data.dataset.size(); ++i)
    scores.push_back({ { "site_id", data.dataset[i].id }, { "scores", t.scores[i] } });
  j["scores"] = scores;

  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

} // namespace sfsir

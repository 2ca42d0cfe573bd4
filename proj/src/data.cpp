#include "sfsir/data.hpp"
#include "sfsir/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace sfsir {

double distance(const Site& a, const Site& b) noexcept
{
  return std::hypot(a.x - b.x, a.y - b.y);
}

// ---------------------------------------------------------------------------
// Dataset

SpatialFunctionalDataset::SpatialFunctionalDataset(std::vector<Subject> subjects)
  : subjects_(std::move(subjects))
{
  if (subjects_.size() < 2)
    throw InputError("dataset needs at least 2 subjects, got " + std::to_string(subjects_.size()));

  std::unordered_set<std::string> ids;
  for (const auto& s : subjects_) {
    if (!ids.insert(s.id).second)
      throw InputError("duplicate site id '" + s.id + "'");
    if (s.times.empty())
      throw InputError("site '" + s.id + "' has no observations");
    if (s.times.size() != s.values.size())
      throw InputError("site '" + s.id + "' has mismatched times and measurements");
    if (!std::isfinite(s.site.x) || !std::isfinite(s.site.y))
      throw InputError("site '" + s.id + "' has non-finite coordinates");
    if (!std::isfinite(s.response))
      throw InputError("site '" + s.id + "' has a non-finite response");
    for (std::size_t j = 0; j < s.times.size(); ++j) {
      const double t = s.times[j];
      if (!(t >= 0.0 && t <= 1.0))
        throw InputError("site '" + s.id + "' has time " + format_double(t) + " outside [0, 1]");
      if (!std::isfinite(s.values[j]))
        throw InputError("site '" + s.id + "' has a non-finite measurement");
    }
    total_observations_ += s.times.size();
  }

  std::map<std::pair<double, double>, const std::string*> seen;
  for (const auto& s : subjects_) {
    auto [it, fresh] = seen.emplace(std::make_pair(s.site.x, s.site.y), &s.id);
    if (!fresh)
      throw InputError("sites '" + *it->second + "' and '" + s.id + "' share coordinates");
  }
}

std::vector<std::size_t> SpatialFunctionalDataset::counts() const
{
  std::vector<std::size_t> out;
  out.reserve(subjects_.size());
  for (const auto& s : subjects_)
    out.push_back(s.count());
  return out;
}

std::vector<double> SpatialFunctionalDataset::responses() const
{
  std::vector<double> out;
  out.reserve(subjects_.size());
  for (const auto& s : subjects_)
    out.push_back(s.response);
  return out;
}

std::vector<Site> SpatialFunctionalDataset::sites() const
{
  std::vector<Site> out;
  out.reserve(subjects_.size());
  for (const auto& s : subjects_)
    out.push_back(s.site);
  return out;
}

SpatialFunctionalDataset SpatialFunctionalDataset::subset(std::span<const std::size_t> indices) const
{
  std::vector<Subject> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices)
    picked.push_back(subjects_.at(i));
  return SpatialFunctionalDataset(std::move(picked));
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

struct CsvContext
{
  std::string file;
  std::size_t line = 0;

  [[noreturn]] void fail(const std::string& what) const
  {
    throw InputError(file + ":" + std::to_string(line) + ": " + what);
  }
};

double parse_number(std::string_view text, const CsvContext& ctx, std::string_view column)
{
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && *first == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (text.empty() || ec != std::errc() || ptr != last)
    ctx.fail("cannot parse " + std::string(column) + " value '" + std::string(text) + "'");
  return v;
}

std::vector<std::vector<std::string_view>> read_rows(const std::filesystem::path& path,
                                                     std::string_view header,
                                                     std::string& storage,
                                                     std::vector<std::size_t>& line_numbers)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw InputError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  storage = buf.str();

  CsvContext ctx{ path.string(), 0 };
  std::vector<std::vector<std::string_view>> rows;
  std::string_view all(storage);
  bool header_seen = false;
  const auto expected = split(header);
  while (!all.empty()) {
    const auto nl = all.find('\n');
    std::string_view line = all.substr(0, nl);
    all = nl == std::string_view::npos ? std::string_view{} : all.substr(nl + 1);
    ++ctx.line;
    if (trim(line).empty())
      continue;
    auto fields = split(line);
    if (!header_seen) {
      if (ctx.line == 1 && fields.size() == expected.size() && !fields.empty() && fields[0].starts_with("\xEF\xBB\xBF"))
        fields[0].remove_prefix(3);
      if (fields != expected)
        ctx.fail("expected header '" + std::string(header) + "'");
      header_seen = true;
      continue;
    }
    if (fields.size() != expected.size())
      ctx.fail("expected " + std::to_string(expected.size()) + " fields, found " + std::to_string(fields.size()));
    rows.push_back(std::move(fields));
    line_numbers.push_back(ctx.line);
  }
  if (!header_seen)
    throw InputError(path.string() + ": missing header '" + std::string(header) + "'");
  return rows;
}

} // namespace

SpatialFunctionalDataset load_dataset(const std::filesystem::path& observations,
                                      const std::filesystem::path& responses,
                                      const LoadOptions& options)
{
  std::vector<Subject> subjects;
  std::unordered_map<std::string, std::size_t> index;

  {
    std::string storage;
    std::vector<std::size_t> lines;
    const auto rows = read_rows(observations, "site_id,sx,sy,t,z", storage, lines);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const CsvContext ctx{ observations.string(), lines[r] };
      const auto& f = rows[r];
      if (f[0].empty())
        ctx.fail("empty site_id");
      const std::string id(f[0]);
      const Site site{ parse_number(f[1], ctx, "sx"), parse_number(f[2], ctx, "sy") };
      const double t = parse_number(f[3], ctx, "t");
      const double z = parse_number(f[4], ctx, "z");
      auto [it, fresh] = index.emplace(id, subjects.size());
      if (fresh) {
        subjects.push_back(Subject{ id, site, {}, {}, 0.0 });
      } else {
        const Site& known = subjects[it->second].site;
        if (known.x != site.x || known.y != site.y)
          ctx.fail("site '" + id + "' changes coordinates");
      }
      subjects[it->second].times.push_back(t);
      subjects[it->second].values.push_back(z);
    }
  }

  {
    std::string storage;
    std::vector<std::size_t> lines;
    const auto rows = read_rows(responses, "site_id,y", storage, lines);
    std::vector<bool> have(subjects.size(), false);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const CsvContext ctx{ responses.string(), lines[r] };
      const std::string id(rows[r][0]);
      const double y = parse_number(rows[r][1], ctx, "y");
      const auto it = index.find(id);
      if (it == index.end())
        ctx.fail("response for unknown site '" + id + "'");
      if (have[it->second])
        ctx.fail("duplicate response for site '" + id + "'");
      subjects[it->second].response = y;
      have[it->second] = true;
    }
    for (std::size_t i = 0; i < subjects.size(); ++i)
      if (!have[i])
        throw InputError("site '" + subjects[i].id + "' has observations but no response");
  }

  if (options.rescale_time) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : subjects)
      for (double t : s.times) {
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
    if (!(hi > lo))
      throw InputError("cannot rescale time: all observation times are equal");
    for (auto& s : subjects)
      for (double& t : s.times)
        t = std::clamp((t - lo) / (hi - lo), 0.0, 1.0);
  }

  return SpatialFunctionalDataset(std::move(subjects));
}

std::string format_double(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void save_dataset(const SpatialFunctionalDataset& dataset,
                  const std::filesystem::path& observations,
                  const std::filesystem::path& responses)
{
  std::ofstream obs(observations, std::ios::binary);
  if (!obs)
    throw InputError("cannot write " + observations.string());
  obs << "site_id,sx,sy,t,z\n";
  for (const auto& s : dataset.subjects())
    for (std::size_t j = 0; j < s.count(); ++j)
      obs << s.id << ',' << format_double(s.site.x) << ',' << format_double(s.site.y) << ','
          << format_double(s.times[j]) << ',' << format_double(s.values[j]) << '\n';

  std::ofstream resp(responses, std::ios::binary);
  if (!resp)
    throw InputError("cannot write " + responses.string());
  resp << "site_id,y\n";
  for (const auto& s : dataset.subjects())
    resp << s.id << ',' << format_double(s.response) << '\n';
}

// ---------------------------------------------------------------------------
// Grid

TimeGrid::TimeGrid(std::size_t p)
{
  if (p < 2)
    throw std::invalid_argument("time grid needs at least 2 points");
  spacing_ = 1.0 / static_cast<double>(p - 1);
  points_.resize(p);
  for (std::size_t k = 0; k < p; ++k)
    points_[k] = static_cast<double>(k) / static_cast<double>(p - 1);
  weights_ = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(p), spacing_);
  weights_(0) *= 0.5;
  weights_(static_cast<Eigen::Index>(p) - 1) *= 0.5;
}

double TimeGrid::inner(std::span<const double> f, std::span<const double> g) const
{
  if (f.size() != size() || g.size() != size())
    throw std::invalid_argument("inner product: curve length does not match grid");
  double s = 0.0;
  for (std::size_t k = 0; k < size(); ++k)
    s += weights_(static_cast<Eigen::Index>(k)) * f[k] * g[k];
  return s;
}

double TimeGrid::inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const
{
  return inner(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())),
               std::span<const double>(g.data(), static_cast<std::size_t>(g.size())));
}

double interpolate_linear(std::span<const double> xs, std::span<const double> ys, double x)
{
  if (xs.empty() || xs.size() != ys.size())
    throw std::invalid_argument("interpolate_linear: bad input");
  if (x <= xs.front())
    return ys.front();
  if (x >= xs.back())
    return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double span = xs[hi] - xs[lo];
  if (span <= 0.0)
    return ys[lo];
  const double a = (x - xs[lo]) / span;
  return (1.0 - a) * ys[lo] + a * ys[hi];
}

// ---------------------------------------------------------------------------
// Geometry and trimming

SiteGeometry site_geometry(std::span<const Site> sites)
{
  const std::size_t n = sites.size();
  if (n < 2)
    throw std::invalid_argument("site_geometry needs at least 2 sites");
  SiteGeometry g;
  g.distances = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(sites[i], sites[j]);
      g.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = d;
      g.distances(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = d;
    }
  g.delta_n = 0.0;
  g.Delta_n = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    double nearest = std::numeric_limits<double>::infinity();
    double farthest = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == j)
        continue;
      const double d = g.distances(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      nearest = std::min(nearest, d);
      farthest = std::max(farthest, d);
    }
    g.delta_n = std::max(g.delta_n, nearest);
    g.Delta_n = std::min(g.Delta_n, farthest);
    g.diameter = std::max(g.diameter, farthest);
  }
  return g;
}

SiteGeometry site_geometry(const SpatialFunctionalDataset& dataset)
{
  const auto sites = dataset.sites();
  return site_geometry(sites);
}

double empirical_quantile(std::span<const double> values, double q)
{
  if (values.empty())
    throw std::invalid_argument("empirical_quantile: no values");
  if (!(q >= 0.0 && q <= 1.0))
    throw std::invalid_argument("empirical_quantile: q must lie in [0, 1]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

Interval trim_interval(std::span<const double> responses, TrimSpec trim)
{
  if (responses.size() < 2)
    throw std::invalid_argument("trim_interval needs at least 2 responses");
  if (!(trim.alpha >= 0.0 && trim.alpha < 0.5))
    throw std::invalid_argument("trim alpha must lie in [0, 0.5)");
  return { empirical_quantile(responses, trim.alpha), empirical_quantile(responses, 1.0 - trim.alpha) };
}

} // namespace sfsir

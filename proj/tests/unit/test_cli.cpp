#include "doctest.h"
#include "support.hpp"

#include "sfsir/cli.hpp"

#include "json.hpp"

#include <cmath>
#include <sstream>

using namespace sfsir;
using sfsir::test::read_file;
using sfsir::test::TempDir;
using sfsir::test::write_file;

namespace {

const std::string kGolden = SFSIR_FIXTURE_DIR "/golden";

struct Run
{
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args)
{
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return { code, out.str(), err.str() };
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text)
{
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ','))
      cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

//! Same header and shape; numeric cells agree to tol.
void check_csv_close(const std::string& got, const std::string& want, double tol)
{
  const auto a = csv_rows(got), b = csv_rows(want);
  REQUIRE(a.size() == b.size());
  REQUIRE(!a.empty());
  CHECK(a[0] == b[0]);
  double worst = 0.0;
  for (std::size_t r = 1; r < a.size(); ++r) {
    REQUIRE(a[r].size() == b[r].size());
    for (std::size_t c = 0; c < a[r].size(); ++c)
      worst = std::max(worst, std::fabs(std::stod(a[r][c]) - std::stod(b[r][c])));
  }
  CHECK(worst <= tol);
}

std::vector<std::string> golden_fit(const std::string& method, const std::string& out)
{
  return { "fit",    "--observations", kGolden + "/observations.csv", "--responses", kGolden + "/responses.csv",
           "--h-mu", "0.12",          "--h-c",  "0.12",        "--b",    "0.3",     "--h-t", "0.12", "--h-y", "0.8",
           "--grid-size", "41",       "--method", method,      "--out",  out };
}

} // namespace

TEST_CASE("usage errors exit with 1")
{
  CHECK(run({}).code == kExitUsage);
  CHECK(run({ "fit" }).code == kExitUsage);
  CHECK(run({ "frobnicate" }).code == kExitUsage);
  const auto bad = run({ "fit", "--observations", "a", "--responses", "b", "--out", "c", "--K", "two" });
  CHECK(bad.code == kExitUsage);
  CHECK_FALSE(bad.err.empty());
  CHECK(run({ "--help" }).code == kExitOk);
  CHECK(run({ "--version" }).out == std::string(kVersion) + "\n");
}

TEST_CASE("a site without a response is an input error")
{
  TempDir dir;
  write_file(dir / "obs.csv", "site_id,sx,sy,t,z\na,0,0,0.1,1\na,0,0,0.5,2\nb,1,1,0.2,3\nb,1,1,0.9,4\n");
  write_file(dir / "y.csv", "site_id,y\na,1.5\n");
  const auto r = run({ "fit", "--observations", (dir / "obs.csv").string(), "--responses", (dir / "y.csv").string(),
                       "--out", (dir / "fit").string() });
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("'b'") != std::string::npos);
  CHECK(r.err.find("no response") != std::string::npos);
}

TEST_CASE("malformed config reports the byte offset")
{
  TempDir dir;
  write_file(dir / "c.json", "{\"n\": 50,\n \"seed\": }");
  const auto r = run({ "simulate", "--config", (dir / "c.json").string(), "--out", (dir / "sim").string() });
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("byte 20") != std::string::npos);
}

TEST_CASE("simulate writes a deterministic dataset")
{
  TempDir dir;
  write_file(dir / "c.json", R"({"n": 25, "density": "dense", "seed": 17})");
  for (const char* sub : { "a", "b" })
    REQUIRE(run({ "simulate", "--config", (dir / "c.json").string(), "--out", (dir / sub).string() }).code == kExitOk);
  for (const char* f : { "observations.csv", "responses.csv", "truth.json", "manifest.json" })
    CHECK(std::filesystem::exists(dir / "a" / f));
  for (const char* f : { "observations.csv", "responses.csv", "truth.json" })
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  const auto truth = nlohmann::json::parse(read_file(dir / "a" / "truth.json"));
  CHECK(truth.contains("beta_inner_eigenfunctions"));
  const auto manifest = nlohmann::json::parse(read_file(dir / "a" / "manifest.json"));
  CHECK(manifest.contains("outputs"));

  REQUIRE(run({ "simulate", "--config", (dir / "c.json").string(), "--out", (dir / "c").string(), "--seed", "18" })
            .code == kExitOk);
  CHECK(read_file(dir / "a" / "responses.csv") != read_file(dir / "c" / "responses.csv"));
}

TEST_CASE("fit reproduces the stored reference outputs")
{
  TempDir dir;
  for (const std::string method : { "sfsir", "fsir" }) {
    const auto out = (dir / method).string();
    const auto r = run(golden_fit(method, out));
    REQUIRE(r.code == kExitOk);
    check_csv_close(read_file(dir / method / "directions.csv"), read_file(kGolden + "/" + method + "_directions.csv"),
                    1e-10);
    const auto got = nlohmann::json::parse(read_file(dir / method / "eigen.json"));
    const auto want = nlohmann::json::parse(read_file(kGolden + "/" + method + "_eigen.json"));
    CHECK(got["L"] == want["L"]);
    CHECK(std::fabs(got["eigenvalues"][0].get<double>() - want["eigenvalues"][0].get<double>()) < 1e-10);
  }
  check_csv_close(read_file(dir / "sfsir" / "r0.csv"), read_file(kGolden + "/sfsir_r0.csv"), 1e-10);
}

TEST_CASE("the two methods differ only in the whitening covariance and its directions")
{
  TempDir dir;
  REQUIRE(run(golden_fit("sfsir", (dir / "s").string())).code == kExitOk);
  REQUIRE(run(golden_fit("fsir", (dir / "f").string())).code == kExitOk);
  for (const char* f : { "mean.csv", "gamma.csv", "re.csv" })
    CHECK(read_file(dir / "s" / f) == read_file(dir / "f" / f));
  CHECK(std::filesystem::exists(dir / "s" / "r0.csv"));
  CHECK_FALSE(std::filesystem::exists(dir / "f" / "r0.csv"));
  CHECK(read_file(dir / "s" / "directions.csv") != read_file(dir / "f" / "directions.csv"));
}

TEST_CASE("a small study writes its tables")
{
  TempDir dir;
  const auto r = run({ "study", "--n", "30", "--reps", "2", "--seed", "3", "--no-cv", "--h-mu", "0.12", "--h-c", "0.12",
                       "--h-t", "0.12", "--h-y", "0.8", "--grid-size", "41", "--scenarios", "sparse+nugget",
                       "dense+no-nugget", "--out", (dir / "study").string(), "--emit-plot-data" });
  REQUIRE(r.code == kExitOk);
  const auto metrics = csv_rows(read_file(dir / "study" / "metrics.csv"));
  REQUIRE(metrics.size() == 5); // header, 2 scenarios x 2 methods
  const auto reps = csv_rows(read_file(dir / "study" / "replications.csv"));
  CHECK(reps.size() == 5); // header, 2 scenarios x 2 replications
  CHECK(std::filesystem::exists(dir / "study" / "plot_data.csv"));
  CHECK(r.out.find("SFSIR") != std::string::npos);
}

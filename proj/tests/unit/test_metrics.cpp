#include <algorithm>
#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "catch_amalgamated.hpp"
#include "pdewb/report.hpp"

using namespace pdewb;
namespace fs = std::filesystem;

namespace {

std::vector<Field2D> random_batch(std::size_t n, GridSpec grid, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<Field2D> out(n, Field2D(grid));
  for (Field2D& f : out)
    for (double& v : f.values) v = scale * rng.normal();
  return out;
}

std::vector<Field2D> plus(const std::vector<Field2D>& a, const std::vector<Field2D>& b, double eps) {
  std::vector<Field2D> out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < a[i].size(); ++p) out[i].values[p] += eps * b[i].values[p];
  return out;
}

ReportRow row(std::string model, std::string task, std::string ood, std::size_t n, double sigma, double mu) {
  ReportRow r;
  r.model = std::move(model);
  r.task = std::move(task);
  r.ood = std::move(ood);
  r.n_shot = n;
  r.sigma = sigma;
  r.metrics.task = r.task;
  r.metrics.n_samples = 4;
  r.metrics.mu_l2 = mu;
  r.metrics.l_inf = 2 * mu;
  r.metrics.frmse_low = 0.1;
  r.metrics.frmse_mid = 0.01;
  r.metrics.frmse_high = 1e-3;
  return r;
}

} // namespace

TEST_CASE("mu_l2 examples and brute-force oracle") {
  const GridSpec grid{16, 12};
  const auto t = random_batch(5, grid, 1);
  CHECK(mu_l2(t, t).value == 0.0);

  auto twice = t;
  for (Field2D& f : twice) f *= 2.0;
  CHECK(mu_l2(twice, t).value == Catch::Approx(1.0).epsilon(1e-14));

  const auto p = random_batch(5, grid, 2);
  double acc = 0.0;
  for (std::size_t b = 0; b < 5; ++b) {
    double num = 0.0, den = 0.0;
    for (int iy = 0; iy < grid.ny; ++iy)
      for (int ix = 0; ix < grid.nx; ++ix) {
        num += (p[b](iy, ix) - t[b](iy, ix)) * (p[b](iy, ix) - t[b](iy, ix));
        den += t[b](iy, ix) * t[b](iy, ix);
      }
    acc += std::sqrt(num) / std::sqrt(den);
  }
  CHECK(std::abs(mu_l2(p, t).value - acc / 5.0) < 1e-12);
}

TEST_CASE("mu_l2 excludes zero-norm targets and reports them") {
  const GridSpec grid{8, 8};
  auto t = random_batch(4, grid, 3);
  const auto p = random_batch(4, grid, 4);
  t[1] = Field2D(grid);
  const MuL2 m = mu_l2(p, t);
  CHECK(m.excluded == 1);
  std::vector<Field2D> pk{p[0], p[2], p[3]}, tk{t[0], t[2], t[3]};
  CHECK(m.value == mu_l2(pk, tk).value);

  std::vector<Field2D> zeros(2, Field2D(grid));
  CHECK_THROWS_AS(mu_l2(std::span(p).first(2), zeros), PreconditionError);
  CHECK_THROWS_AS(mu_l2(p, std::span(t).first(3)), ShapeError);
}

TEST_CASE("mu_l2 is linear in the error scale") {
  const GridSpec grid{16, 16};
  const auto t = random_batch(3, grid, 5);
  const auto g = random_batch(3, grid, 6);
  const double base = mu_l2(plus(t, g, 1e-3), t).value;
  for (double eps : {1e-2, 1e-1}) CHECK(mu_l2(plus(t, g, eps), t).value == Catch::Approx(base * eps / 1e-3).epsilon(1e-12));
}

TEST_CASE("l_inf examples, oracle and permutation invariance") {
  const GridSpec grid{8, 16};
  const auto t = random_batch(4, grid, 7);
  CHECK(l_inf(t, t) == 0.0);
  auto bumped = t;
  bumped[2](5, 11) += 0.5;
  CHECK(l_inf(bumped, t) == Catch::Approx(0.5).epsilon(1e-15));

  const auto p = random_batch(4, grid, 8);
  double scan = 0.0, per_sample = 0.0;
  for (std::size_t b = 0; b < 4; ++b) {
    double m = 0.0;
    for (std::size_t i = 0; i < p[b].size(); ++i) m = std::max(m, std::abs(p[b].values[i] - t[b].values[i]));
    scan = std::max(scan, m);
    per_sample += m / 4.0;
  }
  CHECK(l_inf(p, t) == scan);
  CHECK(l_inf(p, t, LinfMode::PerSampleMean) == Catch::Approx(per_sample).epsilon(1e-15));

  std::vector<Field2D> pr(p.rbegin(), p.rend()), tr(t.rbegin(), t.rend());
  Rng rng(9);
  for (std::size_t b = 0; b < 4; ++b)
    for (std::size_t i = pr[b].size(); i > 1; --i) {
      const std::size_t j = rng.below(i);
      std::swap(pr[b].values[i - 1], pr[b].values[j]);
      std::swap(tr[b].values[i - 1], tr[b].values[j]);
    }
  CHECK(l_inf(pr, tr) == scan);
}

TEST_CASE("band partition") {
  const auto b = frequency_bands({32, 32}, {});
  CHECK(b[0].k_min == 0);
  CHECK(b[0].k_max == 4);
  CHECK(b[1].k_min == 5);
  CHECK(b[1].k_max == 12);
  CHECK(b[2].k_min == 13);
  CHECK(b[2].k_max == max_radial_mode({32, 32}));
  CHECK_THROWS_AS(frequency_bands({32, 32}, {5, 5}), ConfigError);
  CHECK_THROWS_AS(frequency_bands({8, 8}, {4, 12}), ConfigError);
}

TEST_CASE("fRMSE of a constant offset lives in the low band") {
  const GridSpec grid{32, 32};
  const auto t = random_batch(3, grid, 10);
  auto p = t;
  for (Field2D& f : p)
    for (double& v : f.values) v -= 0.7;
  const MetricsReport r = compute_metrics(p, t, "poisson");
  CHECK(r.frmse_low == Catch::Approx(0.7 / 5.0).epsilon(1e-12));
  CHECK(r.frmse_mid < 1e-15);
  CHECK(r.frmse_high < 1e-15);

  const MetricsReport zero = compute_metrics(t, t, "poisson");
  CHECK(zero.mu_l2 == 0.0);
  CHECK(zero.l_inf == 0.0);
  CHECK(zero.frmse_low == 0.0);
  CHECK(zero.frmse_mid == 0.0);
  CHECK(zero.frmse_high == 0.0);
}

TEST_CASE("band energies partition the spectral error energy") {
  for (GridSpec grid : {GridSpec{32, 32}, GridSpec{24, 40}}) {
    const auto t = random_batch(2, grid, 11);
    const auto p = random_batch(2, grid, 12);
    const auto bands = frequency_bands(grid, {});
    for (std::size_t b = 0; b < 2; ++b) {
      double parts = 0.0;
      for (const FrequencyBand& band : bands) parts += band_energy(p[b], t[b], radial_band_mask(grid, band));
      // Parseval with coefficients scaled by 1/N: sum |c/N|^2 = mean(d^2).
      double direct = 0.0;
      for (std::size_t i = 0; i < p[b].size(); ++i) direct += std::pow(p[b].values[i] - t[b].values[i], 2);
      direct /= static_cast<double>(p[b].size());
      CHECK(std::abs(parts - direct) < 1e-10);
    }

    const FrequencyBand full{0, max_radial_mode(grid)};
    double expect = 0.0;
    for (std::size_t b = 0; b < 2; ++b) {
      double ms = 0.0;
      for (std::size_t i = 0; i < p[b].size(); ++i) ms += std::pow(p[b].values[i] - t[b].values[i], 2);
      expect += std::sqrt(ms / static_cast<double>(p[b].size())) / (full.k_max + 1) / 2.0;
    }
    CHECK(frmse(p, t, full) == Catch::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("evaluation is deterministic across thread counts and per-sample batching") {
  const GridSpec grid{16, 16};
  DataConfig dc;
  dc.grid = grid;
  dc.test = 12;
  dc.seed = 2;
  const Dataset ds = build_split(DatasetPlan::parse("downstream:helmholtz"), dc, Split::Test);
  FnoConfig c;
  c.grid = grid;
  c.width = 8;
  c.modes = 4;
  Checkpoint ck;
  Rng rng(3);
  ck.params = init_params<float>(c, rng);

  const MetricsReport a = evaluate(ck, ds, {2, 6}, 1);
  const MetricsReport b = evaluate(ck, ds, {2, 6}, 3);
  CHECK(a == b);
  CHECK(a.n_samples == 12);
  CHECK(a.task == "helmholtz");
  CHECK(a.band_edges == BandEdges{2, 6});
  CHECK(a.provenance["split"] == "test");

  // One sample at a time, then pooled: the same numbers.
  const auto preds = predict_all(ck, ds, 1);
  double mu = 0.0, linf = 0.0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    Predictor pr(c);
    const Field2D one = pr.predict(ck, ds.samples[i]);
    CHECK(one.values == preds[i].values);
    std::vector<Field2D> p1{one}, t1{*ds.samples[i].solution};
    mu += mu_l2(p1, t1).value / 12.0;
    linf = std::max(linf, l_inf(p1, t1));
  }
  CHECK(std::abs(a.mu_l2 - mu) < 1e-6 * mu);
  CHECK(a.l_inf == linf);

  const MetricsReport back = MetricsReport::from_json(nlohmann::json::parse(a.to_json().dump()));
  CHECK(back == a);

  Dataset unlabeled = ds;
  unlabeled.samples[3].solution.reset();
  CHECK_THROWS_AS(evaluate(ck, unlabeled), PreconditionError);
  CHECK_THROWS_AS(evaluate(ck, Dataset{}), PreconditionError);

  Dataset darcy = build_split(DatasetPlan::parse("downstream:darcy"), dc, Split::Test);
  CHECK_THROWS_AS(evaluate(ck, darcy), LayoutError);
}

TEST_CASE("report CSV layout") {
  CHECK(format_csv({}) == "model,task,ood,n_shot,sigma,mu_l2,l_inf,frmse_low,frmse_mid,frmse_high\n");
  CHECK(format_csv({}, true) ==
        "model,task,ood,n_shot,sigma,mu_l2,l_inf,frmse_low,frmse_mid,frmse_high,status,cell_seed\n");

  std::vector<ReportRow> rows{row("scratch", "poisson", "high-ood", 8, 0.0, 0.5),
                              row("data", "poisson", "id", 64, 0.0, 0.25),
                              row("data", "poisson", "slight-ood", 8, 0.0, 0.125),
                              row("data", "poisson", "id", 8, 0.1, 0.375), row("data", "poisson", "id", 8, 0.0, 0.0625)};
  rows[0].metrics.frmse_high = std::nan("");
  const std::string csv = format_csv(rows);
  std::vector<std::string> lines;
  for (std::size_t a = 0, b; (b = csv.find('\n', a)) != std::string::npos; a = b + 1) lines.push_back(csv.substr(a, b - a));
  REQUIRE(lines.size() == 6);
  CHECK(lines[1] == "data,poisson,id,8,0,0.0625,0.125,0.10000000000000001,0.01,0.001");
  CHECK(lines[2].starts_with("data,poisson,id,8,0.10000000000000001,0.375,"));
  CHECK(lines[3].starts_with("data,poisson,id,64,"));
  CHECK(lines[4].starts_with("data,poisson,slight-ood,8,"));
  CHECK(lines[5].starts_with("scratch,poisson,high-ood,8,"));
  CHECK(lines[5].ends_with(",nan"));

  std::vector<ReportRow> shuffled{rows[3], rows[0], rows[4], rows[1], rows[2]};
  CHECK(format_csv(shuffled) == csv);

  ReportRow quoted = row("a,b", "poisson", "id", 8, 0.0, 0.5);
  CHECK(format_csv({quoted}).find("\"a,b\",poisson") != std::string::npos);
  CHECK(report_stem(rows[0]) == "scratch-poisson-high-ood-8");
}

TEST_CASE("report JSON round trip") {
  std::vector<ReportRow> rows{row("physics", "darcy", "id", 32, 0.0, 0.3), row("hybrid", "ad", "medium-ood", 8, 0.05, 0.2)};
  rows[1].status = "failed: non-finite training loss";
  rows[1].metrics.mu_l2 = std::nan("");
  rows[1].cell_seed = 1234567890123ull;
  rows[0].metrics.provenance = {{"checkpoint_crc32", "deadbeef"}};

  const fs::path dir = fs::temp_directory_path() / ("pdewb_report_" + std::to_string(::getpid()));
  emit_report(rows, dir / "r.json", ReportFormat::Json);
  emit_report(rows, dir / "r.csv", ReportFormat::Csv, true);
  const auto back = load_report_json(dir / "r.json");
  REQUIRE(back.size() == 2);
  CHECK(back[0].model == "hybrid");
  CHECK(std::isnan(back[0].metrics.mu_l2));
  CHECK(back[0].status == rows[1].status);
  CHECK(back[0].cell_seed == rows[1].cell_seed);
  CHECK(back[1] == rows[0]);
  CHECK(rows_to_json(back).dump() == rows_to_json(rows).dump());  // NaN serializes as null
  CHECK(read_file(dir / "r.csv") == format_csv(rows, true));

  write_file_atomic(dir / "bad.json", "{\"rows\": [{\"model\": 1}]}");
  CHECK_THROWS_AS(load_report_json(dir / "bad.json"), FormatError);
  write_file_atomic(dir / "bad2.json", "not json");
  CHECK_THROWS_AS(load_report_json(dir / "bad2.json"), FormatError);
  CHECK_THROWS_AS(load_report_json(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}

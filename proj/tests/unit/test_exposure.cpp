#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "support.hpp"
#include "thermopool/error.hpp"
#include "thermopool/exposure.hpp"

using namespace thermopool;
using namespace thermopool::testing;

namespace {

// One cell per entry of `temps`, each holding that constant temperature on
// every record of `days` days starting 2010-01-01.
GridBundle constant_grid(const std::vector<double>& temps, const std::vector<double>& pops,
                         int days = 1, double lon = 0.0) {
  GridBundle g;
  std::map<CellId, CellMeta> cells;
  std::vector<TemperatureRecord> recs;
  for (std::size_t c = 0; c < temps.size(); ++c) {
    const CellId id = static_cast<CellId>(c + 1);
    cells[id] = {0.0, lon};
    g.countries.assignment[id] = "AAA";
    g.population.counts[{id, 2010}] = pops[c];
    for (int d = 0; d < days; ++d) {
      for (int h = 0; h < 24; h += 3) recs.push_back({id, utc_time(2010, 1, 1) + 86400LL * d + 3600LL * h, temps[c]});
    }
  }
  g.temperature = TemperatureGrid::from_records(std::move(recs), std::move(cells));
  return g;
}

std::size_t linear_scan_bin(double t, const BinScheme& s) {
  for (std::size_t k = 0; k < s.bin_count(); ++k) {
    if (t >= s.bin_lo(k) && t < s.bin_hi(k)) return k;
  }
  return s.bin_count();
}

}  // namespace

TEST_CASE("width 3.5 scheme") {
  const BinScheme s = make_bin_scheme(3.5);
  const std::vector<double> edges{-5, -1.5, 2, 5.5, 9, 12.5, 16, 19.5, 23, 26.5, 30};
  CHECK(s.bin_count() == 12);
  CHECK(s.edges == edges);
  CHECK(s.reference_bins == std::vector<std::size_t>{7, 8});
  CHECK(s.label(0) == "below_-5");
  CHECK(s.label(1) == "-5_to_-1.5");
  CHECK(s.label(11) == "above_30");
  CHECK(s.retained_bins().size() == 10);
}

TEST_CASE("single interior bin") {
  const BinScheme s = make_bin_scheme(35.0);
  CHECK(s.bin_count() == 3);
  CHECK(s.bin_lo(1) == -5.0);
  CHECK(s.bin_hi(1) == 30.0);
  // No bins cover [16, 23) exactly, so the bin holding 19.5 is the reference.
  CHECK(s.reference_bins == std::vector<std::size_t>{1});
}

TEST_CASE("width 1.5 truncates the last interior bin") {
  const BinScheme s = make_bin_scheme(1.5);
  // Edges -5 + 1.5 i while below 30, then 30 itself.
  std::vector<double> expected;
  for (int i = 0; -5.0 + 1.5 * i < 30.0; ++i) expected.push_back(-5.0 + 1.5 * i);
  expected.push_back(30.0);
  CHECK(s.edges == expected);
  CHECK(s.bin_count() == expected.size() + 1);
  CHECK(s.bin_lo(s.bin_count() - 2) == 29.5);
  CHECK(s.bin_hi(s.bin_count() - 2) == 30.0);
}

TEST_CASE("bin scheme errors") {
  CHECK_THROWS_AS(make_bin_scheme(0.0), Error);
  CHECK_THROWS_AS(make_bin_scheme(-1.0), Error);
  CHECK_THROWS_AS(make_bin_scheme(2.0, 10.0, 5.0), Error);
  CHECK(standard_widths().size() == 9);
}

TEST_CASE("assign_bin") {
  const BinScheme s = make_bin_scheme(3.5);
  CHECK(assign_bin(16.0, s) == 7);
  CHECK(assign_bin(-40.0, s) == 0);
  CHECK(assign_bin(30.0, s) == 11);
  CHECK(assign_bin(-5.0, s) == 1);
  for (const double w : standard_widths()) {
    const BinScheme sw = make_bin_scheme(w);
    for (int i = 0; i < 10000; ++i) {
      const double t = -20.0 + 55.0 * i / 9999.0;
      CHECK(assign_bin(t, sw) == linear_scan_bin(t, sw));
    }
  }
}

TEST_CASE("point mass exposure") {
  const GridBundle g = constant_grid({20.0}, {5.0});
  const BinScheme s = make_bin_scheme(3.5);
  const ExposureTable t = compute_exposure(g.temperature, g.population, g.countries, s);
  const auto& f = t.values.at({"AAA", 2010});
  for (std::size_t k = 0; k < f.size(); ++k) CHECK(f[k] == (k == 8 ? 1.0 : 0.0));
  // lon 0: local hours 6, 9, 12, 15, 18 fall in [6, 21).
  CHECK(t.hours_count.at({"AAA", 2010}) == 5);
}

TEST_CASE("two cells, populations 3 and 1") {
  const GridBundle g = constant_grid({0.0, 25.0}, {3.0, 1.0});
  const ExposureTable t = compute_exposure(g.temperature, g.population, g.countries,
                                           make_bin_scheme(3.5));
  const auto& f = t.values.at({"AAA", 2010});
  CHECK(f[2] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(f[9] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("local-hour window") {
  CHECK(local_hour(utc_time(2010, 1, 1, 0), 90.0) == 6);
  CHECK(local_hour(utc_time(2010, 1, 1, 3), -120.0) == 19);
  CHECK(local_hour(utc_time(2010, 1, 1, 0), -7.4) == 0);
  CHECK(DayWindow{}.contains(6));
  CHECK_FALSE(DayWindow{}.contains(21));
  CHECK(DayWindow{22, 4}.contains(23));
  CHECK(DayWindow{22, 4}.contains(3));
  CHECK_FALSE(DayWindow{22, 4}.contains(12));
  // A window that excludes every record of the day.
  const GridBundle g = constant_grid({20.0}, {5.0});
  CHECK_THROWS_AS(compute_exposure(g.temperature, g.population, g.countries, make_bin_scheme(3.5),
                                   DayWindow{1, 2}),
                  Error);
}

TEST_CASE("zero population") {
  const GridBundle g = constant_grid({20.0, 3.0}, {0.0, 0.0});
  try {
    compute_exposure(g.temperature, g.population, g.countries, make_bin_scheme(3.5));
    FAIL("expected ZeroPopulation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroPopulation);
  }
}

TEST_CASE("random grid against a direct oracle") {
  std::mt19937_64 rng(17);
  RandomGridOptions o;
  o.cells = 20;
  o.countries = 3;
  o.years = 2;
  o.days_per_year = 40;
  const GridBundle g = random_grid(o, rng);
  const BinScheme s = make_bin_scheme(2.5);
  const ExposureTable t = compute_exposure(g.temperature, g.population, g.countries, s);
  // f^k_h summed over cells, averaged over retained slots h of each cell.
  for (const auto& [key, f] : t.values) {
    std::vector<double> oracle(s.bin_count(), 0.0);
    double pop = 0.0;
    for (const auto& [cell, c] : g.countries.assignment) {
      if (c == key.country) pop += g.population.count(cell, key.year);
    }
    for (const auto& [cell, c] : g.countries.assignment) {
      if (c != key.country) continue;
      std::vector<double> counts(s.bin_count(), 0.0);
      double h = 0;
      for (const auto& r : g.temperature.records()) {
        if (r.cell != cell || utc_year(r.time) != key.year) continue;
        if (!DayWindow{}.contains(local_hour(r.time, g.temperature.cells().at(cell).lon))) continue;
        counts[linear_scan_bin(r.temp_c, s)] += 1.0;
        h += 1.0;
      }
      for (std::size_t k = 0; k < counts.size(); ++k) {
        oracle[k] += g.population.count(cell, key.year) / pop * counts[k] / h;
      }
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      CHECK(std::abs(f[k] - oracle[k]) <= 1e-12);
      CHECK(f[k] >= 0.0);
      CHECK(f[k] <= 1.0);
      sum += f[k];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("exposure invariances") {
  std::mt19937_64 rng(23);
  RandomGridOptions o;
  o.cells = 9;
  o.days_per_year = 20;
  const GridBundle g = random_grid(o, rng);
  const BinScheme s = make_bin_scheme(3.5);
  const ExposureTable base = compute_exposure(g.temperature, g.population, g.countries, s);

  SUBCASE("population scaling within a country-year") {
    GridBundle scaled = g;
    for (auto& [key, count] : scaled.population.counts) {
      if (scaled.countries.assignment.at(key.first) == "K1" && key.second == 2000) count *= 4.0;
    }
    const auto t = compute_exposure(scaled.temperature, scaled.population, scaled.countries, s);
    CHECK(t.values == base.values);
  }
  SUBCASE("record order") {
    std::vector<TemperatureRecord> recs = g.temperature.records();
    std::shuffle(recs.begin(), recs.end(), rng);
    const auto tg = TemperatureGrid::from_records(recs, g.temperature.cells());
    CHECK(compute_exposure(tg, g.population, g.countries, s).values == base.values);
  }
  SUBCASE("warming moves mass upward") {
    const auto warm = compute_exposure(g.temperature, g.population, g.countries, s, {}, 1.3);
    for (const auto& [key, f0] : base.values) {
      const auto& f1 = warm.values.at(key);
      double c0 = 0.0, c1 = 0.0;
      for (std::size_t k = 0; k < f0.size(); ++k) {
        c0 += f0[k];
        c1 += f1[k];
        CHECK(c1 <= c0 + 1e-12);
      }
    }
    CHECK(compute_exposure(g.temperature.shifted(1.3), g.population, g.countries, s).values ==
          warm.values);
  }
}

TEST_CASE("day counts") {
  SUBCASE("constant day") {
    const GridBundle g = constant_grid({20.0}, {1.0});
    const auto t = compute_day_counts(g.temperature, g.population, g.countries, make_bin_scheme(3.5));
    CHECK(t.values.at({"AAA", 2010})[8] == 1.0);
  }
  SUBCASE("averaging before binning") {
    GridBundle g;
    std::vector<TemperatureRecord> recs;
    for (int h = 0; h < 24; h += 3) recs.push_back({1, utc_time(2010, 1, 1, h), h < 12 ? 10.0 : 30.0});
    g.temperature = TemperatureGrid::from_records(recs, {{1, {0.0, 0.0}}});
    g.population.counts[{1, 2010}] = 1.0;
    g.countries.assignment[1] = "AAA";
    const auto t = compute_day_counts(g.temperature, g.population, g.countries, make_bin_scheme(3.5));
    const auto& v = t.values.at({"AAA", 2010});
    CHECK(v[8] == 1.0);
    CHECK(std::accumulate(v.begin(), v.end(), 0.0) == 1.0);
  }
  SUBCASE("three days against an oracle") {
    std::mt19937_64 rng(5);
    RandomGridOptions o;
    o.cells = 5;
    o.countries = 2;
    o.years = 1;
    o.days_per_year = 3;
    const GridBundle g = random_grid(o, rng);
    const BinScheme s = replication_scheme();
    const auto t = compute_day_counts(g.temperature, g.population, g.countries, s);
    for (const auto& [key, v] : t.values) {
      std::vector<double> oracle(s.bin_count(), 0.0);
      for (int d = 0; d < 3; ++d) {
        double num = 0.0, den = 0.0;
        for (const auto& [cell, c] : g.countries.assignment) {
          if (c != key.country) continue;
          double sum = 0.0;
          int n = 0;
          for (const auto& r : g.temperature.records()) {
            if (r.cell == cell && utc_day(r.time) == utc_day(utc_time(2000, 1, 1)) + d) {
              sum += r.temp_c;
              ++n;
            }
          }
          const double p = g.population.count(cell, key.year);
          num += p * sum / n;
          den += p;
        }
        oracle[linear_scan_bin(num / den, s)] += 1.0;
      }
      CHECK(v == oracle);
      CHECK(std::accumulate(v.begin(), v.end(), 0.0) == 3.0);
    }
  }
}

TEST_CASE("replication scheme") {
  const BinScheme s = replication_scheme();
  CHECK(s.edges.front() == -12.0);
  CHECK(s.edges.back() == 32.0);
  REQUIRE(s.reference_bins.size() == 1);
  CHECK(s.bin_lo(s.reference_bins[0]) == 10.0);
  CHECK(s.bin_hi(s.reference_bins[0]) == 15.5);
}

TEST_CASE("climate census") {
  const std::vector<double> bands{18.0};
  SUBCASE("single cell") {
    const GridBundle g = constant_grid({25.0}, {1000.0});
    const auto c = climate_census(g.temperature, g.population, g.countries, 2010, bands);
    REQUIRE(c.size() == 2);
    CHECK(c[0].population == 0.0);
    CHECK(c[1].population == 1000.0);
  }
  SUBCASE("two cells") {
    const GridBundle g = constant_grid({10.0, 20.0}, {100.0, 200.0});
    const auto c = climate_census(g.temperature, g.population, g.countries, 2010, bands);
    CHECK(c[0].population == 100.0);
    CHECK(c[1].population == 200.0);
    CHECK(climate_census(g.temperature, g.population, g.countries, 2010, bands, 10.0)[1].population ==
          300.0);
  }
  SUBCASE("missing year") {
    const GridBundle g = constant_grid({10.0}, {100.0});
    try {
      climate_census(g.temperature, g.population, g.countries, 1999, bands);
      FAIL("expected YearNotCovered");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::YearNotCovered);
    }
  }
  SUBCASE("50 cells against an oracle") {
    std::mt19937_64 rng(9);
    RandomGridOptions o;
    o.cells = 50;
    o.years = 1;
    o.days_per_year = 10;
    const GridBundle g = random_grid(o, rng);
    const std::vector<double> th{5.0, 10.0, 12.0, 15.0, 20.0};
    const auto c = climate_census(g.temperature, g.population, g.countries, 2000, th);
    std::vector<double> oracle(th.size() + 1, 0.0);
    for (const auto& [cell, meta] : g.temperature.cells()) {
      double sum = 0.0;
      int n = 0;
      for (const auto& r : g.temperature.records()) {
        if (r.cell == cell) {
          sum += r.temp_c;
          ++n;
        }
      }
      const double mean = sum / n;
      const auto band = static_cast<std::size_t>(std::upper_bound(th.begin(), th.end(), mean) - th.begin());
      oracle[band] += g.population.count(cell, 2000);
    }
    REQUIRE(c.size() == oracle.size());
    for (std::size_t b = 0; b < c.size(); ++b) CHECK(c[b].population == doctest::Approx(oracle[b]));
  }
}

TEST_CASE("exposure CSV round trip") {
  std::mt19937_64 rng(31);
  RandomGridOptions o;
  o.cells = 6;
  o.days_per_year = 5;
  const GridBundle g = random_grid(o, rng);
  const auto t = compute_exposure(g.temperature, g.population, g.countries, make_bin_scheme(4.5));
  TempDir dir("exposure");
  write_exposure_csv(t, dir / "e.csv");
  const auto back = read_exposure_csv(dir / "e.csv");
  CHECK(back.edges == t.edges);
  CHECK(back.values == t.values);
  const auto d = compute_day_counts(g.temperature, g.population, g.countries, replication_scheme());
  write_day_counts_csv(d, dir / "d.csv");
  CHECK(read_day_counts_csv(dir / "d.csv").values == d.values);
}

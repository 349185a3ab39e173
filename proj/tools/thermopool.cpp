#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "manifest.hpp"
#include "thermopool/csv.hpp"
#include "thermopool/diagnostics.hpp"
#include "thermopool/error.hpp"
#include "thermopool/exposure.hpp"
#include "thermopool/gridio.hpp"
#include "thermopool/inference.hpp"
#include "thermopool/panel.hpp"
#include "thermopool/report.hpp"
#include "thermopool/sampler.hpp"
#include "thermopool/simulate.hpp"
#include "thermopool/twfe.hpp"

namespace fs = std::filesystem;
using namespace thermopool;

namespace {

// Bad or missing flags; reported with the subcommand's usage text.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  return out;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw UsageError(std::string("missing required flag ") + flag);
}

// `--config FILE` supplies defaults for any flag of the subcommand that was
// not given on the command line. Keys use the flag names without dashes;
// underscores and dashes are interchangeable.
void apply_config(CLI::App& sub, const std::string& path) {
  for (const auto& [key, value] : read_key_values(path)) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    if (name == "config") continue;
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + name);
    } catch (const CLI::OptionNotFound&) {
      throw Error(ErrorCode::InvalidConfig,
                  "config key '" + key + "' is not a flag of '" + sub.get_name() + "'");
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

std::map<std::string, std::string> flag_values(const CLI::App& sub) {
  std::map<std::string, std::string> flags;
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->count() == 0 || opt->get_name() == "--help") continue;
    std::string joined;
    for (const auto& r : opt->results()) joined += (joined.empty() ? "" : " ") + r;
    flags[opt->get_name()] = joined;
  }
  return flags;
}

std::pair<int, int> parse_day_window(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("--day-window expects BEGIN:END");
  const auto b = parse_int(text.substr(0, colon), "--day-window");
  const auto e = parse_int(text.substr(colon + 1), "--day-window");
  if (b < 0 || b > 24 || e < 0 || e > 24) throw UsageError("--day-window hours must be in 0..24");
  return {static_cast<int>(b), static_cast<int>(e)};
}

std::string width_tag(double w) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << w;
  return s.str();
}

struct SamplerFlags {
  std::size_t chains = 4, warmup = 1000, samples = 1000, threads = 0;
  double target_accept = 0.8;
  int max_treedepth = 10;
  std::uint64_t seed = 42;

  void add(CLI::App* sub) {
    sub->add_option("--chains", chains, "Number of chains");
    sub->add_option("--warmup", warmup, "Warmup iterations per chain");
    sub->add_option("--samples", samples, "Post-warmup draws per chain");
    sub->add_option("--seed", seed, "Random seed");
    sub->add_option("--target-accept", target_accept, "Dual averaging target");
    sub->add_option("--max-treedepth", max_treedepth, "Maximum tree depth");
    sub->add_option("--threads", threads, "Worker threads (0: THERMOPOOL_THREADS or all cores)");
  }
  SamplerConfig config() const {
    SamplerConfig c;
    c.n_chains = chains;
    c.n_warmup = warmup;
    c.n_samples = samples;
    c.target_accept = target_accept;
    c.max_treedepth = max_treedepth;
    c.seed = seed;
    c.n_threads = threads;
    return c;
  }
};

struct PanelFlags {
  std::string energy, gdp, price, exposure;
  double width = 3.5;

  void add(CLI::App* sub) {
    sub->add_option("--energy", energy, "Per-capita demand, country,year,value");
    sub->add_option("--gdp", gdp, "Per-capita GDP, country,year,value");
    sub->add_option("--price", price, "Price, country,year,value");
    sub->add_option("--exposure", exposure, "Exposure table from `thermopool exposure`");
    sub->add_option("--width", width, "Bin width the exposure table was built with");
  }
  void check() const {
    require(energy, "--energy");
    require(gdp, "--gdp");
    require(price, "--price");
    require(exposure, "--exposure");
  }
  std::vector<fs::path> inputs() const { return {energy, gdp, price, exposure}; }
  PanelDataset load() const {
    return assemble_panel(load_series_csv(energy), load_series_csv(gdp), load_series_csv(price),
                          read_exposure_csv(exposure));
  }
};

void print_panel_notes(const PanelDataset& panel, const DesignMatrix& design) {
  const auto& d = panel.dropped;
  std::cerr << "panel: " << panel.rows.size() << " rows, " << panel.n_countries()
            << " countries; dropped " << d.dropped() << " of " << d.candidates
            << " (lag " << d.missing_demand_lag << ", gdp " << d.missing_gdp << ", price lag "
            << d.missing_price_lag << ", exposure " << d.missing_exposure << ")\n";
  for (const auto& w : design.warnings) std::cerr << "warning: " << w << '\n';
}

ModelSpec spec_from_draws(const PosteriorDraws& draws, const DesignMatrix& design) {
  auto meta = [&](const char* key, const std::string& fallback) {
    const auto it = draws.metadata.find(key);
    return it == draws.metadata.end() ? fallback : it->second;
  };
  return make_model_spec(parse_variant(meta("variant", "slopes")), design,
                         parse_prior_preset(meta("prior_preset", "default")),
                         parse_double(meta("lkj_eta", "2"), "draws metadata lkj_eta"));
}

double draws_width(const PosteriorDraws& draws, double fallback) {
  const auto it = draws.metadata.find("width");
  return it == draws.metadata.end() ? fallback : parse_double(it->second, "draws metadata width");
}

// ---------------------------------------------------------------- commands

struct Context {
  cli::RunManifest manifest;
  std::vector<fs::path> outputs;
};

struct ExposureCmd {
  std::string grid_dir, out, day_window = "6:21", daycounts_out;
  double width = 3.5, shift = 0.0;
  bool all_widths = false;

  void add(CLI::App* sub) {
    sub->add_option("--grid-dir", grid_dir, "Directory with temperature, cells, population, mapping");
    sub->add_option("--width", width, "Bin width in degrees C");
    sub->add_option("--out", out, "Output CSV (a directory with --all-widths)");
    sub->add_option("--day-window", day_window, "Retained local hours BEGIN:END");
    sub->add_flag("--all-widths", all_widths, "Every width from 1.0 to 5.0 in steps of 0.5");
    sub->add_option("--shift", shift, "Add this many degrees to every temperature");
    sub->add_option("--daycounts-out", daycounts_out, "Also write day counts (5.5 C bins)");
  }

  void run(Context& ctx) {
    require(grid_dir, "--grid-dir");
    require(out, "--out");
    ensure_parent(out);
    const auto [b, e] = parse_day_window(day_window);
    const DayWindow window{b, e};
    const GridBundle g = load_grid_dir(grid_dir);
    const AlignmentReport report = validate_alignment(g.temperature, g.population, g.countries);
    for (const auto& entry : report.entries) {
      std::cerr << (entry.severity == Severity::Fatal ? "error: " : "warning: ") << entry.kind
                << ": " << entry.message << '\n';
    }
    if (report.fatal()) throw Error(ErrorCode::MalformedRow, "grid inputs are misaligned");
    ctx.manifest.inputs = {grid_dir};
    if (all_widths) {
      fs::create_directories(out);
      for (const double w : standard_widths()) {
        const fs::path path = fs::path(out) / ("exposure_w" + width_tag(w) + ".csv");
        write_exposure_csv(compute_exposure(g.temperature, g.population, g.countries,
                                            make_bin_scheme(w), window, shift),
                           path);
        ctx.outputs.push_back(path);
      }
    } else {
      write_exposure_csv(compute_exposure(g.temperature, g.population, g.countries,
                                          make_bin_scheme(width), window, shift),
                         out);
      ctx.outputs.push_back(out);
    }
    if (!daycounts_out.empty()) {
      ensure_parent(daycounts_out);
      write_day_counts_csv(
          compute_day_counts(g.temperature, g.population, g.countries, replication_scheme()),
          daycounts_out);
      ctx.outputs.push_back(daycounts_out);
    }
  }
};

struct FitCmd {
  PanelFlags panel;
  SamplerFlags sampler;
  std::string variant = "slopes", prior = "default", out, design_out, csv_out;
  double lkj_eta = 2.0;
  std::optional<int> first_year, last_year;

  void add(CLI::App* sub) {
    panel.add(sub);
    sampler.add(sub);
    sub->add_option("--variant", variant, "slopes | intercepts | pooled");
    sub->add_option("--prior-preset,--prior", prior, "default | vshape | hockey | tight | wide");
    sub->add_option("--lkj-eta", lkj_eta, "LKJ shape for the deviation correlations");
    sub->add_option("--first-year", first_year, "Drop panel rows before this year");
    sub->add_option("--last-year", last_year, "Drop panel rows after this year");
    sub->add_option("--out", out, "Draws file");
    sub->add_option("--design-out", design_out, "Design CSV (default: <out>.design.csv)");
    sub->add_option("--csv", csv_out, "Also export draws as CSV");
  }

  void run(Context& ctx) {
    panel.check();
    require(out, "--out");
    ensure_parent(out);
    PanelDataset data = panel.load();
    if (first_year || last_year) {
      data = data.restrict_years(first_year.value_or(data.first_year()),
                                 last_year.value_or(data.last_year()));
    }
    const DesignMatrix design = build_design(data, make_bin_scheme(panel.width));
    print_panel_notes(data, design);
    const ModelSpec spec =
        make_model_spec(parse_variant(variant), design, parse_prior_preset(prior), lkj_eta);
    const SamplerConfig config = sampler.config();
    config.validate();
    PosteriorDraws draws = run_chains(design, spec, config);
    draws.metadata["width"] = format_double(panel.width);
    write_draws(draws, out);
    ctx.outputs.push_back(out);
    fs::path dpath = design_out.empty() ? fs::path(out).replace_extension(".design.csv")
                                        : fs::path(design_out);
    ensure_parent(dpath);
    write_design_csv(design, dpath);
    ctx.outputs.push_back(dpath);
    if (!csv_out.empty()) {
      ensure_parent(csv_out);
      write_draws_csv(draws, csv_out);
      ctx.outputs.push_back(csv_out);
    }
    ctx.manifest.inputs = panel.inputs();
    ctx.manifest.seed = config.seed;
    const std::size_t div = draws.divergences();
    std::cerr << "fit: " << draws.chains << " chains x " << draws.iterations << " draws, "
              << draws.n_params() << " parameters, " << div << " divergent transitions\n";
  }
};

void write_rhat_ess(const std::vector<ParameterDiagnostics>& rows, const fs::path& path) {
  auto out = open_out(path);
  out << "label,rhat,ess_bulk\n";
  for (const auto& r : rows) {
    out << r.label << ',' << format_double(r.rhat) << ',' << format_double(r.ess_bulk) << '\n';
  }
}

void write_loo(const LooResult& loo, const DesignMatrix& design, const fs::path& summary,
               const fs::path& pointwise) {
  auto out = open_out(summary);
  out << "quantity,value\n";
  out << "elpd," << format_double(loo.elpd) << '\n';
  out << "se," << format_double(loo.se) << '\n';
  out << "n_obs," << loo.pointwise.size() << '\n';
  out << "n_pareto_k_above_0.7," << loo.n_high_k() << '\n';
  auto pw = open_out(pointwise);
  pw << "country,year,elpd,pareto_k,flagged\n";
  for (Eigen::Index i = 0; i < loo.pointwise.size(); ++i) {
    const auto r = static_cast<std::size_t>(i);
    pw << design.groups[static_cast<std::size_t>(design.group[r])] << ',' << design.year[r] << ','
       << format_double(loo.pointwise[i]) << ',' << format_double(loo.pareto_k[i]) << ','
       << (loo.pareto_k[i] > 0.7 ? 1 : 0) << '\n';
  }
}

struct DiagnoseCmd {
  std::string draws, design, out_dir = ".", compare_out, ppc_mode = "posterior";
  std::vector<std::string> compare;
  std::size_t ppc = 0;
  std::uint64_t seed = 42;

  void add(CLI::App* sub) {
    sub->add_option("draws", draws, "Draws file");
    sub->add_option("--design", design, "Design CSV written by `thermopool fit`");
    sub->add_option("--out-dir", out_dir, "Output directory");
    sub->add_option("--compare", compare, "Draws files of competing models")->expected(1, -1);
    sub->add_option("--compare-out", compare_out, "Comparison CSV (default: <out-dir>/compare.csv)");
    sub->add_option("--ppc", ppc, "Replicates for a predictive check (0: none)");
    sub->add_option("--ppc-mode", ppc_mode, "posterior | prior");
    sub->add_option("--seed", seed, "Seed for predictive replicates");
  }

  void run(Context& ctx) {
    require(design, "--design");
    if (draws.empty() && compare.empty()) throw UsageError("need a draws file or --compare");
    const DesignMatrix dm = read_design_csv(design);
    ctx.manifest.inputs = {design};
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    if (!draws.empty()) {
      const PosteriorDraws d = read_draws(draws);
      ctx.manifest.inputs.push_back(draws);
      const ModelSpec spec = spec_from_draws(d, dm);
      const auto diag = diagnose_all(d);
      write_rhat_ess(diag, dir / "rhat_ess.csv");
      const LooResult loo = psis_loo(d, dm, spec);
      write_loo(loo, dm, dir / "loo.csv", dir / "loo_pointwise.csv");
      ctx.outputs.insert(ctx.outputs.end(),
                         {dir / "rhat_ess.csv", dir / "loo.csv", dir / "loo_pointwise.csv"});
      double max_rhat = 0.0;
      for (const auto& p : diag) {
        if (std::isfinite(p.rhat)) max_rhat = std::max(max_rhat, p.rhat);
      }
      std::cerr << "diagnose: max rhat " << max_rhat << ", divergences " << d.divergences()
                << ", elpd " << loo.elpd << " (se " << loo.se << "), pareto k > 0.7: "
                << loo.n_high_k() << '\n';
      if (ppc > 0) {
        const PredictiveMode mode =
            ppc_mode == "prior" ? PredictiveMode::Prior : PredictiveMode::Posterior;
        if (ppc_mode != "prior" && ppc_mode != "posterior") {
          throw UsageError("--ppc-mode must be prior or posterior");
        }
        const auto s = predictive_simulate(&d, dm, spec, mode, ppc, seed);
        const fs::path p = dir / ("ppc_" + ppc_mode + ".csv");
        auto out = open_out(p);
        out << "country,year,observed,lower,median,upper\n";
        for (std::size_t i = 0; i < dm.rows(); ++i) {
          const auto ii = static_cast<Eigen::Index>(i);
          out << dm.groups[static_cast<std::size_t>(dm.group[i])] << ',' << dm.year[i] << ','
              << format_double(dm.response[ii]) << ',' << format_double(s.lower[ii]) << ','
              << format_double(s.median[ii]) << ',' << format_double(s.upper[ii]) << '\n';
        }
        const fs::path ps = dir / ("ppc_" + ppc_mode + "_summary.csv");
        auto sum = open_out(ps);
        sum << "quantity,value\n"
            << "replicates," << ppc << '\n'
            << "coverage_95," << format_double(s.coverage) << '\n'
            << "ks_statistic," << format_double(s.ks_statistic) << '\n'
            << "observed_min," << format_double(s.observed_min) << '\n'
            << "observed_max," << format_double(s.observed_max) << '\n'
            << "replicated_min," << format_double(s.replicated_min) << '\n'
            << "replicated_max," << format_double(s.replicated_max) << '\n';
        ctx.outputs.insert(ctx.outputs.end(), {p, ps});
      }
    }
    if (!compare.empty()) {
      std::vector<NamedLoo> results;
      std::map<std::string, std::string> variants;
      for (const auto& f : compare) {
        const PosteriorDraws d = read_draws(f);
        ctx.manifest.inputs.push_back(f);
        results.push_back({f, psis_loo(d, dm, spec_from_draws(d, dm))});
        variants[f] = d.metadata.count("variant") ? d.metadata.at("variant") : "";
      }
      const fs::path p = compare_out.empty() ? dir / "compare.csv" : fs::path(compare_out);
      auto out = open_out(p);
      out << "model,variant,elpd,se,elpd_diff,se_diff\n";
      for (const auto& row : compare_models(results)) {
        out << row.name << ',' << variants[row.name] << ',' << format_double(row.elpd) << ','
            << format_double(row.se) << ',' << format_double(row.elpd_diff) << ','
            << format_double(row.se_diff) << '\n';
      }
      ctx.outputs.push_back(p);
    }
  }
};

struct ReportCmd {
  std::string draws, out, grid_dir;
  bool koyck = false, elasticities = false, full_posterior = false;
  double delta = 0.10;
  std::optional<double> counterfactual;
  std::optional<int> base_year;
  PanelFlags panel;

  void add(CLI::App* sub) {
    sub->add_option("draws", draws, "Draws file");
    sub->add_option("--out", out, "Output directory");
    sub->add_flag("--koyck", koyck, "Long-run temperature effects");
    sub->add_option("--delta", delta, "Exposure shift for the long-run percentages");
    sub->add_flag("--elasticities", elasticities, "Short- and long-run elasticities");
    sub->add_option("--counterfactual", counterfactual, "Uniform warming in degrees C");
    sub->add_option("--base-year", base_year, "Year the warming is applied to");
    sub->add_flag("--full-posterior", full_posterior, "Counterfactual intervals over all draws");
    sub->add_option("--grid-dir", grid_dir, "Grid directory (counterfactual)");
    panel.add(sub);
  }

  void run(Context& ctx) {
    require(draws, "draws");
    require(out, "--out");
    ensure_parent(out);
    const PosteriorDraws d = read_draws(draws);
    ctx.manifest.inputs = {draws};
    const fs::path dir(out);
    fs::create_directories(dir);
    write_summary_csv(summarize(d), dir / "summary.csv");
    ctx.outputs.push_back(dir / "summary.csv");
    if (koyck) {
      write_long_run_csv(temperature_long_run(d, delta), delta, dir / "long_run.csv");
      ctx.outputs.push_back(dir / "long_run.csv");
    }
    if (elasticities) {
      const auto table = elasticity_table(d);
      write_elasticities_csv(table, dir / "elasticities.csv");
      ctx.outputs.push_back(dir / "elasticities.csv");
      if (table.excluded_nonstationary > 0) {
        std::cerr << "warning: " << table.excluded_nonstationary
                  << " draws with |nu| >= 1 left out of the long-run elasticities\n";
      }
    }
    if (counterfactual) {
      require(grid_dir, "--grid-dir");
      panel.check();
      if (!base_year) throw UsageError("--counterfactual needs --base-year");
      const GridBundle g = load_grid_dir(grid_dir);
      const BinScheme scheme = make_bin_scheme(draws_width(d, panel.width));
      const PanelDataset data = panel.load();
      const DesignMatrix design = build_design(data, scheme);
      const ModelSpec spec = spec_from_draws(d, design);
      const auto result =
          warming_counterfactual(d, g.temperature, g.population, g.countries, scheme, data, design,
                                 spec, *counterfactual, *base_year, full_posterior);
      write_counterfactual_csv(result, dir / "counterfactual.csv");
      ctx.outputs.push_back(dir / "counterfactual.csv");
      ctx.manifest.inputs.push_back(grid_dir);
      for (const auto& p : panel.inputs()) ctx.manifest.inputs.push_back(p);
    }
  }
};

struct WindowsCmd {
  PanelFlags panel;
  SamplerFlags sampler;
  std::string variant = "slopes", prior = "default", out;
  double lkj_eta = 2.0;
  int window = 15;
  std::size_t warm_warmup = 200;

  void add(CLI::App* sub) {
    panel.add(sub);
    sampler.add(sub);
    sub->add_option("--variant", variant, "slopes | intercepts | pooled");
    sub->add_option("--prior-preset,--prior", prior, "default | vshape | hockey | tight | wide");
    sub->add_option("--lkj-eta", lkj_eta, "LKJ shape");
    sub->add_option("--window", window, "Window length in years");
    sub->add_option("--warm-warmup", warm_warmup, "Warmup of fits that inherit tuning");
    sub->add_option("--out", out, "Output CSV");
  }

  void run(Context& ctx) {
    panel.check();
    require(out, "--out");
    ensure_parent(out);
    const PanelDataset data = panel.load();
    const SamplerConfig config = sampler.config();
    config.validate();
    const auto fits = rolling_windows(
        data, make_bin_scheme(panel.width), parse_variant(variant), parse_prior_preset(prior),
        lkj_eta, config, RollingOptions{window, warm_warmup}, [](const WindowFit& f) {
          std::cerr << "window " << f.first_year << "-" << f.last_year << ": " << f.divergences
                    << " divergences\n";
        });
    write_windows_csv(fits, out);
    ctx.outputs.push_back(out);
    ctx.manifest.inputs = panel.inputs();
    ctx.manifest.seed = config.seed;
  }
};

struct TwfeCmd {
  std::string panel_dir, energy, gdp, price, population, daycounts, grid_dir, out;
  bool augmented = false;

  void add(CLI::App* sub) {
    sub->add_option("--panel", panel_dir,
                    "Directory with energy.csv, gdp.csv, price.csv, population_totals.csv");
    sub->add_option("--energy", energy, "Per-capita demand (overrides --panel)");
    sub->add_option("--gdp", gdp, "Per-capita GDP (overrides --panel)");
    sub->add_option("--price", price, "Price (overrides --panel; used with --augmented)");
    sub->add_option("--population", population, "Country population (overrides --panel)");
    sub->add_option("--daycounts", daycounts, "Day counts from `exposure --daycounts-out`");
    sub->add_option("--grid-dir", grid_dir, "Compute day counts from this grid instead");
    sub->add_flag("--augmented", augmented, "Add lagged log demand and lagged log price");
    sub->add_option("--out", out, "Output CSV");
  }

  void run(Context& ctx) {
    require(out, "--out");
    ensure_parent(out);
    auto pick = [&](std::string& v, const char* file, const char* flag) {
      if (v.empty() && !panel_dir.empty()) v = (fs::path(panel_dir) / file).string();
      require(v, flag);
    };
    pick(energy, world_files::kEnergy, "--energy");
    pick(gdp, world_files::kGdp, "--gdp");
    pick(population, world_files::kPopulationTotals, "--population");
    if (augmented) pick(price, world_files::kPrice, "--price");
    if (daycounts.empty() == grid_dir.empty()) {
      throw UsageError("give exactly one of --daycounts and --grid-dir");
    }
    const BinScheme scheme = replication_scheme();
    DayCountTable days;
    if (!daycounts.empty()) {
      days = read_day_counts_csv(daycounts);
      ctx.manifest.inputs.push_back(daycounts);
    } else {
      const GridBundle g = load_grid_dir(grid_dir);
      days = compute_day_counts(g.temperature, g.population, g.countries, scheme);
      ctx.manifest.inputs.push_back(grid_dir);
    }
    const SeriesTable e = load_series_csv(energy);
    const TwfeData data =
        build_twfe_data(days, scheme, e, load_series_csv(gdp), load_series_csv(population));
    ctx.manifest.inputs.insert(ctx.manifest.inputs.end(), {energy, gdp, population});
    TwfeFit fit;
    if (augmented) {
      const LagColumns lc = lag_columns(data, e, load_series_csv(price));
      ctx.manifest.inputs.push_back(price);
      fit = twfe_augmented(lc.data, lc.lag_log_y, lc.lag_log_price);
    } else {
      fit = twfe_fit(data);
    }
    for (const auto& o : fit.omitted) std::cerr << "warning: omitted " << o << " (no within variation)\n";
    write_twfe_csv(fit, out);
    ctx.outputs.push_back(out);
  }
};

struct CensusCmd {
  std::string grid_dir, thresholds = "0,10,20,25", out;
  int year = 0;
  double shift = 0.0;

  void add(CLI::App* sub) {
    sub->add_option("--grid-dir", grid_dir, "Grid directory");
    sub->add_option("--year", year, "Year of the annual mean temperatures");
    sub->add_option("--thresholds", thresholds, "Comma-separated band edges in degrees C");
    sub->add_option("--shift", shift, "Uniform warming in degrees C");
    sub->add_option("--out", out, "Output CSV");
  }

  void run(Context& ctx) {
    require(grid_dir, "--grid-dir");
    require(out, "--out");
    ensure_parent(out);
    if (year == 0) throw UsageError("missing required flag --year");
    const auto edges = parse_double_list(thresholds);
    const GridBundle g = load_grid_dir(grid_dir);
    const auto bands = climate_census(g.temperature, g.population, g.countries, year, edges, shift);
    auto f = open_out(out);
    f << "band_lo,band_hi,population\n";
    for (const auto& b : bands) {
      f << format_double(b.lo) << ',' << format_double(b.hi) << ',' << format_double(b.population)
        << '\n';
    }
    ctx.outputs.push_back(out);
    ctx.manifest.inputs = {grid_dir};
  }
};

struct SimulateCmd {
  std::string dgp, out;
  std::optional<std::uint64_t> seed;
  bool panel_only = false;

  void add(CLI::App* sub) {
    sub->add_option("--dgp", dgp, "Data-generating process, key=value lines");
    sub->add_option("--seed", seed, "Overrides the DGP seed");
    sub->add_flag("--panel-only", panel_only,
                  "Skip the grids; write the series and exposure.csv directly");
    sub->add_option("--out", out, "Output directory");
  }

  void run(Context& ctx) {
    require(out, "--out");
    ensure_parent(out);
    DgpConfig c = dgp.empty() ? DgpConfig{} : load_dgp_config(dgp);
    if (!dgp.empty()) ctx.manifest.inputs = {dgp};
    if (seed) c.seed = *seed;
    ctx.manifest.seed = c.seed;
    const fs::path dir(out);
    fs::create_directories(dir);
    if (panel_only) {
      const SimulatedDesign s = simulate_design(c);
      // The panel holds lags, so rebuild the series it was assembled from.
      SeriesTable energy, gdp, price;
      ExposureTable exposure;
      exposure.edges = s.scheme.edges;
      for (const auto& r : s.panel.rows) {
        energy[{r.country, r.year}] = std::exp(r.log_y);
        energy[{r.country, r.year - 1}] = std::exp(r.log_y_lag1);
        gdp[{r.country, r.year}] = std::exp(r.log_gdp);
        price[{r.country, r.year - 1}] = std::exp(r.log_price_lag1);
        exposure.values[{r.country, r.year}] = r.exposure;
      }
      write_series_csv(energy, dir / world_files::kEnergy);
      write_series_csv(gdp, dir / world_files::kGdp);
      write_series_csv(price, dir / world_files::kPrice);
      write_exposure_csv(exposure, dir / "exposure.csv");
      auto t = open_out(dir / world_files::kTruth);
      t << "label,value\n";
      for (const auto& [label, value] : s.truth) t << label << ',' << format_double(value) << '\n';
      for (const char* f : {world_files::kEnergy, world_files::kGdp, world_files::kPrice,
                            "exposure.csv", world_files::kTruth}) {
        ctx.outputs.push_back(dir / f);
      }
    } else {
      write_world(simulate_world(c), dir);
      for (const char* f : {grid_files::kTemperature, grid_files::kCells, grid_files::kPopulation,
                            grid_files::kMapping, world_files::kEnergy, world_files::kGdp,
                            world_files::kPrice, world_files::kPopulationTotals,
                            world_files::kTruth}) {
        ctx.outputs.push_back(dir / f);
      }
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temperature exposure and hierarchical demand models", "thermopool"};
  app.require_subcommand(1);
#ifdef THERMOPOOL_VERSION
  app.set_version_flag("--version", THERMOPOOL_VERSION);
#endif

  std::string config;
  ExposureCmd exposure;
  FitCmd fit;
  DiagnoseCmd diagnose;
  ReportCmd report;
  WindowsCmd windows;
  TwfeCmd twfe;
  CensusCmd census;
  SimulateCmd simulate;

  struct Entry {
    CLI::App* sub;
    std::function<void(Context&)> run;
  };
  std::vector<Entry> entries;
  auto add = [&](const char* name, const char* help, auto& cmd) {
    CLI::App* sub = app.add_subcommand(name, help);
    cmd.add(sub);
    sub->add_option("--config", config, "key=value file supplying flag defaults");
    entries.push_back({sub, [&cmd](Context& ctx) { cmd.run(ctx); }});
  };
  add("exposure", "Population-weighted temperature exposure per country-year", exposure);
  add("fit", "Fit a hierarchical model with NUTS", fit);
  add("diagnose", "R-hat, ESS, PSIS-LOO, model comparison, predictive checks", diagnose);
  add("report", "Posterior summaries, long-run effects, elasticities, counterfactuals", report);
  add("windows", "Rolling-window refits", windows);
  add("twfe", "Two-way fixed-effects regression on day counts", twfe);
  add("census", "Population by annual mean temperature band", census);
  add("simulate", "Synthetic grids and panels from a seeded process", simulate);

  CLI::App* active = nullptr;
  try {
    app.parse(argc, argv);
    for (auto& e : entries) {
      if (e.sub->parsed()) active = e.sub;
    }
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  Context ctx;
  ctx.manifest.start = std::chrono::system_clock::now();
  ctx.manifest.command = active->get_name();
  ctx.manifest.argv.assign(argv, argv + argc);
  try {
    if (!config.empty()) {
      apply_config(*active, config);
    }
    for (auto& e : entries) {
      if (e.sub == active) e.run(ctx);
    }
    if (!config.empty()) ctx.manifest.inputs.insert(ctx.manifest.inputs.begin(), config);
    ctx.manifest.flags = flag_values(*active);
    ctx.manifest.end = std::chrono::system_clock::now();
    ctx.manifest.write_for(ctx.outputs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return 1;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << active->help();
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_validation_error(e.code()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

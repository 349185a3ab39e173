#include "thermopool/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "thermopool/csv.hpp"
#include "thermopool/diagnostics.hpp"
#include "thermopool/error.hpp"

namespace thermopool {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  return out;
}

bool is_global(const std::string& label) {
  return label == "alpha" || label == "nu" || label == "sigma_e" || label.rfind("beta[", 0) == 0 ||
         label.rfind("gamma[", 0) == 0;
}

std::string bracket_name(const std::string& label) {
  const auto a = label.find('[');
  const auto b = label.rfind(']');
  return a == std::string::npos ? label : label.substr(a + 1, b - a - 1);
}

PosteriorDraws select_columns(const PosteriorDraws& d, const std::vector<std::size_t>& cols) {
  PosteriorDraws out;
  out.chains = d.chains;
  out.iterations = d.iterations;
  out.stats = d.stats;
  out.metadata = d.metadata;
  for (const auto c : cols) out.labels.push_back(d.labels[c]);
  out.values.resize(d.chains * d.iterations * cols.size());
  for (std::size_t ch = 0; ch < d.chains; ++ch) {
    for (std::size_t i = 0; i < d.iterations; ++i) {
      for (std::size_t j = 0; j < cols.size(); ++j) out.at(ch, i, j) = d.at(ch, i, cols[j]);
    }
  }
  return out;
}

std::vector<double> column_values(const PosteriorDraws& d, std::size_t p) {
  std::vector<double> v;
  v.reserve(d.total_draws());
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t i = 0; i < d.iterations; ++i) v.push_back(d.at(c, i, p));
  }
  return v;
}

std::vector<double> column_means(const PosteriorDraws& d) {
  std::vector<double> means(d.n_params());
  for (std::size_t p = 0; p < d.n_params(); ++p) {
    auto v = column_values(d, p);
    std::sort(v.begin(), v.end());
    double s = 0.0;
    for (const double x : v) s += x;
    means[p] = s / static_cast<double>(v.size());
  }
  return means;
}

void write_row(std::ostream& out, const SummaryRow& r) {
  out << r.label << ',' << format_double(r.rhat) << ',' << format_double(r.mean) << ','
      << format_double(r.sd) << ',' << format_double(r.q025) << ',' << format_double(r.median)
      << ',' << format_double(r.q975);
}

}  // namespace

SummaryRow summarize_values(std::string label, std::vector<double> v) {
  if (v.empty()) throw Error(ErrorCode::EmptyDraws, "no draws for " + label);
  std::sort(v.begin(), v.end());
  SummaryRow r;
  r.label = std::move(label);
  r.rhat = kNaN;
  double s = 0.0;
  for (const double x : v) s += x;
  r.mean = s / static_cast<double>(v.size());
  double ss = 0.0;
  for (const double x : v) ss += (x - r.mean) * (x - r.mean);
  r.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  r.q025 = quantile_sorted(v, 0.025);
  r.median = quantile_sorted(v, 0.5);
  r.q975 = quantile_sorted(v, 0.975);
  return r;
}

SummaryTable summarize(const PosteriorDraws& draws) {
  if (draws.total_draws() == 0 || draws.n_params() == 0) {
    throw Error(ErrorCode::EmptyDraws, "nothing to summarize");
  }
  SummaryTable table;
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    SummaryRow r = summarize_values(draws.labels[p], column_values(draws, p));
    if (draws.chains >= 2 && draws.iterations >= 4 && r.sd > 0.0) {
      r.rhat = split_rhat(draws.chain_matrix(p));
    }
    table.push_back(std::move(r));
  }
  return table;
}

void write_summary_csv(const SummaryTable& table, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "label,rhat,mean,sd,q2.5,median,q97.5\n";
  for (const auto& r : table) {
    write_row(out, r);
    out << '\n';
  }
}

SummaryTable read_summary_csv(const std::filesystem::path& path) {
  const auto csv = read_csv(path);
  const std::size_t c[7] = {csv.column("label"), csv.column("rhat"),   csv.column("mean"),
                            csv.column("sd"),    csv.column("q2.5"),   csv.column("median"),
                            csv.column("q97.5")};
  SummaryTable table;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    const auto w = csv.where(i);
    table.push_back({row[c[0]], parse_double(row[c[1]], w), parse_double(row[c[2]], w),
                     parse_double(row[c[3]], w), parse_double(row[c[4]], w),
                     parse_double(row[c[5]], w), parse_double(row[c[6]], w)});
  }
  return table;
}

double koyck_long_run(double effect, double nu) {
  if (!(std::abs(nu) < 1.0)) {
    throw Error(ErrorCode::NonStationary, "lag coefficient " + format_double(nu) + " has |nu| >= 1");
  }
  return effect / (1.0 - nu);
}

LongRunShift long_run_shift(double beta, double nu, double delta) {
  LongRunShift s;
  s.long_run = koyck_long_run(beta, nu);
  s.percent = delta * s.long_run * 100.0;
  s.percent_exact = std::expm1(delta * s.long_run) * 100.0;
  return s;
}

std::vector<LongRunRow> temperature_long_run(const PosteriorDraws& draws, double delta) {
  const std::size_t nu_idx = draws.index_of("nu");
  const auto means = column_means(draws);
  std::vector<LongRunRow> rows;
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    if (draws.labels[p].rfind("beta[", 0) != 0) continue;
    LongRunRow row;
    row.label = draws.labels[p];
    row.short_run_mean = means[p];
    std::vector<double> lr;
    for (std::size_t c = 0; c < draws.chains; ++c) {
      for (std::size_t i = 0; i < draws.iterations; ++i) {
        const double nu = draws.at(c, i, nu_idx);
        if (std::abs(nu) < 1.0) lr.push_back(draws.at(c, i, p) / (1.0 - nu));
      }
    }
    row.long_run = lr.empty() ? SummaryRow{row.label, kNaN, kNaN, kNaN, kNaN, kNaN, kNaN}
                              : summarize_values(row.label, std::move(lr));
    if (std::abs(means[nu_idx]) < 1.0) {
      row.at_means = long_run_shift(means[p], means[nu_idx], delta);
    } else {
      row.at_means = {kNaN, kNaN, kNaN};
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_long_run_csv(const std::vector<LongRunRow>& rows, double delta,
                        const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "bin,short_run_mean,long_run_mean,long_run_sd,long_run_q2.5,long_run_median,"
         "long_run_q97.5,shift,pct_linear,pct_exact\n";
  for (const auto& r : rows) {
    out << bracket_name(r.label) << ',' << format_double(r.short_run_mean) << ','
        << format_double(r.long_run.mean) << ',' << format_double(r.long_run.sd) << ','
        << format_double(r.long_run.q025) << ',' << format_double(r.long_run.median) << ','
        << format_double(r.long_run.q975) << ',' << format_double(delta) << ','
        << format_double(r.at_means.percent) << ',' << format_double(r.at_means.percent_exact)
        << '\n';
  }
}

ElasticityTable elasticity_table(const PosteriorDraws& draws) {
  const std::size_t nu_idx = draws.index_of("nu");
  ElasticityTable table;
  std::vector<bool> stationary;
  for (std::size_t c = 0; c < draws.chains; ++c) {
    for (std::size_t i = 0; i < draws.iterations; ++i) {
      const bool ok = std::abs(draws.at(c, i, nu_idx)) < 1.0;
      stationary.push_back(ok);
      if (!ok) ++table.excluded_nonstationary;
    }
  }
  for (std::size_t p = 0; p < draws.n_params(); ++p) {
    if (draws.labels[p].rfind("gamma[", 0) != 0) continue;
    ElasticityRow row;
    row.covariate = bracket_name(draws.labels[p]);
    row.short_run = summarize_values(draws.labels[p], column_values(draws, p));
    std::vector<double> lr;
    std::size_t s = 0;
    for (std::size_t c = 0; c < draws.chains; ++c) {
      for (std::size_t i = 0; i < draws.iterations; ++i, ++s) {
        if (stationary[s]) lr.push_back(draws.at(c, i, p) / (1.0 - draws.at(c, i, nu_idx)));
      }
    }
    row.long_run = lr.empty() ? SummaryRow{draws.labels[p], kNaN, kNaN, kNaN, kNaN, kNaN, kNaN}
                              : summarize_values(draws.labels[p], std::move(lr));
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_elasticities_csv(const ElasticityTable& table, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "covariate,horizon,mean,sd,q2.5,median,q97.5,excluded_nonstationary\n";
  for (const auto& r : table.rows) {
    for (const auto* s : {&r.short_run, &r.long_run}) {
      out << r.covariate << ',' << (s == &r.short_run ? "short_run" : "long_run") << ','
          << format_double(s->mean) << ',' << format_double(s->sd) << ','
          << format_double(s->q025) << ',' << format_double(s->median) << ','
          << format_double(s->q975) << ',' << table.excluded_nonstationary << '\n';
    }
  }
}

CounterfactualResult warming_counterfactual(const PosteriorDraws& draws, const TemperatureGrid& tg,
                                            const PopulationGrid& pg, const CountryMap& cm,
                                            const BinScheme& scheme, const PanelDataset& panel,
                                            const DesignMatrix& design, const ModelSpec& spec,
                                            double delta_t, int base_year, bool full_posterior) {
  if (draws.total_draws() == 0) throw Error(ErrorCode::EmptyDraws, "counterfactual needs draws");
  const auto years = tg.years();
  if (std::find(years.begin(), years.end(), base_year) == years.end()) {
    throw Error(ErrorCode::YearNotCovered,
                "temperature grid has no records in " + std::to_string(base_year));
  }
  bool pop_has_year = false;
  for (const auto& [key, count] : pg.counts) pop_has_year = pop_has_year || key.second == base_year;
  if (!pop_has_year) {
    throw Error(ErrorCode::YearNotCovered,
                "population grid has no counts for " + std::to_string(base_year));
  }

  const ParameterLayout layout = make_layout(spec, design);
  if (layout.labels != draws.labels) {
    throw Error(ErrorCode::DimensionMismatch, "draws do not belong to this model and design");
  }
  const ExposureTable base = compute_exposure(tg, pg, cm, scheme, {}, 0.0);
  const ExposureTable shifted = compute_exposure(tg, pg, cm, scheme, {}, delta_t);

  // One-row-per-country designs at baseline and shifted exposure.
  DesignMatrix d0, d1;
  std::vector<const PanelRow*> rows;
  for (const auto& row : panel.rows) {
    if (row.year != base_year) continue;
    const auto g = std::find(design.groups.begin(), design.groups.end(), row.country);
    if (g == design.groups.end() || !base.values.count({row.country, base_year})) continue;
    rows.push_back(&row);
  }
  if (rows.empty()) {
    throw Error(ErrorCode::YearNotCovered,
                "no panel country has a complete row in " + std::to_string(base_year));
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto k_eff = static_cast<Eigen::Index>(design.k_eff());
  const auto n_cov = static_cast<Eigen::Index>(design.n_covariates());
  for (auto* d : {&d0, &d1}) {
    d->response = Eigen::VectorXd::Zero(n);
    d->lag.resize(n);
    d->exposure.resize(n, k_eff);
    d->covariates.resize(n, n_cov);
    d->reference_mass = Eigen::VectorXd::Zero(n);
    d->groups = design.groups;
    d->exposure_labels = design.exposure_labels;
    d->covariate_labels = design.covariate_labels;
    d->retained_bins = design.retained_bins;
    d->reference_bins = design.reference_bins;
    d->covariate_centers = design.covariate_centers;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = *rows[static_cast<std::size_t>(i)];
    const int g = static_cast<int>(
        std::find(design.groups.begin(), design.groups.end(), row.country) - design.groups.begin());
    const auto& f0 = base.values.at({row.country, base_year});
    const auto& f1 = shifted.values.at({row.country, base_year});
    const double x[2] = {row.log_gdp, row.log_price_lag1};
    for (auto* d : {&d0, &d1}) {
      d->lag[i] = row.log_y_lag1;
      d->group.push_back(g);
      d->year.push_back(base_year);
      for (Eigen::Index c = 0; c < n_cov && c < 2; ++c) {
        d->covariates(i, c) = x[c] - design.covariate_centers[c];
      }
    }
    for (Eigen::Index c = 0; c < k_eff; ++c) {
      const auto bin = design.retained_bins[static_cast<std::size_t>(c)];
      d0.exposure(i, c) = f0[bin];
      d1.exposure(i, c) = f1[bin];
    }
  }
  d0.finalize();
  d1.finalize();

  const auto means = column_means(draws);
  const Eigen::VectorXd mean_row = Eigen::Map<const Eigen::VectorXd>(
      means.data(), static_cast<Eigen::Index>(means.size()));
  const Eigen::VectorXd mu0 = linear_predictor(mean_row, layout, d0);
  const Eigen::VectorXd mu1 = linear_predictor(mean_row, layout, d1);

  CounterfactualResult res;
  res.delta_t = delta_t;
  res.base_year = base_year;
  res.full_posterior = full_posterior;
  std::vector<std::vector<double>> per_draw(static_cast<std::size_t>(n));
  if (full_posterior) {
    for (std::size_t c = 0; c < draws.chains; ++c) {
      for (std::size_t i = 0; i < draws.iterations; ++i) {
        const Eigen::VectorXd r = draws.row(c, i);
        const Eigen::VectorXd a = linear_predictor(r, layout, d0);
        const Eigen::VectorXd b = linear_predictor(r, layout, d1);
        for (Eigen::Index j = 0; j < n; ++j) {
          per_draw[static_cast<std::size_t>(j)].push_back(std::expm1(b[j] - a[j]) * 100.0);
        }
      }
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    CountryChange ch;
    ch.country = rows[static_cast<std::size_t>(i)]->country;
    ch.baseline = std::exp(mu0[i]);
    ch.counterfactual = std::exp(mu1[i]);
    ch.pct_change = std::expm1(mu1[i] - mu0[i]) * 100.0;
    ch.pct_lower = ch.pct_upper = kNaN;
    if (full_posterior) {
      auto& v = per_draw[static_cast<std::size_t>(i)];
      std::sort(v.begin(), v.end());
      ch.pct_lower = quantile_sorted(v, 0.025);
      ch.pct_upper = quantile_sorted(v, 0.975);
    }
    res.total_baseline += ch.baseline;
    res.total_counterfactual += ch.counterfactual;
    res.countries.push_back(std::move(ch));
  }
  res.total_pct = (res.total_counterfactual / res.total_baseline - 1.0) * 100.0;
  return res;
}

void write_counterfactual_csv(const CounterfactualResult& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "# delta_t=" << format_double(r.delta_t) << " base_year=" << r.base_year << '\n';
  out << "country,baseline,counterfactual,pct_change";
  if (r.full_posterior) out << ",pct_q2.5,pct_q97.5";
  out << '\n';
  for (const auto& c : r.countries) {
    out << c.country << ',' << format_double(c.baseline) << ',' << format_double(c.counterfactual)
        << ',' << format_double(c.pct_change);
    if (r.full_posterior) out << ',' << format_double(c.pct_lower) << ',' << format_double(c.pct_upper);
    out << '\n';
  }
  out << "TOTAL," << format_double(r.total_baseline) << ','
      << format_double(r.total_counterfactual) << ',' << format_double(r.total_pct);
  if (r.full_posterior) out << ",nan,nan";
  out << '\n';
}

int window_count(int first_year, int last_year, int window) {
  const int span = last_year - first_year + 1;
  if (window < 1 || window > span) {
    throw Error(ErrorCode::WindowTooWide, "window of " + std::to_string(window) +
                                              " years does not fit a span of " +
                                              std::to_string(span));
  }
  return span - window + 1;
}

std::vector<WindowFit> rolling_windows(const PanelDataset& panel, const BinScheme& scheme,
                                       Variant variant, PriorPreset preset, double lkj_eta,
                                       const SamplerConfig& config, const RollingOptions& options,
                                       const std::function<void(const WindowFit&)>& progress) {
  const int first = panel.first_year();
  const int count = window_count(first, panel.last_year(), options.window);
  std::vector<WindowFit> fits;
  std::vector<Tuning> tuning;
  for (int w = 0; w < count; ++w) {
    WindowFit fit;
    fit.first_year = first + w;
    fit.last_year = first + w + options.window - 1;
    const DesignMatrix design = build_design(panel.restrict_years(fit.first_year, fit.last_year), scheme);
    const ModelSpec spec = make_model_spec(variant, design, preset, lkj_eta);
    SamplerConfig cfg = config;
    const bool warm = w > 0 && !tuning.empty();
    if (warm) cfg.n_warmup = std::min(config.n_warmup, options.warm_warmup);
    std::vector<Tuning> next;
    const PosteriorDraws draws = run_chains(design, spec, cfg, warm ? &tuning : nullptr, &next);
    tuning = std::move(next);
    std::vector<std::size_t> cols;
    for (std::size_t p = 0; p < draws.n_params(); ++p) {
      if (is_global(draws.labels[p])) cols.push_back(p);
    }
    fit.summary = summarize(select_columns(draws, cols));
    fit.divergences = draws.divergences();
    if (progress) progress(fit);
    fits.push_back(std::move(fit));
  }
  return fits;
}

void write_windows_csv(const std::vector<WindowFit>& fits, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "window_first,window_last,label,rhat,mean,sd,q2.5,median,q97.5,divergences\n";
  for (const auto& f : fits) {
    for (const auto& r : f.summary) {
      out << f.first_year << ',' << f.last_year << ',';
      write_row(out, r);
      out << ',' << f.divergences << '\n';
    }
  }
}

}  // namespace thermopool

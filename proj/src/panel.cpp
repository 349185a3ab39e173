#include "thermopool/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"

namespace thermopool {

namespace {

void require_positive(const SeriesTable& series, const char* name) {
  for (const auto& [key, value] : series) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw Error(ErrorCode::NonPositiveValue,
                  std::string(name) + " for " + key.country + " " +
                      std::to_string(key.year) + " is " + format_double(value));
    }
  }
}

const double* lookup(const SeriesTable& series, const std::string& country, int year) {
  const auto it = series.find({country, year});
  return it == series.end() ? nullptr : &it->second;
}

std::string join_indices(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ';';
    out += std::to_string(v[i]);
  }
  return out;
}

std::vector<std::size_t> split_indices(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (!item.empty()) out.push_back(static_cast<std::size_t>(parse_int(item, "design header")));
  }
  return out;
}

}  // namespace

SeriesTable load_series_csv(const std::filesystem::path& path) {
  const auto csv = read_csv(path);
  const auto c_country = csv.column("country");
  const auto c_year = csv.column("year");
  const auto c_value = csv.column("value");
  SeriesTable series;
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto& row = csv.rows[i];
    const auto where = csv.where(i);
    if (row[c_value].empty() || row[c_value] == "NA") continue;  // missing
    const CountryYear key{row[c_country], static_cast<int>(parse_int(row[c_year], where))};
    if (!series.emplace(key, parse_double(row[c_value], where)).second) {
      throw Error(ErrorCode::DuplicateRecord, where);
    }
  }
  return series;
}

void write_series_csv(const SeriesTable& series, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << "country,year,value\n";
  for (const auto& [key, value] : series) {
    out << key.country << ',' << key.year << ',' << format_double(value) << '\n';
  }
}

int PanelDataset::first_year() const {
  int y = rows.empty() ? 0 : rows.front().year;
  for (const auto& r : rows) y = std::min(y, r.year);
  return y;
}

int PanelDataset::last_year() const {
  int y = rows.empty() ? 0 : rows.front().year;
  for (const auto& r : rows) y = std::max(y, r.year);
  return y;
}

PanelDataset PanelDataset::restrict_years(int first, int last) const {
  PanelDataset out;
  out.edges = edges;
  for (const auto& r : rows) {
    if (r.year < first || r.year > last) continue;
    out.rows.push_back(r);
    ++out.years_per_country[r.country];
  }
  int id = 0;
  for (const auto& [country, n] : out.years_per_country) out.country_index[country] = id++;
  return out;
}

PanelDataset assemble_panel(const SeriesTable& energy, const SeriesTable& gdp,
                            const SeriesTable& price, const ExposureTable& exposure) {
  require_positive(energy, "demand");
  require_positive(gdp, "GDP");
  require_positive(price, "price");

  PanelDataset panel;
  panel.edges = exposure.edges;
  const std::size_t K = exposure.bin_count();
  for (const auto& [key, demand] : energy) {
    ++panel.dropped.candidates;
    const double* demand_lag = lookup(energy, key.country, key.year - 1);
    if (!demand_lag) {
      ++panel.dropped.missing_demand_lag;
      continue;
    }
    const double* income = lookup(gdp, key.country, key.year);
    if (!income) {
      ++panel.dropped.missing_gdp;
      continue;
    }
    const double* price_lag = lookup(price, key.country, key.year - 1);
    if (!price_lag) {
      ++panel.dropped.missing_price_lag;
      continue;
    }
    const auto exp_it = exposure.values.find(key);
    if (exp_it == exposure.values.end()) {
      ++panel.dropped.missing_exposure;
      continue;
    }
    if (exp_it->second.size() != K) {
      throw Error(ErrorCode::DimensionMismatch, "exposure row width differs from table");
    }
    PanelRow row;
    row.country = key.country;
    row.year = key.year;
    row.log_y = std::log(demand);
    row.log_y_lag1 = std::log(*demand_lag);
    row.log_gdp = std::log(*income);
    row.log_price_lag1 = std::log(*price_lag);
    row.exposure = exp_it->second;
    panel.rows.push_back(std::move(row));
    ++panel.years_per_country[key.country];
  }
  if (panel.rows.empty()) {
    throw Error(ErrorCode::EmptyPanel, "no country-year has every ingredient");
  }
  int id = 0;
  for (const auto& [country, n] : panel.years_per_country) panel.country_index[country] = id++;
  return panel;
}

void DesignMatrix::finalize() {
  order.resize(rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [this](std::size_t a, std::size_t b) {
    if (group[a] != group[b]) return group[a] < group[b];
    if (year[a] != year[b]) return year[a] < year[b];
    if (response[a] != response[b]) return response[a] < response[b];
    return lag[a] < lag[b];
  });
}

DesignMatrix DesignMatrix::select_rows(std::span<const std::size_t> rows_) const {
  DesignMatrix out;
  const auto n = static_cast<Eigen::Index>(rows_.size());
  out.response.resize(n);
  out.lag.resize(n);
  out.exposure.resize(n, exposure.cols());
  out.covariates.resize(n, covariates.cols());
  out.reference_mass.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(rows_[static_cast<std::size_t>(i)]);
    out.response[i] = response[r];
    out.lag[i] = lag[r];
    out.exposure.row(i) = exposure.row(r);
    out.covariates.row(i) = covariates.row(r);
    out.reference_mass[i] = reference_mass.size() ? reference_mass[r] : 0.0;
    out.group.push_back(group[static_cast<std::size_t>(r)]);
    out.year.push_back(year[static_cast<std::size_t>(r)]);
  }
  out.covariate_centers = covariate_centers;
  out.groups = groups;
  out.exposure_labels = exposure_labels;
  out.covariate_labels = covariate_labels;
  out.retained_bins = retained_bins;
  out.reference_bins = reference_bins;
  out.finalize();
  return out;
}

DesignMatrix build_design(const PanelDataset& panel, const BinScheme& scheme) {
  if (panel.rows.empty()) throw Error(ErrorCode::EmptyPanel, "cannot build a design");
  const std::size_t K = scheme.bin_count();
  if (panel.rows.front().exposure.size() != K) {
    throw Error(ErrorCode::DimensionMismatch,
                "scheme has " + std::to_string(K) + " bins, exposure rows have " +
                    std::to_string(panel.rows.front().exposure.size()));
  }
  if (!panel.edges.empty()) {
    for (std::size_t i = 0; i < scheme.edges.size(); ++i) {
      if (std::abs(panel.edges[i] - scheme.edges[i]) > 1e-9) {
        throw Error(ErrorCode::DimensionMismatch, "exposure edges differ from scheme");
      }
    }
  }

  DesignMatrix d;
  d.retained_bins = scheme.retained_bins();
  d.reference_bins = scheme.reference_bins;
  const auto n = static_cast<Eigen::Index>(panel.rows.size());
  const auto k_eff = static_cast<Eigen::Index>(d.retained_bins.size());
  d.response.resize(n);
  d.lag.resize(n);
  d.exposure.resize(n, k_eff);
  d.covariates.resize(n, 2);
  d.reference_mass.resize(n);
  for (const auto k : d.retained_bins) d.exposure_labels.push_back(scheme.label(k));
  d.covariate_labels = {"log_gdp", "log_price_lag1"};
  d.groups.resize(panel.country_index.size());
  for (const auto& [country, id] : panel.country_index) {
    d.groups[static_cast<std::size_t>(id)] = country;
  }

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = panel.rows[static_cast<std::size_t>(i)];
    d.response[i] = row.log_y;
    d.lag[i] = row.log_y_lag1;
    for (Eigen::Index c = 0; c < k_eff; ++c) {
      d.exposure(i, c) = row.exposure[d.retained_bins[static_cast<std::size_t>(c)]];
    }
    double ref = 0.0;
    for (const auto k : d.reference_bins) ref += row.exposure[k];
    d.reference_mass[i] = ref;
    d.covariates(i, 0) = row.log_gdp;
    d.covariates(i, 1) = row.log_price_lag1;
    d.group.push_back(panel.country_index.at(row.country));
    d.year.push_back(row.year);
  }
  d.covariate_centers = d.covariates.colwise().mean().transpose();
  d.covariates.rowwise() -= d.covariate_centers.transpose();

  auto constant = [](const auto& column, const std::vector<Eigen::Index>& idx) {
    for (const auto i : idx) {
      if (column[i] != column[idx.front()]) return false;
    }
    return true;
  };
  std::vector<Eigen::Index> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  for (Eigen::Index c = 0; c < k_eff; ++c) {
    if (n > 1 && constant(d.exposure.col(c), all)) {
      d.warnings.push_back("RankWarning: exposure column " +
                           d.exposure_labels[static_cast<std::size_t>(c)] +
                           " is constant");
    }
  }
  for (Eigen::Index c = 0; c < 2; ++c) {
    if (n > 1 && constant(d.covariates.col(c), all)) {
      d.warnings.push_back("RankWarning: covariate " +
                           d.covariate_labels[static_cast<std::size_t>(c)] +
                           " is constant");
    }
  }
  std::vector<std::vector<Eigen::Index>> by_group(d.groups.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    by_group[static_cast<std::size_t>(d.group[static_cast<std::size_t>(i)])].push_back(i);
  }
  for (std::size_t g = 0; g < by_group.size(); ++g) {
    const auto& idx = by_group[g];
    if (idx.size() < 2) continue;
    for (Eigen::Index c = 0; c < k_eff; ++c) {
      const auto col = d.exposure.col(c);
      if (col[idx.front()] != 0.0 && constant(col, idx)) {
        d.warnings.push_back("RankWarning: exposure column " +
                             d.exposure_labels[static_cast<std::size_t>(c)] +
                             " is constant within " + d.groups[g]);
      }
    }
  }
  d.finalize();
  return d;
}

void write_design_csv(const DesignMatrix& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << "# retained_bins=" << join_indices(d.retained_bins) << '\n';
  out << "# reference_bins=" << join_indices(d.reference_bins) << '\n';
  out << "# covariate_centers=";
  for (Eigen::Index c = 0; c < d.covariate_centers.size(); ++c) {
    out << (c ? ";" : "") << format_double(d.covariate_centers[c]);
  }
  out << '\n';
  out << "country,year,log_y,log_y_lag1,reference_mass";
  for (const auto& l : d.exposure_labels) out << ",F:" << l;
  for (const auto& l : d.covariate_labels) out << ",X:" << l;
  out << '\n';
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << d.groups[static_cast<std::size_t>(d.group[i])] << ',' << d.year[i] << ','
        << format_double(d.response[r]) << ',' << format_double(d.lag[r]) << ','
        << format_double(d.reference_mass[r]);
    for (Eigen::Index c = 0; c < d.exposure.cols(); ++c) {
      out << ',' << format_double(d.exposure(r, c));
    }
    for (Eigen::Index c = 0; c < d.covariates.cols(); ++c) {
      out << ',' << format_double(d.covariates(r, c));
    }
    out << '\n';
  }
}

DesignMatrix read_design_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  DesignMatrix d;
  {
    std::stringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      if (line.rfind("# ", 0) != 0) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const auto key = line.substr(2, eq - 2);
      const auto value = line.substr(eq + 1);
      if (key == "retained_bins") d.retained_bins = split_indices(value);
      if (key == "reference_bins") d.reference_bins = split_indices(value);
      if (key == "covariate_centers") {
        std::vector<double> centers;
        std::stringstream ss(value);
        std::string item;
        while (std::getline(ss, item, ';')) centers.push_back(parse_double(item, path.string()));
        d.covariate_centers = Eigen::Map<Eigen::VectorXd>(centers.data(),
                                                          static_cast<Eigen::Index>(centers.size()));
      }
    }
  }
  std::stringstream body(text);
  const auto csv = parse_csv(body, path);
  std::vector<std::size_t> f_cols, x_cols;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (csv.header[c].rfind("F:", 0) == 0) {
      f_cols.push_back(c);
      d.exposure_labels.push_back(csv.header[c].substr(2));
    } else if (csv.header[c].rfind("X:", 0) == 0) {
      x_cols.push_back(c);
      d.covariate_labels.push_back(csv.header[c].substr(2));
    }
  }
  const auto c_country = csv.column("country");
  const auto c_year = csv.column("year");
  const auto c_y = csv.column("log_y");
  const auto c_lag = csv.column("log_y_lag1");
  const auto c_ref = csv.column("reference_mass");
  const auto n = static_cast<Eigen::Index>(csv.rows.size());
  if (n == 0) throw Error(ErrorCode::EmptyPanel, path.string() + " has no rows");
  d.response.resize(n);
  d.lag.resize(n);
  d.reference_mass.resize(n);
  d.exposure.resize(n, static_cast<Eigen::Index>(f_cols.size()));
  d.covariates.resize(n, static_cast<Eigen::Index>(x_cols.size()));
  std::map<std::string, int> ids;
  for (const auto& row : csv.rows) ids.emplace(row[c_country], 0);
  int next = 0;
  for (auto& [country, id] : ids) {
    id = next++;
    d.groups.push_back(country);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = csv.rows[static_cast<std::size_t>(i)];
    const auto where = csv.where(static_cast<std::size_t>(i));
    d.group.push_back(ids.at(row[c_country]));
    d.year.push_back(static_cast<int>(parse_int(row[c_year], where)));
    d.response[i] = parse_double(row[c_y], where);
    d.lag[i] = parse_double(row[c_lag], where);
    d.reference_mass[i] = parse_double(row[c_ref], where);
    for (std::size_t c = 0; c < f_cols.size(); ++c) {
      d.exposure(i, static_cast<Eigen::Index>(c)) = parse_double(row[f_cols[c]], where);
    }
    for (std::size_t c = 0; c < x_cols.size(); ++c) {
      d.covariates(i, static_cast<Eigen::Index>(c)) = parse_double(row[x_cols[c]], where);
    }
  }
  if (d.covariate_centers.size() != d.covariates.cols()) {
    d.covariate_centers = Eigen::VectorXd::Zero(d.covariates.cols());
  }
  d.finalize();
  return d;
}

}  // namespace thermopool

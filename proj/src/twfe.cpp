#include "thermopool/twfe.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <map>

#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"

namespace thermopool {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> index_of_values(const auto& values, std::size_t& n_distinct) {
  std::map<std::decay_t<decltype(values.front())>, int> ids;
  for (const auto& v : values) ids.emplace(v, 0);
  int next = 0;
  for (auto& [v, id] : ids) id = next++;
  n_distinct = ids.size();
  std::vector<int> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(ids.at(v));
  return out;
}

double checked_log(double v, const std::string& what) {
  if (!(v > 0.0)) throw Error(ErrorCode::NonPositiveValue, what + " is " + format_double(v));
  return std::log(v);
}

}  // namespace

Eigen::VectorXd TwfeFit::standard_errors() const {
  return vcov.diagonal().array().sqrt();
}

int within_transform(Eigen::MatrixXd& m, const std::vector<int>& country_id,
                     const std::vector<int>& year_id, double tol) {
  const auto n = m.rows();
  const int n_c = country_id.empty() ? 0 : *std::max_element(country_id.begin(), country_id.end()) + 1;
  const int n_y = year_id.empty() ? 0 : *std::max_element(year_id.begin(), year_id.end()) + 1;
  std::vector<double> count_c(static_cast<std::size_t>(n_c), 0.0), count_y(static_cast<std::size_t>(n_y), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    count_c[static_cast<std::size_t>(country_id[static_cast<std::size_t>(i)])] += 1.0;
    count_y[static_cast<std::size_t>(year_id[static_cast<std::size_t>(i)])] += 1.0;
  }
  auto sweep = [&](const std::vector<int>& id, const std::vector<double>& count) {
    Eigen::MatrixXd means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(count.size()), m.cols());
    for (Eigen::Index i = 0; i < n; ++i) means.row(id[static_cast<std::size_t>(i)]) += m.row(i);
    for (Eigen::Index g = 0; g < means.rows(); ++g) means.row(g) /= count[static_cast<std::size_t>(g)];
    double change = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto row = means.row(id[static_cast<std::size_t>(i)]);
      m.row(i) -= row;
      change = std::max(change, row.cwiseAbs().maxCoeff());
    }
    return change;
  };
  int iterations = 0;
  for (; iterations < 100000; ++iterations) {
    const double a = sweep(country_id, count_c);
    const double b = sweep(year_id, count_y);
    if (std::max(a, b) < tol) break;
  }
  return iterations + 1;
}

TwfeFit twfe_fit(const TwfeData& data) {
  const auto n = static_cast<Eigen::Index>(data.rows());
  if (data.X.rows() != n || data.country.size() != data.rows() || data.year.size() != data.rows() ||
      data.labels.size() != static_cast<std::size_t>(data.X.cols())) {
    throw Error(ErrorCode::DimensionMismatch, "twfe inputs have inconsistent sizes");
  }
  TwfeFit fit;
  fit.labels = data.labels;
  fit.n_obs = data.rows();
  const auto cid = index_of_values(data.country, fit.n_countries);
  const auto yid = index_of_values(data.year, fit.n_years);
  if (fit.n_countries < 2) {
    throw Error(ErrorCode::TooFewClusters, "need at least two countries, got " +
                                               std::to_string(fit.n_countries));
  }
  if (fit.n_years < 2) throw Error(ErrorCode::InvalidConfig, "need at least two years");

  const auto p = data.X.cols();
  Eigen::MatrixXd m(n, p + 1);
  m.col(0) = data.y;
  m.rightCols(p) = data.X;
  fit.demean_iterations = within_transform(m, cid, yid);

  std::vector<Eigen::Index> keep;
  for (Eigen::Index c = 0; c < p; ++c) {
    const double scale = data.X.col(c).cwiseAbs().maxCoeff();
    if (m.col(c + 1).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, scale)) {
      fit.omitted.push_back(data.labels[static_cast<std::size_t>(c)]);
    } else {
      keep.push_back(c);
    }
  }
  const auto k = static_cast<Eigen::Index>(keep.size());
  Eigen::MatrixXd Xw(n, k);
  for (Eigen::Index j = 0; j < k; ++j) Xw.col(j) = m.col(keep[static_cast<std::size_t>(j)] + 1);
  const Eigen::VectorXd yw = m.col(0);

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xw);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    throw Error(ErrorCode::RankDeficient, "regressors are collinear after the within transform (rank " +
                                              std::to_string(qr.rank()) + " of " + std::to_string(k) + ")");
  }
  const Eigen::VectorXd b = qr.solve(yw);
  const Eigen::VectorXd u = yw - Xw * b;

  const Eigen::MatrixXd xtx_inv = (Xw.transpose() * Xw).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
  std::vector<Eigen::VectorXd> score(fit.n_countries, Eigen::VectorXd::Zero(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    score[static_cast<std::size_t>(cid[static_cast<std::size_t>(i)])] += Xw.row(i).transpose() * u[i];
  }
  for (const auto& s : score) meat += s * s.transpose();
  const double G = static_cast<double>(fit.n_countries);
  const double nd = static_cast<double>(n);
  const double factor = G / (G - 1.0) * (nd - 1.0) / (nd - static_cast<double>(k));
  Eigen::MatrixXd v = factor * xtx_inv * meat * xtx_inv;
  v = (0.5 * (v + v.transpose())).eval();

  fit.coefficients = Eigen::VectorXd::Constant(p, kNaN);
  fit.vcov = Eigen::MatrixXd::Constant(p, p, kNaN);
  for (Eigen::Index a = 0; a < k; ++a) {
    fit.coefficients[keep[static_cast<std::size_t>(a)]] = b[a];
    for (Eigen::Index c = 0; c < k; ++c) {
      fit.vcov(keep[static_cast<std::size_t>(a)], keep[static_cast<std::size_t>(c)]) = v(a, c);
    }
  }
  return fit;
}

TwfeFit twfe_augmented(const TwfeData& data, const Eigen::VectorXd& lag_log_y,
                       const Eigen::VectorXd& lag_log_price) {
  if (lag_log_y.size() != data.y.size() || lag_log_price.size() != data.y.size()) {
    throw Error(ErrorCode::DimensionMismatch, "lag columns do not match the data");
  }
  TwfeData aug = data;
  aug.X.conservativeResize(Eigen::NoChange, data.X.cols() + 2);
  aug.X.col(data.X.cols()) = lag_log_y;
  aug.X.col(data.X.cols() + 1) = lag_log_price;
  aug.labels.push_back("log_y_lag1");
  aug.labels.push_back("log_price_lag1");
  return twfe_fit(aug);
}

TwfeData build_twfe_data(const DayCountTable& days, const BinScheme& scheme,
                         const SeriesTable& energy, const SeriesTable& gdp,
                         const SeriesTable& population) {
  if (days.bin_count() != scheme.bin_count()) {
    throw Error(ErrorCode::DimensionMismatch, "day counts do not use this bin scheme");
  }
  const auto retained = scheme.retained_bins();
  TwfeData d;
  for (const auto k : retained) d.labels.push_back("days[" + scheme.label(k) + "]");
  for (const char* l : {"log_pop", "log_pop_sq", "log_gdp", "log_gdp_sq"}) d.labels.push_back(l);
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (const auto& [key, counts] : days.values) {
    const auto e = energy.find(key);
    const auto g = gdp.find(key);
    const auto p = population.find(key);
    if (e == energy.end() || g == gdp.end() || p == population.end()) continue;
    const std::string what = key.country + " " + std::to_string(key.year);
    std::vector<double> row;
    for (const auto k : retained) row.push_back(counts[k]);
    const double lp = checked_log(p->second, "population for " + what);
    const double lg = checked_log(g->second, "GDP for " + what);
    row.insert(row.end(), {lp, lp * lp, lg, lg * lg});
    ys.push_back(checked_log(e->second, "demand for " + what));
    rows.push_back(std::move(row));
    d.country.push_back(key.country);
    d.year.push_back(key.year);
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyPanel, "no country-year has day counts and covariates");
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  d.X.resize(n, static_cast<Eigen::Index>(d.labels.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d.X.cols(); ++c) d.X(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
  }
  return d;
}

LagColumns lag_columns(const TwfeData& data, const SeriesTable& energy, const SeriesTable& price) {
  LagColumns out;
  out.data.labels = data.labels;
  std::vector<Eigen::Index> keep;
  std::vector<double> ly, lpr;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto e = energy.find({data.country[i], data.year[i] - 1});
    const auto p = price.find({data.country[i], data.year[i] - 1});
    if (e == energy.end() || p == price.end()) continue;
    keep.push_back(static_cast<Eigen::Index>(i));
    ly.push_back(checked_log(e->second, "lagged demand"));
    lpr.push_back(checked_log(p->second, "lagged price"));
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  out.data.y.resize(n);
  out.data.X.resize(n, data.X.cols());
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto i = keep[static_cast<std::size_t>(j)];
    out.data.y[j] = data.y[i];
    out.data.X.row(j) = data.X.row(i);
    out.data.country.push_back(data.country[static_cast<std::size_t>(i)]);
    out.data.year.push_back(data.year[static_cast<std::size_t>(i)]);
  }
  out.lag_log_y = Eigen::Map<Eigen::VectorXd>(ly.data(), n);
  out.lag_log_price = Eigen::Map<Eigen::VectorXd>(lpr.data(), n);
  return out;
}

void write_twfe_csv(const TwfeFit& fit, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << "# cluster=country n_obs=" << fit.n_obs << " n_countries=" << fit.n_countries
      << " n_years=" << fit.n_years << '\n';
  out << "label,estimate,cluster_se,t_stat\n";
  const Eigen::VectorXd se = fit.standard_errors();
  for (std::size_t i = 0; i < fit.labels.size(); ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    out << fit.labels[i] << ',' << format_double(fit.coefficients[c]) << ','
        << format_double(se[c]) << ',' << format_double(fit.coefficients[c] / se[c]) << '\n';
  }
}

}  // namespace thermopool

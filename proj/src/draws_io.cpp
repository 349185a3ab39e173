#include "thermopool/draws.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "thermopool/csv.hpp"
#include "thermopool/error.hpp"

namespace thermopool {

namespace {

constexpr std::size_t kStatColumns = 7;
constexpr const char* kMagic = "thermopool-draws 1";

static_assert(std::endian::native == std::endian::little,
              "draws files are written in little-endian order");

void stats_to(const IterationStats& s, double* out) {
  out[0] = s.divergent ? 1.0 : 0.0;
  out[1] = s.treedepth;
  out[2] = s.n_leapfrog;
  out[3] = s.accept_stat;
  out[4] = s.energy;
  out[5] = s.step_size;
  out[6] = s.lp;
}

IterationStats stats_from(const double* in) {
  IterationStats s;
  s.divergent = in[0] != 0.0;
  s.treedepth = static_cast<int>(in[1]);
  s.n_leapfrog = static_cast<int>(in[2]);
  s.accept_stat = in[3];
  s.energy = in[4];
  s.step_size = in[5];
  s.lp = in[6];
  return s;
}

}  // namespace

std::size_t PosteriorDraws::index_of(std::string_view label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) {
    throw Error(ErrorCode::InvalidConfig, "draws have no column " + std::string(label));
  }
  return static_cast<std::size_t>(it - labels.begin());
}

Eigen::VectorXd PosteriorDraws::row(std::size_t chain, std::size_t iter) const {
  const auto p = static_cast<Eigen::Index>(n_params());
  return Eigen::Map<const Eigen::VectorXd>(&values[(chain * iterations + iter) * n_params()], p);
}

Eigen::MatrixXd PosteriorDraws::chain_matrix(std::size_t param) const {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(iterations), static_cast<Eigen::Index>(chains));
  for (std::size_t c = 0; c < chains; ++c) {
    for (std::size_t i = 0; i < iterations; ++i) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = at(c, i, param);
    }
  }
  return m;
}

std::size_t PosteriorDraws::divergences() const {
  return static_cast<std::size_t>(
      std::count_if(stats.begin(), stats.end(), [](const auto& s) { return s.divergent; }));
}

PosteriorDraws PosteriorDraws::permute_chains(const std::vector<std::size_t>& perm) const {
  PosteriorDraws out = *this;
  const std::size_t block = iterations * n_params();
  for (std::size_t c = 0; c < chains; ++c) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(perm[c] * block), block,
                out.values.begin() + static_cast<std::ptrdiff_t>(c * block));
    std::copy_n(stats.begin() + static_cast<std::ptrdiff_t>(perm[c] * iterations), iterations,
                out.stats.begin() + static_cast<std::ptrdiff_t>(c * iterations));
  }
  return out;
}

void write_draws(const PosteriorDraws& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << kMagic << '\n';
  out << "chains " << d.chains << '\n';
  out << "iterations " << d.iterations << '\n';
  out << "parameters " << d.n_params() << '\n';
  out << "stats " << kStatColumns << '\n';
  for (const auto& l : d.labels) out << "label " << l << '\n';
  for (const auto& [k, v] : d.metadata) out << "meta " << k << '=' << v << '\n';
  out << "end_header\n";
  std::vector<double> buf(d.n_params() + kStatColumns);
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t i = 0; i < d.iterations; ++i) {
      std::copy_n(&d.values[(c * d.iterations + i) * d.n_params()], d.n_params(), buf.begin());
      stats_to(d.stats[c * d.iterations + i], buf.data() + d.n_params());
      out.write(reinterpret_cast<const char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(double)));
    }
  }
  if (!out) throw Error(ErrorCode::FileNotFound, "short write to " + path.string());
}

PosteriorDraws read_draws(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  auto malformed = [&](const std::string& why) {
    return Error(ErrorCode::MalformedDraws, path.string() + ": " + why);
  };
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw malformed("missing header");
  PosteriorDraws d;
  std::size_t n_params = 0, n_stats = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      ended = true;
      break;
    }
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw malformed("bad header line '" + line + "'");
    const auto key = line.substr(0, sp);
    const auto value = line.substr(sp + 1);
    if (key == "chains") {
      d.chains = static_cast<std::size_t>(parse_int(value, path.string()));
    } else if (key == "iterations") {
      d.iterations = static_cast<std::size_t>(parse_int(value, path.string()));
    } else if (key == "parameters") {
      n_params = static_cast<std::size_t>(parse_int(value, path.string()));
    } else if (key == "stats") {
      n_stats = static_cast<std::size_t>(parse_int(value, path.string()));
    } else if (key == "label") {
      d.labels.push_back(value);
    } else if (key == "meta") {
      const auto eq = value.find('=');
      if (eq == std::string::npos) throw malformed("bad metadata line");
      d.metadata[value.substr(0, eq)] = value.substr(eq + 1);
    } else {
      throw malformed("unknown header key " + key);
    }
  }
  if (!ended) throw malformed("header not terminated");
  if (n_params != d.labels.size() || n_stats != kStatColumns) {
    throw malformed("header dimensions disagree");
  }
  d.values.resize(d.chains * d.iterations * n_params);
  d.stats.resize(d.chains * d.iterations);
  std::vector<double> buf(n_params + n_stats);
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t i = 0; i < d.iterations; ++i) {
      in.read(reinterpret_cast<char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(double)));
      if (!in) throw malformed("truncated body");
      std::copy_n(buf.begin(), n_params, &d.values[(c * d.iterations + i) * n_params]);
      d.stats[c * d.iterations + i] = stats_from(buf.data() + n_params);
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) throw malformed("trailing bytes");
  return d;
}

void write_draws_csv(const PosteriorDraws& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << "chain,iteration";
  for (const auto& l : d.labels) out << ',' << l;
  out << ",divergent,treedepth,n_leapfrog,accept_stat,energy,step_size,lp\n";
  for (std::size_t c = 0; c < d.chains; ++c) {
    for (std::size_t i = 0; i < d.iterations; ++i) {
      out << c << ',' << i;
      for (std::size_t p = 0; p < d.n_params(); ++p) out << ',' << format_double(d.at(c, i, p));
      const auto& s = d.stats[c * d.iterations + i];
      out << ',' << (s.divergent ? 1 : 0) << ',' << s.treedepth << ',' << s.n_leapfrog << ','
          << format_double(s.accept_stat) << ',' << format_double(s.energy) << ','
          << format_double(s.step_size) << ',' << format_double(s.lp) << '\n';
    }
  }
}

}  // namespace thermopool

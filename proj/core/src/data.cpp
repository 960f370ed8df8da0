#include "flowstate/data.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"

namespace flowstate {

std::vector<double> TimeSeries::channel(long c) const {
  if (c < 0 || c >= channels()) throw std::out_of_range("TimeSeries::channel: bad index");
  std::vector<double> out(static_cast<std::size_t>(length()));
  for (long t = 0; t < length(); ++t) out[static_cast<std::size_t>(t)] = values.at(t, c);
  return out;
}

void TimeSeries::validate() const {
  if (length() < 1) throw std::invalid_argument("TimeSeries '" + id + "': empty");
  if (!(interval > 0.0)) throw std::invalid_argument("TimeSeries '" + id + "': interval <= 0");
  if (split_boundary < 0 || split_boundary > length()) {
    throw std::invalid_argument("TimeSeries '" + id + "': split boundary out of range");
  }
}

const TimeSeries* Dataset::find_series(const std::string& sid) const {
  for (const auto& s : series)
    if (s.id == sid) return &s;
  return nullptr;
}

const ManifestEntry* Dataset::find_manifest(const std::string& sid) const {
  for (const auto& m : manifest)
    if (m.id == sid) return &m;
  return nullptr;
}

CsvFormat csv_format_from_string(const std::string& s) {
  if (s == "csv_long") return CsvFormat::kLong;
  if (s == "csv_wide") return CsvFormat::kWide;
  throw std::invalid_argument("unknown csv format: '" + s + "' (csv_long|csv_wide)");
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s, const std::string& where, long line_no) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": non-numeric cell '" + s + "' at line " +
                                std::to_string(line_no));
  }
}

long parse_long(const std::string& s, const std::string& where, long line_no) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument(where + ": non-integer cell '" + s + "' at line " +
                                std::to_string(line_no));
  }
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<TimeSeries> load_long_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  long line_no = 0;

  std::getline(is, line);
  ++line_no;
  if (split_csv_line(line) != std::vector<std::string>{"id", "timestamp", "channel", "value"}) {
    throw std::invalid_argument(where + ": expected header id,timestamp,channel,value");
  }

  struct Cell {
    long ts, ch;
    double value;
    long line_no;
  };
  std::map<std::string, std::vector<Cell>> by_id;
  std::vector<std::string> id_order;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 4) {
      throw std::invalid_argument(where + ": expected 4 columns at line " + std::to_string(line_no));
    }
    if (!by_id.count(f[0])) id_order.push_back(f[0]);
    by_id[f[0]].push_back(Cell{parse_long(f[1], where, line_no), parse_long(f[2], where, line_no),
                               parse_double(f[3], where, line_no), line_no});
  }

  std::vector<TimeSeries> out;
  for (const auto& sid : id_order) {
    auto& cells = by_id[sid];
    long max_ts = -1, max_ch = -1;
    for (const auto& c : cells) {
      max_ts = std::max(max_ts, c.ts);
      max_ch = std::max(max_ch, c.ch);
      if (c.ts < 0 || c.ch < 0) {
        throw std::invalid_argument(where + ": negative timestamp/channel at line " +
                                    std::to_string(c.line_no));
      }
    }
    TimeSeries s;
    s.id = sid;
    s.values = Tensor(max_ts + 1, max_ch + 1, std::numeric_limits<double>::quiet_NaN());
    std::vector<std::vector<long>> seen(static_cast<std::size_t>(max_ts + 1),
                                        std::vector<long>(static_cast<std::size_t>(max_ch + 1), 0));
    for (const auto& c : cells) {
      if (seen[c.ts][c.ch]) {
        throw std::invalid_argument(where + ": duplicate timestamp " + std::to_string(c.ts) +
                                    " for id '" + sid + "' at line " + std::to_string(c.line_no));
      }
      seen[c.ts][c.ch] = 1;
      s.values.at(c.ts, c.ch) = c.value;
    }
    for (long t = 0; t <= max_ts; ++t) {
      for (long ch = 0; ch <= max_ch; ++ch) {
        if (!seen[t][ch]) {
          throw std::invalid_argument(where + ": missing cell (id '" + sid + "', timestamp " +
                                      std::to_string(t) + ", channel " + std::to_string(ch) + ")");
        }
      }
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw std::invalid_argument(where + ": no data rows");
  return out;
}

TimeSeries load_wide_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  const std::string where = path.string();
  std::string line;
  long line_no = 0;

  std::getline(is, line);
  ++line_no;
  const auto header = split_csv_line(line);
  if (header.size() < 2 || header[0] != "timestamp") {
    throw std::invalid_argument(where + ": expected header timestamp,ch0,...");
  }
  const long channels = static_cast<long>(header.size()) - 1;

  std::vector<double> data;
  long expected_ts = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (static_cast<long>(f.size()) != channels + 1) {
      throw std::invalid_argument(where + ": wrong column count at line " + std::to_string(line_no));
    }
    const long ts = parse_long(f[0], where, line_no);
    if (ts != expected_ts) {
      throw std::invalid_argument(where + ": " +
                                  (ts < expected_ts ? "duplicate" : "non-contiguous") +
                                  " timestamp at line " + std::to_string(line_no));
    }
    ++expected_ts;
    for (long c = 0; c < channels; ++c) {
      data.push_back(parse_double(f[static_cast<std::size_t>(c + 1)], where, line_no));
    }
  }
  if (expected_ts == 0) throw std::invalid_argument(where + ": no data rows");
  TimeSeries s;
  s.id = path.stem().string();
  s.values = Tensor(expected_ts, channels);
  s.values.v = std::move(data);
  return s;
}

}  // namespace

std::vector<TimeSeries> load_series_csv(const std::filesystem::path& path, CsvFormat format) {
  if (format == CsvFormat::kLong) return load_long_csv(path);
  std::vector<TimeSeries> out;
  out.push_back(load_wide_csv(path));
  return out;
}

void save_series_csv(const std::filesystem::path& path, const std::vector<TimeSeries>& series,
                     CsvFormat format) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  if (format == CsvFormat::kLong) {
    os << "id,timestamp,channel,value\n";
    for (const auto& s : series) {
      for (long t = 0; t < s.length(); ++t) {
        for (long c = 0; c < s.channels(); ++c) {
          os << s.id << ',' << t << ',' << c << ',' << format_value(s.values.at(t, c)) << '\n';
        }
      }
    }
  } else {
    if (series.size() != 1) {
      throw std::invalid_argument("save_series_csv: wide format holds exactly one series per file");
    }
    const auto& s = series[0];
    os << "timestamp";
    for (long c = 0; c < s.channels(); ++c) os << ",ch" << c;
    os << '\n';
    for (long t = 0; t < s.length(); ++t) {
      os << t;
      for (long c = 0; c < s.channels(); ++c) os << ',' << format_value(s.values.at(t, c));
      os << '\n';
    }
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  detail::json j;
  try {
    is >> j;
  } catch (const std::exception& e) {
    throw std::invalid_argument(path.string() + ": JSON parse error: " + e.what());
  }
  detail::reject_unknown_keys(j, {"tasks"}, path.string());
  std::vector<ManifestEntry> out;
  for (const auto& t : j.at("tasks")) {
    detail::reject_unknown_keys(t, {"id", "seasonality", "horizon", "split", "interval"},
                                path.string() + " task");
    ManifestEntry e;
    e.id = t.at("id").get<std::string>();
    e.seasonality = t.at("seasonality").get<double>();
    e.horizon = t.at("horizon").get<long>();
    if (t.contains("split")) e.split = t.at("split").get<long>();
    if (t.contains("interval")) e.interval = t.at("interval").get<double>();
    if (!(e.seasonality > 0.0)) {
      throw std::invalid_argument(path.string() + ": seasonality must be > 0 for '" + e.id + "'");
    }
    if (e.horizon < 1) {
      throw std::invalid_argument(path.string() + ": horizon must be >= 1 for '" + e.id + "'");
    }
    out.push_back(std::move(e));
  }
  return out;
}

void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  detail::json tasks = detail::json::array();
  for (const auto& e : entries) {
    detail::json t;
    t["id"] = e.id;
    t["seasonality"] = e.seasonality;
    t["horizon"] = e.horizon;
    if (e.split) t["split"] = *e.split;
    if (e.interval) t["interval"] = *e.interval;
    tasks.push_back(std::move(t));
  }
  detail::json j;
  j["tasks"] = std::move(tasks);
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << j.dump(2) << '\n';
}

Dataset load_dataset(const std::filesystem::path& data_path, CsvFormat format,
                     const std::filesystem::path& manifest_path) {
  Dataset ds;
  ds.series = load_series_csv(data_path, format);
  ds.manifest = load_manifest(manifest_path);
  for (const auto& m : ds.manifest) {
    auto it = std::find_if(ds.series.begin(), ds.series.end(),
                           [&](const TimeSeries& s) { return s.id == m.id; });
    if (it == ds.series.end()) {
      throw std::invalid_argument("manifest id '" + m.id + "' not present in data");
    }
    it->split_boundary = m.split.value_or(it->length() - m.horizon);
    if (m.interval) it->interval = *m.interval;
    it->validate();
    if (it->split_boundary < 1 || it->split_boundary + m.horizon > it->length()) {
      throw std::invalid_argument("manifest '" + m.id + "': split/horizon outside series");
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// synthetic generators
// ---------------------------------------------------------------------------

SyntheticKind synthetic_kind_from_string(const std::string& s) {
  if (s == "sinmix") return SyntheticKind::kSinmix;
  if (s == "gp_kernel") return SyntheticKind::kGpKernel;
  if (s == "trend_noise") return SyntheticKind::kTrendNoise;
  throw std::invalid_argument("unknown synthetic kind: '" + s + "'");
}

std::string to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::kSinmix: return "sinmix";
    case SyntheticKind::kGpKernel: return "gp_kernel";
    case SyntheticKind::kTrendNoise: return "trend_noise";
  }
  return "?";
}

namespace {

struct GpKernel {
  // k(d) = sum/product of an RBF term and an optional periodic term
  bool use_rbf = true, use_periodic = false, product = false;
  double rbf_scale = 10.0;
  double period = 24.0, per_scale = 1.0;

  double operator()(double d) const {
    const double rbf = std::exp(-0.5 * d * d / (rbf_scale * rbf_scale));
    const double sp = std::sin(std::numbers::pi * d / period);
    const double per = std::exp(-2.0 * sp * sp / (per_scale * per_scale));
    if (use_rbf && use_periodic) return product ? rbf * per : 0.5 * (rbf + per);
    return use_periodic ? per : rbf;
  }
};

GpKernel draw_gp_kernel(std::mt19937_64& rng, const GpKernelParams& p) {
  GpKernel k;
  std::uniform_int_distribution<int> structure(0, 3);
  const int s = structure(rng);
  k.use_rbf = (s != 1);
  k.use_periodic = (s >= 1);
  k.product = (s == 3);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  k.rbf_scale = p.rbf_scale_min * std::pow(p.rbf_scale_max / p.rbf_scale_min, u01(rng));
  k.period = p.period_min * std::pow(p.period_max / p.period_min, u01(rng));
  k.per_scale = 0.5 * std::pow(4.0, u01(rng));
  return k;
}

Tensor kernel_matrix(const GpKernel& k, long length, double nugget) {
  Tensor m(length, length);
  for (long i = 0; i < length; ++i) {
    for (long j = 0; j < length; ++j) {
      m.at(i, j) = k(static_cast<double>(i - j));
    }
    m.at(i, i) += nugget;
  }
  return m;
}

}  // namespace

Tensor gp_kernel_matrix(std::uint64_t kernel_seed, long length, const GpKernelParams& params) {
  std::mt19937_64 rng(kernel_seed);
  return kernel_matrix(draw_gp_kernel(rng, params), length, params.nugget);
}

TimeSeries generate_synthetic(SyntheticKind kind, std::uint64_t seed, long length,
                              const SyntheticParams& params) {
  if (length < 1) throw std::invalid_argument("generate_synthetic: length must be >= 1");
  TimeSeries s;
  s.id = to_string(kind) + "-" + std::to_string(seed);
  s.values = Tensor(length, 1);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  switch (kind) {
    case SyntheticKind::kSinmix: {
      const auto& sp = params.sinmix;
      struct Component {
        double amp, period, phase;
      };
      std::vector<Component> comps;
      comps.push_back({sp.base_amp_min + (sp.base_amp_max - sp.base_amp_min) * u01(rng),
                       sp.base_period, 2.0 * std::numbers::pi * u01(rng)});
      std::uniform_int_distribution<int> extra(0, sp.max_extra_components);
      const int n_extra = sp.max_extra_components > 0 ? extra(rng) : 0;
      for (int c = 0; c < n_extra; ++c) {
        const double period = sp.min_period * std::pow(sp.max_period / sp.min_period, u01(rng));
        comps.push_back({sp.extra_amp_min + (sp.extra_amp_max - sp.extra_amp_min) * u01(rng),
                         period, 2.0 * std::numbers::pi * u01(rng)});
      }
      const double offset = sp.offset_scale * (2.0 * u01(rng) - 1.0);
      for (long t = 0; t < length; ++t) {
        double v = offset;
        for (const auto& c : comps) {
          v += c.amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / c.period + c.phase);
        }
        if (sp.noise_sigma > 0.0) v += sp.noise_sigma * gauss(rng);
        s.values.at(t, 0) = v;
      }
      break;
    }
    case SyntheticKind::kGpKernel: {
      if (length > 4096) {
        throw std::invalid_argument("generate_synthetic: gp_kernel limited to length <= 4096");
      }
      const auto& gp = params.gp;
      GpKernel kern;
      if (gp.kernel_seed) {
        std::mt19937_64 krng(*gp.kernel_seed);
        kern = draw_gp_kernel(krng, gp);
      } else {
        kern = draw_gp_kernel(rng, gp);
      }
      const Tensor km = kernel_matrix(kern, length, gp.nugget);
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(
          km.v.data(), length, length);
      Eigen::LLT<Eigen::MatrixXd> llt(m);
      if (llt.info() != Eigen::Success) {
        throw std::runtime_error("generate_synthetic: Cholesky factorization failed");
      }
      Eigen::VectorXd z(length);
      for (long i = 0; i < length; ++i) z(i) = gauss(rng);
      const Eigen::VectorXd draw = llt.matrixL() * z;
      for (long t = 0; t < length; ++t) s.values.at(t, 0) = draw(t);
      break;
    }
    case SyntheticKind::kTrendNoise: {
      const auto& tp = params.trend;
      const double slope1 = tp.slope_max * (2.0 * u01(rng) - 1.0);
      const double slope2 = tp.slope_max * (2.0 * u01(rng) - 1.0);
      const double intercept = 2.0 * u01(rng) - 1.0;
      const long breakpoint = static_cast<long>(u01(rng) * static_cast<double>(length));
      const double sigma = tp.noise_sigma * (0.5 + 1.5 * u01(rng));
      double level = intercept;
      for (long t = 0; t < length; ++t) {
        level += (t < breakpoint ? slope1 : slope2);
        s.values.at(t, 0) = level + sigma * gauss(rng);
      }
      break;
    }
  }
  return s;
}

std::optional<double> estimate_seasonality(const std::vector<double>& x, long max_lag) {
  const long n = static_cast<long>(x.size());
  if (n < 8 || max_lag < 2) return std::nullopt;
  max_lag = std::min(max_lag, n / 2);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  if (var <= 0.0) return std::nullopt;

  double best_acf = -2.0;
  long best_lag = 0;
  for (long lag = 2; lag <= max_lag; ++lag) {
    double acc = 0.0;
    for (long t = lag; t < n; ++t) {
      acc += (x[static_cast<std::size_t>(t)] - mean) * (x[static_cast<std::size_t>(t - lag)] - mean);
    }
    const double acf = acc / var;
    if (acf > best_acf) {
      best_acf = acf;
      best_lag = lag;
    }
  }
  if (best_lag == 0 || best_acf <= 0.0) return std::nullopt;
  return static_cast<double>(best_lag);
}

}  // namespace flowstate

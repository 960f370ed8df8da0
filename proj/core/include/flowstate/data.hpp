#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowstate/tensor.hpp"

namespace flowstate {

/// Multichannel real-valued series with a uniform sampling interval.
struct TimeSeries {
  std::string id;
  Tensor values;          ///< length x channels
  double interval = 1.0;  ///< sampling period, arbitrary unit
  long split_boundary = 0;  ///< first test index; 0 = no split defined

  long length() const { return values.rows; }
  long channels() const { return values.cols; }
  std::vector<double> channel(long c) const;
  void validate() const;
};

struct ManifestEntry {
  std::string id;
  double seasonality = 1.0;
  long horizon = 1;
  std::optional<long> split;      ///< defaults to length - horizon
  std::optional<double> interval;
};

struct Dataset {
  std::vector<TimeSeries> series;
  std::vector<ManifestEntry> manifest;

  const TimeSeries* find_series(const std::string& id) const;
  const ManifestEntry* find_manifest(const std::string& id) const;
};

enum class CsvFormat : std::uint8_t { kLong, kWide };
CsvFormat csv_format_from_string(const std::string& s);

/// Long format: header `id,timestamp,channel,value`, dense integer timestamps
/// per id. Wide format: header `timestamp,ch0,ch1,...`, one series per file
/// (id = file stem). Parse failures carry line numbers.
std::vector<TimeSeries> load_series_csv(const std::filesystem::path& path, CsvFormat format);
void save_series_csv(const std::filesystem::path& path, const std::vector<TimeSeries>& series,
                     CsvFormat format);

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries);

/// Loads series and manifest together; manifest split/interval flow into the
/// returned series. Every manifest id must resolve.
Dataset load_dataset(const std::filesystem::path& data_path, CsvFormat format,
                     const std::filesystem::path& manifest_path);

// ---------------------------------------------------------------------------
// synthetic generators
// ---------------------------------------------------------------------------

enum class SyntheticKind : std::uint8_t { kSinmix, kGpKernel, kTrendNoise };
SyntheticKind synthetic_kind_from_string(const std::string& s);
std::string to_string(SyntheticKind k);

struct SinmixParams {
  double base_period = 24.0;  ///< dominant component; exact
  int max_extra_components = 3;
  double min_period = 6.0, max_period = 96.0;
  double base_amp_min = 0.8, base_amp_max = 1.2;
  double extra_amp_min = 0.2, extra_amp_max = 0.6;
  double noise_sigma = 0.1;
  double offset_scale = 1.0;
};

struct GpKernelParams {
  double rbf_scale_min = 5.0, rbf_scale_max = 50.0;
  double period_min = 8.0, period_max = 48.0;
  double nugget = 1e-8;
  /// When set, kernel structure/hyperparameters come from this seed while the
  /// sample draw uses the generator seed (used to sample one GP repeatedly).
  std::optional<std::uint64_t> kernel_seed;
};

struct TrendNoiseParams {
  double slope_max = 0.05;
  double noise_sigma = 0.2;
};

struct SyntheticParams {
  SinmixParams sinmix;
  GpKernelParams gp;
  TrendNoiseParams trend;
};

/// Deterministic per (kind, seed). gp_kernel refuses length > 4096 (dense
/// Cholesky bound).
TimeSeries generate_synthetic(SyntheticKind kind, std::uint64_t seed, long length,
                              const SyntheticParams& params = {});

/// Exact covariance matrix of the GP the generator would sample for this
/// kernel seed (oracle surface for sampling tests).
Tensor gp_kernel_matrix(std::uint64_t kernel_seed, long length, const GpKernelParams& params);

/// Autocorrelation-peak seasonality estimate. Helper only; the pipeline never
/// applies it implicitly.
std::optional<double> estimate_seasonality(const std::vector<double>& x, long max_lag);

}  // namespace flowstate

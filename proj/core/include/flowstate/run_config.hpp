#pragma once

#include <filesystem>
#include <string>

#include "flowstate/data.hpp"
#include "flowstate/model.hpp"
#include "flowstate/train.hpp"

namespace flowstate {

struct DataConfig {
  std::string source = "synthetic";  ///< "synthetic" | "csv"
  SyntheticKind kind = SyntheticKind::kSinmix;
  SyntheticParams synthetic;
  std::string path;
  std::string manifest;
  CsvFormat format = CsvFormat::kLong;

  void validate() const;
};

/// Merged training/run configuration. Parsing is strict: unknown keys are
/// rejected with field-level messages.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  void validate() const;
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig run_config_from_json_text(const std::string& text, const std::string& where);

/// Resolved config echo (also parseable by load_run_config).
std::string run_config_json(const RunConfig& cfg);

}  // namespace flowstate

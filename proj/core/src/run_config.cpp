#include "flowstate/run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "json_util.hpp"

namespace flowstate {

using detail::json;

void DataConfig::validate() const {
  if (source != "synthetic" && source != "csv") {
    throw std::invalid_argument("data.source must be 'synthetic' or 'csv'");
  }
  if (source == "csv" && path.empty()) {
    throw std::invalid_argument("data.path required for csv source");
  }
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.validate();
}

namespace {

TrainConfig train_from_json(const json& j) {
  static const std::set<std::string> allowed = {
      "steps",        "batch",        "learning_rate", "beta1",
      "beta2",        "weight_decay", "grad_clip",     "cosine_decay",
      "cpm_enabled",  "patch_mask_prob", "parallel_anchors", "seed",
      "checkpoint_every"};
  detail::reject_unknown_keys(j, allowed, "train config");
  TrainConfig t;
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("steps", t.steps);
  get("batch", t.batch);
  get("learning_rate", t.learning_rate);
  get("beta1", t.beta1);
  get("beta2", t.beta2);
  get("weight_decay", t.weight_decay);
  get("grad_clip", t.grad_clip);
  get("cosine_decay", t.cosine_decay);
  get("cpm_enabled", t.cpm_enabled);
  get("patch_mask_prob", t.patch_mask_prob);
  get("parallel_anchors", t.parallel_anchors);
  get("seed", t.seed);
  get("checkpoint_every", t.checkpoint_every);
  t.validate();
  return t;
}

json train_to_json(const TrainConfig& t) {
  json j;
  j["steps"] = t.steps;
  j["batch"] = t.batch;
  j["learning_rate"] = t.learning_rate;
  j["beta1"] = t.beta1;
  j["beta2"] = t.beta2;
  j["weight_decay"] = t.weight_decay;
  j["grad_clip"] = t.grad_clip;
  j["cosine_decay"] = t.cosine_decay;
  j["cpm_enabled"] = t.cpm_enabled;
  j["patch_mask_prob"] = t.patch_mask_prob;
  j["parallel_anchors"] = t.parallel_anchors;
  j["seed"] = t.seed;
  j["checkpoint_every"] = t.checkpoint_every;
  return j;
}

DataConfig data_from_json(const json& j) {
  static const std::set<std::string> allowed = {"source", "kind",     "sinmix", "gp",
                                                "trend",  "path",     "manifest", "format"};
  detail::reject_unknown_keys(j, allowed, "data config");
  DataConfig d;
  if (j.contains("source")) d.source = j.at("source").get<std::string>();
  if (j.contains("kind")) d.kind = synthetic_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("path")) d.path = j.at("path").get<std::string>();
  if (j.contains("manifest")) d.manifest = j.at("manifest").get<std::string>();
  if (j.contains("format")) d.format = csv_format_from_string(j.at("format").get<std::string>());
  if (j.contains("sinmix")) {
    const json& s = j.at("sinmix");
    detail::reject_unknown_keys(s,
                                {"base_period", "max_extra_components", "min_period", "max_period",
                                 "base_amp_min", "base_amp_max", "extra_amp_min", "extra_amp_max",
                                 "noise_sigma", "offset_scale"},
                                "data.sinmix");
    auto& p = d.synthetic.sinmix;
    auto get = [&](const char* key, auto& out) {
      if (s.contains(key)) out = s.at(key).get<std::decay_t<decltype(out)>>();
    };
    get("base_period", p.base_period);
    get("max_extra_components", p.max_extra_components);
    get("min_period", p.min_period);
    get("max_period", p.max_period);
    get("base_amp_min", p.base_amp_min);
    get("base_amp_max", p.base_amp_max);
    get("extra_amp_min", p.extra_amp_min);
    get("extra_amp_max", p.extra_amp_max);
    get("noise_sigma", p.noise_sigma);
    get("offset_scale", p.offset_scale);
  }
  if (j.contains("gp")) {
    const json& s = j.at("gp");
    detail::reject_unknown_keys(
        s, {"rbf_scale_min", "rbf_scale_max", "period_min", "period_max", "nugget"}, "data.gp");
    auto& p = d.synthetic.gp;
    auto get = [&](const char* key, auto& out) {
      if (s.contains(key)) out = s.at(key).get<std::decay_t<decltype(out)>>();
    };
    get("rbf_scale_min", p.rbf_scale_min);
    get("rbf_scale_max", p.rbf_scale_max);
    get("period_min", p.period_min);
    get("period_max", p.period_max);
    get("nugget", p.nugget);
  }
  if (j.contains("trend")) {
    const json& s = j.at("trend");
    detail::reject_unknown_keys(s, {"slope_max", "noise_sigma"}, "data.trend");
    auto& p = d.synthetic.trend;
    if (s.contains("slope_max")) p.slope_max = s.at("slope_max").get<double>();
    if (s.contains("noise_sigma")) p.noise_sigma = s.at("noise_sigma").get<double>();
  }
  d.validate();
  return d;
}

json data_to_json(const DataConfig& d) {
  json j;
  j["source"] = d.source;
  if (d.source == "synthetic") {
    j["kind"] = to_string(d.kind);
    const auto& p = d.synthetic.sinmix;
    j["sinmix"] = {{"base_period", p.base_period},
                   {"max_extra_components", p.max_extra_components},
                   {"min_period", p.min_period},
                   {"max_period", p.max_period},
                   {"base_amp_min", p.base_amp_min},
                   {"base_amp_max", p.base_amp_max},
                   {"extra_amp_min", p.extra_amp_min},
                   {"extra_amp_max", p.extra_amp_max},
                   {"noise_sigma", p.noise_sigma},
                   {"offset_scale", p.offset_scale}};
    const auto& g = d.synthetic.gp;
    j["gp"] = {{"rbf_scale_min", g.rbf_scale_min},
               {"rbf_scale_max", g.rbf_scale_max},
               {"period_min", g.period_min},
               {"period_max", g.period_max},
               {"nugget", g.nugget}};
    const auto& t = d.synthetic.trend;
    j["trend"] = {{"slope_max", t.slope_max}, {"noise_sigma", t.noise_sigma}};
  } else {
    j["path"] = d.path;
    if (!d.manifest.empty()) j["manifest"] = d.manifest;
    j["format"] = d.format == CsvFormat::kLong ? "csv_long" : "csv_wide";
  }
  return j;
}

}  // namespace

RunConfig run_config_from_json_text(const std::string& text, const std::string& where) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw std::invalid_argument(where + ": JSON parse error: " + e.what());
  }
  detail::reject_unknown_keys(j, {"model", "train", "data"}, where);
  RunConfig cfg;
  if (j.contains("model")) cfg.model = detail::model_config_from_json(j.at("model"));
  if (j.contains("train")) cfg.train = train_from_json(j.at("train"));
  if (j.contains("data")) cfg.data = data_from_json(j.at("data"));
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return run_config_from_json_text(text, path.string());
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["model"] = detail::model_config_to_json(cfg.model);
  j["train"] = train_to_json(cfg.train);
  j["data"] = data_to_json(cfg.data);
  return j.dump(2);
}

}  // namespace flowstate

#include "flowstate/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json_util.hpp"

namespace flowstate {

namespace detail {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
    }
  }
}

json model_config_to_json(const ModelConfig& cfg) {
  json j;
  j["num_layers"] = cfg.encoder.num_layers;
  j["state_size"] = cfg.encoder.state_size;
  j["hidden_size"] = cfg.encoder.hidden_size;
  j["input_channels"] = cfg.encoder.input_channels;
  j["context_length"] = cfg.encoder.context_length;
  j["min_context"] = cfg.encoder.min_context;
  j["basis"] = to_string(cfg.basis_family);
  j["basis_n"] = cfg.basis_n;
  j["quantile_levels"] = cfg.quantile_levels;
  j["norm_variance_mode"] = to_string(cfg.norm_variance_mode);
  j["t_base"] = cfg.t_base;
  j["base_seasonality"] = cfg.base_seasonality;
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  static const std::set<std::string> allowed = {
      "num_layers",     "state_size",      "hidden_size", "input_channels",
      "context_length", "min_context",     "basis",       "basis_n",
      "quantile_levels", "norm_variance_mode", "t_base",  "base_seasonality"};
  reject_unknown_keys(j, allowed, "model config");
  ModelConfig cfg;
  auto get = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  get("num_layers", cfg.encoder.num_layers);
  get("state_size", cfg.encoder.state_size);
  get("hidden_size", cfg.encoder.hidden_size);
  get("input_channels", cfg.encoder.input_channels);
  get("context_length", cfg.encoder.context_length);
  get("min_context", cfg.encoder.min_context);
  if (j.contains("basis")) cfg.basis_family = basis_family_from_string(j.at("basis").get<std::string>());
  get("basis_n", cfg.basis_n);
  get("quantile_levels", cfg.quantile_levels);
  if (j.contains("norm_variance_mode")) {
    cfg.norm_variance_mode = variance_mode_from_string(j.at("norm_variance_mode").get<std::string>());
  }
  get("t_base", cfg.t_base);
  get("base_seasonality", cfg.base_seasonality);
  cfg.validate();
  return cfg;
}

}  // namespace detail

namespace {

constexpr char kMagic[8] = {'F', 'S', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ostream& os, std::uint64_t x) {
  char buf[8];
  std::memcpy(buf, &x, 8);
  os.write(buf, 8);
}

std::uint64_t read_u64(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  std::uint64_t x;
  std::memcpy(&x, buf, 8);
  return x;
}

}  // namespace

StackParams make_empty_stack(const ModelConfig& cfg) {
  const auto& e = cfg.encoder;
  StackParams p;
  p.embed = Tensor(e.hidden_size, e.input_channels);
  for (long l = 0; l < e.num_layers; ++l) {
    S5LayerParams lp;
    lp.lambda_re_raw = Tensor(e.state_size, 1);
    lp.lambda_im = Tensor(e.state_size, 1);
    lp.b_re = Tensor(e.state_size, e.hidden_size);
    lp.b_im = Tensor(e.state_size, e.hidden_size);
    lp.c_re = Tensor(e.hidden_size, e.state_size);
    lp.c_im = Tensor(e.hidden_size, e.state_size);
    lp.d = Tensor(e.hidden_size, 1);
    lp.log_delta = Tensor(e.state_size, 1);
    lp.mlp_w1 = Tensor(e.hidden_size, e.hidden_size);
    lp.mlp_b1 = Tensor(e.hidden_size, 1);
    lp.mlp_w2 = Tensor(e.hidden_size, e.hidden_size);
    lp.mlp_b2 = Tensor(e.hidden_size, 1);
    p.layers.push_back(std::move(lp));
  }
  p.w_out = Tensor(cfg.quantiles() * cfg.basis_n, e.hidden_size);
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.config.validate();
  auto views = named_tensors(const_cast<StackParams&>(ckpt.params));

  detail::json dir = detail::json::array();
  std::vector<const Tensor*> payload;
  for (const auto& nt : views) {
    dir.push_back({{"name", nt.name}, {"rows", nt.tensor->rows}, {"cols", nt.tensor->cols}});
    payload.push_back(nt.tensor);
  }
  detail::json header;
  header["format_version"] = 1;
  header["model"] = detail::model_config_to_json(ckpt.config);
  if (ckpt.train_state) {
    header["train_state"] = {{"step", ckpt.train_state->step}};
    if (ckpt.train_state->adam_m.size() != views.size() ||
        ckpt.train_state->adam_v.size() != views.size()) {
      throw std::invalid_argument("save_checkpoint: optimizer state misaligned");
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
      const Tensor& m = ckpt.train_state->adam_m[i];
      dir.push_back({{"name", "opt.m." + views[i].name}, {"rows", m.rows}, {"cols", m.cols}});
      payload.push_back(&m);
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
      const Tensor& v = ckpt.train_state->adam_v[i];
      dir.push_back({{"name", "opt.v." + views[i].name}, {"rows", v.rows}, {"cols", v.cols}});
      payload.push_back(&v);
    }
  } else {
    header["train_state"] = nullptr;
  }
  header["tensors"] = std::move(dir);

  const std::string hs = header.dump();
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + tmp.string());
    os.write(kMagic, 8);
    write_u64(os, hs.size());
    os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const Tensor* t : payload) {
      os.write(reinterpret_cast<const char*>(t->v.data()),
               static_cast<std::streamsize>(t->v.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  }
  const std::uint64_t hlen = read_u64(is);
  std::string hs(hlen, '\0');
  is.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!is) throw std::runtime_error("load_checkpoint: truncated header");
  const detail::json header = detail::json::parse(hs);
  if (header.at("format_version").get<int>() != 1) {
    throw std::runtime_error("load_checkpoint: unsupported format version");
  }

  Checkpoint ckpt;
  ckpt.config = detail::model_config_from_json(header.at("model"));
  ckpt.params = make_empty_stack(ckpt.config);
  auto views = named_tensors(ckpt.params);

  const bool has_train = !header.at("train_state").is_null();
  TrainState ts;
  if (has_train) {
    ts.step = header.at("train_state").at("step").get<long>();
    ts.adam_m.resize(views.size());
    ts.adam_v.resize(views.size());
  }

  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const long rows = entry.at("rows").get<long>();
    const long cols = entry.at("cols").get<long>();
    Tensor buf(rows, cols);
    is.read(reinterpret_cast<char*>(buf.v.data()),
            static_cast<std::streamsize>(buf.v.size() * sizeof(double)));
    if (!is) throw std::runtime_error("load_checkpoint: truncated payload at " + name);

    Tensor* dst = nullptr;
    for (std::size_t i = 0; i < views.size(); ++i) {
      if (name == views[i].name) {
        dst = views[i].tensor;
        break;
      }
      if (has_train && name == "opt.m." + views[i].name) {
        dst = &ts.adam_m[i];
        break;
      }
      if (has_train && name == "opt.v." + views[i].name) {
        dst = &ts.adam_v[i];
        break;
      }
    }
    if (dst == nullptr) throw std::runtime_error("load_checkpoint: unexpected tensor " + name);
    if (dst->size() != 0 && !dst->same_shape(buf)) {
      throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
    }
    *dst = std::move(buf);
  }
  if (has_train) ckpt.train_state = std::move(ts);
  return ckpt;
}

}  // namespace flowstate

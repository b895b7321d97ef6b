#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "pneumo/errors.hpp"
#include "pneumo/model.hpp"
#include "pneumo/rng.hpp"
#include "pneumo/train.hpp"

namespace pneumo {

using json = nlohmann::json;

struct DataGenConfig {
  std::size_t n = 630;
  double pos_ratio = 401.0 / 630.0;
  double separation = 4.0;
  std::size_t patients = 126;
  double noise = 0.1;
};

struct CvRunConfig {
  std::size_t folds = 5;
  bool parallel = false;
};

/// Every knob of an experiment in one structured file. A single master seed
/// feeds derived streams for model init, training and data generation.
struct ExperimentConfig {
  std::uint64_t seed = 7;
  ModelConfig model;
  TrainConfig train;
  DataGenConfig data;
  CvRunConfig cv;

  /// Propagates the master seed into the component seeds.
  void finalize() {
    model.seed = derive_seed(seed, 501);
    train.seed = derive_seed(seed, 502);
  }
};

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline void check_keys(const json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
  if (!j.is_object()) throw ConfigError("config: '" + context + "' must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("config: unknown key '" + item.key() + "' in " + context);
  }
}

template <typename T>
void fetch(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline const char* prompt_name(PromptSource p) {
  switch (p) {
    case PromptSource::kNone: return "none";
    case PromptSource::kFixed: return "fixed";
    case PromptSource::kConditional: return "conditional";
    case PromptSource::kEngine: return "engine";
  }
  return "engine";
}

inline PromptSource prompt_from(const std::string& s) {
  if (s == "none") return PromptSource::kNone;
  if (s == "fixed") return PromptSource::kFixed;
  if (s == "conditional") return PromptSource::kConditional;
  if (s == "engine") return PromptSource::kEngine;
  throw ConfigError("config: unknown prompt source '" + s + "'");
}

inline const char* pooling_name(Pooling p) {
  switch (p) {
    case Pooling::kDiagnosisMean: return "diagnosis_mean";
    case Pooling::kSourceMean: return "source_mean";
    case Pooling::kLastToken: return "last_token";
  }
  return "diagnosis_mean";
}

inline Pooling pooling_from(const std::string& s) {
  if (s == "diagnosis_mean") return Pooling::kDiagnosisMean;
  if (s == "source_mean") return Pooling::kSourceMean;
  if (s == "last_token") return Pooling::kLastToken;
  throw ConfigError("config: unknown pooling '" + s + "'");
}

inline const char* axis_name(SoftmaxAxis a) {
  return a == SoftmaxAxis::kColumn ? "column" : "row";
}

inline SoftmaxAxis axis_from(const std::string& s) {
  if (s == "column") return SoftmaxAxis::kColumn;
  if (s == "row") return SoftmaxAxis::kRow;
  throw ConfigError("config: unknown engine_axis '" + s + "'");
}

inline const char* scale_name(AttnScale a) {
  return a == AttnScale::kHeadDim ? "head_dim" : "token_count";
}

inline AttnScale scale_from(const std::string& s) {
  if (s == "head_dim") return AttnScale::kHeadDim;
  if (s == "token_count") return AttnScale::kTokenCount;
  throw ConfigError("config: unknown attn_scale '" + s + "'");
}

inline const char* schedule_name(LrSchedule s) {
  return s == LrSchedule::kPerEpoch ? "per_epoch" : "per_step";
}

inline LrSchedule schedule_from(const std::string& s) {
  if (s == "per_epoch") return LrSchedule::kPerEpoch;
  if (s == "per_step") return LrSchedule::kPerStep;
  throw ConfigError("config: unknown schedule '" + s + "'");
}

}  // namespace detail

inline json model_config_to_json(const ModelConfig& m) {
  return json{
      {"encoder",
       {{"input_dim", m.encoder.input_dim},
        {"token_dim", m.encoder.token_dim},
        {"layers", m.encoder.layers},
        {"tap_every", m.encoder.tap_every},
        {"inner_tokens", m.encoder.inner_tokens}}},
      {"stack",
       {{"layers", m.stack.layers},
        {"heads", m.stack.heads},
        {"width", m.stack.width},
        {"adapter_dim", m.stack.adapter_dim}}},
      {"diag_tokens", m.diag_tokens},
      {"prompt", detail::prompt_name(m.prompt)},
      {"engine_axis", detail::axis_name(m.engine_axis)},
      {"adapters", m.adapters},
      {"emitter_mask", m.emitter_mask},
      {"neck_hidden", m.neck_hidden},
      {"pooling", detail::pooling_name(m.pooling)},
      {"attn_scale", detail::scale_name(m.attn_scale)},
      {"ln_eps", m.ln_eps},
      {"seed", m.seed}};
}

inline ModelConfig model_config_from_json(const json& j) {
  detail::check_keys(j,
                     {"encoder", "stack", "diag_tokens", "prompt", "engine_axis",
                      "adapters", "emitter_mask", "neck_hidden", "pooling",
                      "attn_scale", "ln_eps", "seed"},
                     "model");
  ModelConfig m;
  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    detail::check_keys(e, {"input_dim", "token_dim", "layers", "tap_every", "inner_tokens"},
                       "model.encoder");
    detail::fetch(e, "input_dim", m.encoder.input_dim);
    detail::fetch(e, "token_dim", m.encoder.token_dim);
    detail::fetch(e, "layers", m.encoder.layers);
    detail::fetch(e, "tap_every", m.encoder.tap_every);
    detail::fetch(e, "inner_tokens", m.encoder.inner_tokens);
  }
  if (j.contains("stack")) {
    const json& s = j.at("stack");
    detail::check_keys(s, {"layers", "heads", "width", "adapter_dim"}, "model.stack");
    detail::fetch(s, "layers", m.stack.layers);
    detail::fetch(s, "heads", m.stack.heads);
    detail::fetch(s, "width", m.stack.width);
    detail::fetch(s, "adapter_dim", m.stack.adapter_dim);
  }
  detail::fetch(j, "diag_tokens", m.diag_tokens);
  if (j.contains("prompt")) m.prompt = detail::prompt_from(j.at("prompt").get<std::string>());
  if (j.contains("engine_axis"))
    m.engine_axis = detail::axis_from(j.at("engine_axis").get<std::string>());
  detail::fetch(j, "adapters", m.adapters);
  detail::fetch(j, "emitter_mask", m.emitter_mask);
  detail::fetch(j, "neck_hidden", m.neck_hidden);
  if (j.contains("pooling"))
    m.pooling = detail::pooling_from(j.at("pooling").get<std::string>());
  if (j.contains("attn_scale"))
    m.attn_scale = detail::scale_from(j.at("attn_scale").get<std::string>());
  detail::fetch(j, "ln_eps", m.ln_eps);
  detail::fetch(j, "seed", m.seed);
  return m;
}

inline json experiment_to_json(const ExperimentConfig& c) {
  json m = model_config_to_json(c.model);
  m.erase("seed");  // component seeds derive from the master seed
  return json{{"seed", c.seed},
              {"model", m},
              {"train",
               {{"batch_size", c.train.batch_size},
                {"lr", c.train.base_lr},
                {"warmup_epochs", c.train.warmup_epochs},
                {"weight_decay", c.train.weight_decay},
                {"epochs", c.train.epochs},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"eps", c.train.eps},
                {"schedule", detail::schedule_name(c.train.schedule)}}},
              {"data",
               {{"n", c.data.n},
                {"pos_ratio", c.data.pos_ratio},
                {"separation", c.data.separation},
                {"patients", c.data.patients},
                {"noise", c.data.noise}}},
              {"cv", {{"folds", c.cv.folds}, {"parallel", c.cv.parallel}}}};
}

inline ExperimentConfig experiment_from_json(const json& j) {
  detail::check_keys(j, {"seed", "model", "train", "data", "cv"}, "experiment");
  ExperimentConfig c;
  detail::fetch(j, "seed", c.seed);
  if (j.contains("model")) {
    json m = j.at("model");
    if (m.contains("seed"))
      throw ConfigError("config: model.seed is derived from the master seed");
    c.model = model_config_from_json(m);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    detail::check_keys(t,
                       {"batch_size", "lr", "warmup_epochs", "weight_decay", "epochs",
                        "beta1", "beta2", "eps", "schedule"},
                       "train");
    detail::fetch(t, "batch_size", c.train.batch_size);
    detail::fetch(t, "lr", c.train.base_lr);
    detail::fetch(t, "warmup_epochs", c.train.warmup_epochs);
    detail::fetch(t, "weight_decay", c.train.weight_decay);
    detail::fetch(t, "epochs", c.train.epochs);
    detail::fetch(t, "beta1", c.train.beta1);
    detail::fetch(t, "beta2", c.train.beta2);
    detail::fetch(t, "eps", c.train.eps);
    if (t.contains("schedule"))
      c.train.schedule = detail::schedule_from(t.at("schedule").get<std::string>());
  }
  if (j.contains("data")) {
    const json& d = j.at("data");
    detail::check_keys(d, {"n", "pos_ratio", "separation", "patients", "noise"}, "data");
    detail::fetch(d, "n", c.data.n);
    detail::fetch(d, "pos_ratio", c.data.pos_ratio);
    detail::fetch(d, "separation", c.data.separation);
    detail::fetch(d, "patients", c.data.patients);
    detail::fetch(d, "noise", c.data.noise);
  }
  if (j.contains("cv")) {
    const json& v = j.at("cv");
    detail::check_keys(v, {"folds", "parallel"}, "cv");
    detail::fetch(v, "folds", c.cv.folds);
    detail::fetch(v, "parallel", c.cv.parallel);
  }
  c.finalize();
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return experiment_from_json(j);
}

/// Hash of the canonical serialization; stamped into checkpoints and reports.
inline std::uint64_t experiment_hash(const ExperimentConfig& c) {
  return fnv1a64(experiment_to_json(c).dump());
}

inline std::uint64_t model_config_hash(const ModelConfig& m) {
  return fnv1a64(model_config_to_json(m).dump());
}

}  // namespace pneumo

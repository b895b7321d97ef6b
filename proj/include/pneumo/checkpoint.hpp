#pragma once

#include <cstring>
#include <string>

#include "pneumo/binio.hpp"
#include "pneumo/config.hpp"
#include "pneumo/errors.hpp"
#include "pneumo/model.hpp"

namespace pneumo {

inline constexpr char kCheckpointMagic[4] = {'P', 'N', 'L', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Versioned container: magic, version, config hash, config block, then every
/// Param in declaration order as shape-headed little-endian doubles.
inline void save_checkpoint(PneumoModel& model, const std::string& path) {
  const std::string config_block = model_config_to_json(model.config).dump();
  ByteWriter w;
  w.put_raw(kCheckpointMagic, 4);
  w.put_u32(kCheckpointVersion);
  w.put_u64(fnv1a64(config_block));
  w.put_string(config_block);
  std::vector<NamedParam> params = model.params();
  w.put_u64(params.size());
  for (NamedParam& np : params) {
    w.put_string(np.name);
    w.put_u64(np.param->value.rows());
    w.put_u64(np.param->value.cols());
    for (std::size_t i = 0; i < np.param->value.size(); ++i)
      w.put_f64(np.param->value.data()[i]);
  }
  w.write_file(path);
}

namespace detail {
inline ByteReader open_checkpoint(const std::string& path, std::string& config_block) {
  ByteReader r = ByteReader::from_file(path);
  char magic[4];
  r.get_raw(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw IoError("'" + path + "' is not a checkpoint file (bad magic)");
  const std::uint32_t version = r.get_u32();
  if (version != kCheckpointVersion)
    throw IoError("checkpoint format version " + std::to_string(version) +
                  " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  const std::uint64_t stored_hash = r.get_u64();
  config_block = r.get_string();
  if (stored_hash != fnv1a64(config_block))
    throw IoError("checkpoint config hash does not match its config block");
  return r;
}

inline void read_params_into(ByteReader& r, PneumoModel& model,
                             const std::string& path) {
  std::vector<NamedParam> params = model.params();
  const std::uint64_t count = r.get_u64();
  if (count != params.size())
    throw IoError("checkpoint '" + path + "' holds " + std::to_string(count) +
                  " params, model expects " + std::to_string(params.size()));
  for (NamedParam& np : params) {
    const std::string name = r.get_string();
    if (name != np.name)
      throw IoError("checkpoint param '" + name + "' where '" + np.name +
                    "' was expected");
    const std::uint64_t rows = r.get_u64();
    const std::uint64_t cols = r.get_u64();
    if (rows != np.param->value.rows() || cols != np.param->value.cols())
      throw IoError("checkpoint param '" + name + "' has shape " +
                    std::to_string(rows) + "x" + std::to_string(cols) +
                    ", expected " + np.param->value.shape_str());
    for (std::size_t i = 0; i < np.param->value.size(); ++i)
      np.param->value.data()[i] = r.get_f64();
  }
  if (!r.exhausted()) throw IoError("checkpoint file has trailing bytes");
}
}  // namespace detail

/// Restores parameter values into an existing model. Rejects a checkpoint
/// whose config hash differs from the target model's config.
inline void load_checkpoint_into(PneumoModel& model, const std::string& path) {
  std::string config_block;
  ByteReader r = detail::open_checkpoint(path, config_block);
  const std::string expected = model_config_to_json(model.config).dump();
  if (fnv1a64(config_block) != fnv1a64(expected))
    throw IoError("checkpoint config hash " + hash_hex(fnv1a64(config_block)) +
                  " does not match model config " + hash_hex(fnv1a64(expected)));
  detail::read_params_into(r, model, path);
}

/// Rebuilds a model from the checkpoint's own config block.
inline PneumoModel load_checkpoint_model(const std::string& path) {
  std::string config_block;
  ByteReader r = detail::open_checkpoint(path, config_block);
  json j;
  try {
    j = json::parse(config_block);
  } catch (const json::exception& e) {
    throw IoError("checkpoint config block is not valid JSON: " + std::string(e.what()));
  }
  PneumoModel model = PneumoModel::init(model_config_from_json(j));
  detail::read_params_into(r, model, path);
  return model;
}

}  // namespace pneumo

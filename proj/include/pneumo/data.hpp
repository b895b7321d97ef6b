#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "pneumo/binio.hpp"
#include "pneumo/errors.hpp"
#include "pneumo/matrix.hpp"
#include "pneumo/rng.hpp"

namespace pneumo {

struct Sample {
  std::string patient_id;
  std::vector<double> features;
  int label = 0;  // 1 = positive case
};

struct DatasetMeta {
  std::uint64_t seed = 0;
  double separation = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::size_t feature_dim = 0;
  DatasetMeta meta;

  std::size_t size() const { return samples.size(); }
};

struct LatentSample {
  double z0 = 0.0, z1 = 0.0;
  int label = 0;
};

/// The 2-D latent mixture behind the synthetic cohort: class means at
/// (-sep/2, 0) and (+sep/2, 0), unit covariance. Exposed so tests can probe
/// separability in latent space directly.
inline std::vector<LatentSample> synthetic_latents(std::size_t n, double pos_ratio,
                                                   double separation,
                                                   std::uint64_t seed) {
  if (!(pos_ratio > 0.0 && pos_ratio < 1.0))
    throw ConfigError("synthetic data: pos_ratio must lie in (0, 1)");
  if (separation < 0.0) throw ConfigError("synthetic data: separation must be >= 0");
  if (n < 2) throw ConfigError("synthetic data: need at least 2 samples");
  const std::size_t positives =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * pos_ratio));
  if (positives == 0 || positives >= n)
    throw ConfigError("synthetic data: class counts degenerate at n=" +
                      std::to_string(n) + ", pos_ratio=" + std::to_string(pos_ratio));
  Rng rng(derive_seed(seed, 11));
  std::vector<LatentSample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = i < positives ? 1 : 0;
    const double mean0 = (label ? 0.5 : -0.5) * separation;
    out[i] = LatentSample{mean0 + rng.normal(), rng.normal(), label};
  }
  return out;
}

/// Synthetic cohort with the clinical dataset's shape: exact positive count
/// round(n * pos_ratio), single-class patients filled round-robin, latents
/// lifted to feature_dim by a seeded linear map plus small isotropic noise.
inline Dataset generate_synthetic(std::size_t n, double pos_ratio, double separation,
                                  std::size_t patients, std::size_t feature_dim,
                                  std::uint64_t seed, double noise_sigma = 0.1) {
  if (feature_dim == 0) throw ConfigError("synthetic data: feature_dim must be >= 1");
  if (patients < 2 || patients > n)
    throw ConfigError("synthetic data: patients must lie in [2, n]");
  std::vector<LatentSample> latents = synthetic_latents(n, pos_ratio, separation, seed);
  std::size_t positives = 0;
  for (const LatentSample& l : latents) positives += l.label;
  std::size_t pos_patients =
      static_cast<std::size_t>(std::llround(static_cast<double>(patients) * pos_ratio));
  if (pos_patients == 0) pos_patients = 1;
  if (pos_patients >= patients) pos_patients = patients - 1;

  Matrix lift = [&] {
    Rng rng(derive_seed(seed, 12));
    Matrix w(2, feature_dim);
    for (std::size_t i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-1.0, 1.0);
    return w;
  }();

  Rng noise_rng(derive_seed(seed, 13));
  Dataset ds;
  ds.feature_dim = feature_dim;
  ds.meta = DatasetMeta{seed, separation, positives, n - positives};
  ds.samples.resize(n);
  std::size_t pos_seen = 0, neg_seen = 0;
  char idbuf[16];
  for (std::size_t i = 0; i < n; ++i) {
    const LatentSample& l = latents[i];
    Sample& s = ds.samples[i];
    s.label = l.label;
    std::size_t patient;
    if (l.label) {
      patient = pos_seen++ % pos_patients;
    } else {
      patient = pos_patients + neg_seen++ % (patients - pos_patients);
    }
    std::snprintf(idbuf, sizeof(idbuf), "p%05zu", patient);
    s.patient_id = idbuf;
    s.features.resize(feature_dim);
    for (std::size_t j = 0; j < feature_dim; ++j)
      s.features[j] = l.z0 * lift(0, j) + l.z1 * lift(1, j) +
                      noise_sigma * noise_rng.normal();
  }
  // Seeded shuffle so batch order carries no class structure.
  Rng order_rng(derive_seed(seed, 14));
  order_rng.shuffle(ds.samples);
  return ds;
}

inline constexpr char kDatasetMagic[4] = {'P', 'N', 'D', 'S'};
inline constexpr std::uint8_t kDatasetVersion = '1';

inline void save_dataset(const Dataset& ds, const std::string& path) {
  ByteWriter w;
  w.put_raw(kDatasetMagic, 4);
  w.put_u8(kDatasetVersion);
  w.put_u64(ds.samples.size());
  w.put_u64(ds.feature_dim);
  w.put_u64(ds.meta.positives);
  w.put_u64(ds.meta.negatives);
  w.put_u64(ds.meta.seed);
  w.put_f64(ds.meta.separation);
  for (const Sample& s : ds.samples) {
    w.put_string(s.patient_id);
    w.put_u8(static_cast<std::uint8_t>(s.label));
    for (double f : s.features) w.put_f64(f);
  }
  w.write_file(path);
}

inline Dataset load_dataset(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  char magic[4];
  r.get_raw(magic, 4);
  if (std::memcmp(magic, kDatasetMagic, 4) != 0)
    throw IoError("'" + path + "' is not a dataset file (bad magic)");
  const std::uint8_t version = r.get_u8();
  if (version != kDatasetVersion)
    throw IoError("unsupported dataset format version '" +
                  std::string(1, static_cast<char>(version)) + "'");
  Dataset ds;
  const std::uint64_t count = r.get_u64();
  ds.feature_dim = r.get_u64();
  ds.meta.positives = r.get_u64();
  ds.meta.negatives = r.get_u64();
  ds.meta.seed = r.get_u64();
  ds.meta.separation = r.get_f64();
  if (ds.meta.positives + ds.meta.negatives != count)
    throw IoError("dataset header: class counts do not sum to sample count");
  ds.samples.resize(count);
  std::size_t pos_seen = 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    Sample& s = ds.samples[i];
    s.patient_id = r.get_string();
    if (s.patient_id.empty()) throw IoError("dataset record " + std::to_string(i) +
                                            ": empty patient id");
    const std::uint8_t label = r.get_u8();
    if (label > 1) throw IoError("dataset record " + std::to_string(i) +
                                 ": label byte must be 0 or 1");
    s.label = label;
    pos_seen += label;
    s.features.resize(ds.feature_dim);
    for (std::size_t j = 0; j < ds.feature_dim; ++j) s.features[j] = r.get_f64();
  }
  if (!r.exhausted()) throw IoError("dataset file has trailing bytes");
  if (pos_seen != ds.meta.positives)
    throw IoError("dataset header positive count does not match records");
  return ds;
}

/// Plain-text export: patient_id,label,f0..fk
inline void export_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << "patient_id,label";
  for (std::size_t j = 0; j < ds.feature_dim; ++j) out << ",f" << j;
  out << "\n";
  char buf[64];
  for (const Sample& s : ds.samples) {
    out << s.patient_id << "," << s.label;
    for (double f : s.features) {
      std::snprintf(buf, sizeof(buf), ",%.17g", f);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace pneumo

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pneumo/data.hpp"
#include "pneumo/errors.hpp"
#include "pneumo/rng.hpp"

namespace pneumo {

struct Fold {
  std::vector<std::size_t> train_ids;
  std::vector<std::size_t> test_ids;
};

/// Patient-grouped, class-stratified k-fold split. Patients are shuffled with
/// the seed, ordered largest-first within their class, and greedily assigned
/// to the currently lightest fold for that class, so no patient straddles
/// train/test and each fold's label ratio tracks the global one.
inline std::vector<Fold> kfold_split(const Dataset& ds, std::size_t k,
                                     std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: need k >= 2");
  struct Patient {
    std::string id;
    std::vector<std::size_t> sample_ids;
    std::size_t pos = 0;
    bool positive() const { return 2 * pos >= sample_ids.size(); }
  };
  std::vector<Patient> patients;
  std::map<std::string, std::size_t> by_id;
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Sample& s = ds.samples[i];
    auto [it, inserted] = by_id.emplace(s.patient_id, patients.size());
    if (inserted) patients.push_back(Patient{s.patient_id, {}, 0});
    Patient& p = patients[it->second];
    p.sample_ids.push_back(i);
    p.pos += s.label ? 1 : 0;
  }

  std::vector<std::size_t> pos_patients, neg_patients;
  for (std::size_t i = 0; i < patients.size(); ++i)
    (patients[i].positive() ? pos_patients : neg_patients).push_back(i);
  if (pos_patients.size() < k || neg_patients.size() < k)
    throw ConfigError("kfold: need at least " + std::to_string(k) +
                      " patients per class, have " +
                      std::to_string(pos_patients.size()) + " positive and " +
                      std::to_string(neg_patients.size()) + " negative");

  Rng rng(derive_seed(seed, 21));
  std::vector<std::size_t> fold_of(patients.size());
  std::vector<std::size_t> class_load(k);
  auto assign_class = [&](std::vector<std::size_t>& group) {
    rng.shuffle(group);
    std::stable_sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
      return patients[a].sample_ids.size() > patients[b].sample_ids.size();
    });
    std::fill(class_load.begin(), class_load.end(), 0);
    for (std::size_t pi : group) {
      std::size_t best = 0;
      for (std::size_t f = 1; f < k; ++f)
        if (class_load[f] < class_load[best]) best = f;
      fold_of[pi] = best;
      class_load[best] += patients[pi].sample_ids.size();
    }
  };
  assign_class(pos_patients);
  assign_class(neg_patients);

  std::vector<Fold> folds(k);
  for (std::size_t pi = 0; pi < patients.size(); ++pi) {
    const std::size_t f = fold_of[pi];
    for (std::size_t sid : patients[pi].sample_ids) {
      for (std::size_t g = 0; g < k; ++g)
        (g == f ? folds[g].test_ids : folds[g].train_ids).push_back(sid);
    }
  }
  for (Fold& f : folds) {
    std::sort(f.train_ids.begin(), f.train_ids.end());
    std::sort(f.test_ids.begin(), f.test_ids.end());
  }
  return folds;
}

}  // namespace pneumo

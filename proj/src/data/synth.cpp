#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ids/data.hpp"
#include "ids/errors.hpp"

namespace ids {

std::vector<std::size_t> synth_class_counts(const SynthOptions& o) {
  if (o.classes < 2) throw ContractError("synth: need at least 2 classes");
  if (o.per_class < 2) throw ContractError("synth: per_class must be >= 2");
  if (o.imbalance.empty()) throw ContractError("synth: imbalance profile is empty");
  std::vector<double> w(o.classes);
  for (std::size_t c = 0; c < o.classes; ++c) w[c] = o.imbalance[std::min(c, o.imbalance.size() - 1)];
  const double top = *std::max_element(w.begin(), w.end());
  if (!(top > 0) || *std::min_element(w.begin(), w.end()) <= 0) {
    throw ContractError("synth: imbalance weights must be positive");
  }
  std::vector<std::size_t> counts(o.classes);
  for (std::size_t c = 0; c < o.classes; ++c) {
    counts[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(double(o.per_class) * w[c] / top)));
  }
  return counts;
}

Dataset synth_dataset(const SynthOptions& o) {
  const std::vector<std::size_t> counts = synth_class_counts(o);
  if (o.features == 0) throw ContractError("synth: features must be >= 1");
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2 * std::numbers::pi);

  const std::size_t digits = std::to_string(o.classes - 1).size();
  std::vector<std::string> names;
  for (std::size_t c = 0; c < o.classes; ++c) {
    std::string idx = std::to_string(c);
    names.push_back("class_" + std::string(digits - idx.size(), '0') + idx);
  }
  Dataset d;
  d.num_features = o.features;
  d.encoder = LabelEncoder::from_names(names);
  for (std::size_t f = 0; f < o.features; ++f) d.feature_names.push_back("f" + std::to_string(f));

  std::vector<double> phase(o.classes), rho(o.classes);
  for (std::size_t c = 0; c < o.classes; ++c) {
    phase[c] = angle(rng);
    rho[c] = -0.5 + 1.3 * double(c) / double(o.classes - 1);
  }
  const double amplitude = o.separation / 2;
  std::vector<double> noise(o.features);
  std::int64_t row = 0;
  for (std::size_t c = 0; c < o.classes; ++c) {
    const double freq = 2 * std::numbers::pi * double(c + 1) / double(o.features);
    for (std::size_t s = 0; s < counts[c]; ++s) {
      const double ph = o.phase_jitter ? angle(rng) : phase[c];
      if (o.sequence) {
        const double innovation = std::sqrt(1 - rho[c] * rho[c]);
        noise[0] = normal(rng);
        for (std::size_t f = 1; f < o.features; ++f) noise[f] = rho[c] * noise[f - 1] + innovation * normal(rng);
      } else {
        for (auto& v : noise) v = normal(rng);
      }
      for (std::size_t f = 0; f < o.features; ++f) {
        d.features.push_back(static_cast<Real>(amplitude * std::sin(freq * double(f) + ph) + noise[f]));
      }
      d.labels.push_back(static_cast<int>(c));
      d.origin.push_back(row++);
    }
  }
  return d;
}

}  // namespace ids

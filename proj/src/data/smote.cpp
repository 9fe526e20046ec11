#include <algorithm>
#include <numeric>
#include <random>

#include "ids/data.hpp"
#include "ids/errors.hpp"

namespace ids {

namespace {

Real squared_distance(std::span<const Real> a, std::span<const Real> b) {
  Real s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// k nearest same-class neighbours (positions into `members`) of every member.
std::vector<std::vector<std::size_t>> nearest_neighbours(const Dataset& d, const std::vector<std::size_t>& members,
                                                         std::size_t k) {
  const std::size_t n = members.size();
  std::vector<std::vector<std::size_t>> result(n);
  std::vector<std::pair<Real, std::size_t>> dist;
  for (std::size_t i = 0; i < n; ++i) {
    dist.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) dist.emplace_back(squared_distance(d.row(members[i]), d.row(members[j])), j);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t j = 0; j < k; ++j) result[i].push_back(dist[j].second);
  }
  return result;
}

}  // namespace

Dataset smote_oversample(const Dataset& train, std::size_t k_neighbors, std::uint64_t seed) {
  if (k_neighbors == 0) throw ContractError("smote: k_neighbors must be >= 1");
  const std::vector<std::size_t> counts = train.class_counts();
  const std::size_t majority = counts.empty() ? 0 : *std::max_element(counts.begin(), counts.end());
  Dataset out = train;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Real> unit(Real(0), Real(1));
  const std::size_t f = train.num_features;

  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0 || counts[c] == majority) continue;
    if (counts[c] < 2) {
      throw ContractError("smote: class '" + train.encoder.decode(int(c)) +
                          "' has a single sample; interpolation needs at least 2");
    }
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < train.rows(); ++i) {
      if (static_cast<std::size_t>(train.labels[i]) == c) members.push_back(i);
    }
    const std::size_t k = std::min(k_neighbors, members.size() - 1);
    const auto neighbours = nearest_neighbours(train, members, k);
    std::uniform_int_distribution<std::size_t> pick_base(0, members.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_nn(0, k - 1);
    for (std::size_t s = counts[c]; s < majority; ++s) {
      const std::size_t b = pick_base(rng);
      const std::size_t nn = neighbours[b][pick_nn(rng)];
      const Real lambda = unit(rng);
      const auto x = train.row(members[b]);
      const auto y = train.row(members[nn]);
      for (std::size_t j = 0; j < f; ++j) out.features.push_back(x[j] + lambda * (y[j] - x[j]));
      out.labels.push_back(static_cast<int>(c));
      out.origin.push_back(-1);
    }
  }
  return out;
}

}  // namespace ids

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ids/data.hpp"
#include "ids/errors.hpp"

namespace ids {

SplitPair train_test_split(const Dataset& d, double fraction, std::uint64_t seed, bool stratified) {
  if (!(fraction > 0 && fraction < 1)) throw ContractError("split fraction must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  const std::size_t n = d.rows();
  const auto target = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> train_idx, test_idx;

  if (!stratified) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    train_idx.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(target));
    test_idx.assign(perm.begin() + static_cast<std::ptrdiff_t>(target), perm.end());
  } else {
    const std::size_t k = d.num_classes();
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(d.labels[i])].push_back(i);
    std::vector<std::size_t> take(k, 0);
    std::vector<double> remainder(k, -1.0);
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t size = members[c].size();
      if (size == 0) continue;
      if (size < 2) {
        throw ContractError("stratified split needs >= 2 samples per class; class '" + d.encoder.decode(int(c)) +
                            "' has " + std::to_string(size));
      }
      std::shuffle(members[c].begin(), members[c].end(), rng);
      const double quota = fraction * static_cast<double>(size);
      take[c] = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(quota)), 1, size - 1);
      remainder[c] = quota - std::floor(quota);
      assigned += take[c];
    }
    // Largest remainder, ties to the lower class index.
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t c : order) {
      if (assigned >= target) break;
      if (remainder[c] > 0 && take[c] + 1 < members[c].size()) {
        ++take[c];
        ++assigned;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      train_idx.insert(train_idx.end(), members[c].begin(), members[c].begin() + static_cast<std::ptrdiff_t>(take[c]));
      test_idx.insert(test_idx.end(), members[c].begin() + static_cast<std::ptrdiff_t>(take[c]), members[c].end());
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {d.subset(train_idx), d.subset(test_idx), fraction};
}

}  // namespace ids

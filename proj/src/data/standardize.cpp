#include <cmath>

#include "ids/data.hpp"
#include "ids/errors.hpp"

namespace ids {

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.rows() == 0) throw InputError("cannot fit feature statistics on an empty dataset");
  const std::size_t f = train.num_features;
  const auto n = static_cast<Real>(train.rows());
  Standardizer s;
  s.mean.assign(f, Real(0));
  s.stddev.assign(f, Real(0));
  for (std::size_t i = 0; i < train.rows(); ++i) {
    const auto r = train.row(i);
    for (std::size_t j = 0; j < f; ++j) s.mean[j] += r[j];
  }
  for (auto& m : s.mean) m /= n;
  for (std::size_t i = 0; i < train.rows(); ++i) {
    const auto r = train.row(i);
    for (std::size_t j = 0; j < f; ++j) s.stddev[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
  }
  for (std::size_t j = 0; j < f; ++j) {
    s.stddev[j] = std::sqrt(s.stddev[j] / n);
    if (!(s.stddev[j] > Real(1e-12) * (Real(1) + std::abs(s.mean[j])))) {
      s.stddev[j] = 0;
      s.zero_variance.push_back(j);
    }
  }
  return s;
}

Tensor Standardizer::transform(const Dataset& d) const {
  if (d.num_features != mean.size()) {
    throw DimensionError("standardizer fitted on " + std::to_string(mean.size()) + " features, data has " +
                         std::to_string(d.num_features));
  }
  Tensor out({d.rows(), d.num_features, 1});
  Real* dst = out.raw();
  for (std::size_t i = 0; i < d.rows(); ++i) {
    const auto r = d.row(i);
    for (std::size_t j = 0; j < d.num_features; ++j) {
      *dst++ = stddev[j] > 0 ? (r[j] - mean[j]) / stddev[j] : Real(0);
    }
  }
  return out;
}

Tensor reshape_for_model(const Dataset& d, const Standardizer& stats) { return stats.transform(d); }

}  // namespace ids

#include "ids/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "ids/errors.hpp"

namespace ids {

Var cross_entropy_loss(Tape& tape, const Var& probs, std::span<const int> labels, Real floor) {
  const Shape& s = probs.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw DimensionError("cross_entropy: probabilities " + to_string(s) + " vs " + std::to_string(labels.size()) +
                         " labels");
  }
  const std::size_t batch = s[0], classes = s[1];
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside 0.." + std::to_string(classes - 1));
    }
  }
  Real total = 0;
  for (std::size_t i = 0; i < batch; ++i) {
    total -= std::log(std::max(probs.value()[i * classes + static_cast<std::size_t>(labels[i])], floor));
  }
  std::vector<int> y(labels.begin(), labels.end());
  return tape.record(Tensor::scalar(total / static_cast<Real>(batch)), {&probs},
                     [probs, y = std::move(y), batch, classes, floor](const Node& o) {
                       Real* d = probs.grad_slot().raw();
                       const Real g = o.grad[0] / static_cast<Real>(batch);
                       for (std::size_t i = 0; i < batch; ++i) {
                         const std::size_t j = i * classes + static_cast<std::size_t>(y[i]);
                         const Real p = probs.value()[j];
                         if (p > floor) d[j] -= g / p;
                       }
                     });
}

AdamState make_adam_state(std::span<const Var> params, const AdamConfig& config) {
  AdamState s;
  s.config = config;
  for (const Var& p : params) {
    s.m.emplace_back(p.shape(), Real(0));
    s.v.emplace_back(p.shape(), Real(0));
  }
  return s;
}

void adam_step(std::span<const Var> params, AdamState& s) {
  if (params.size() != s.m.size()) throw ContractError("adam: parameter count changed since state creation");
  ++s.t;
  const AdamConfig& c = s.config;
  const Real correction1 = Real(1) - std::pow(c.beta1, static_cast<Real>(s.t));
  const Real correction2 = Real(1) - std::pow(c.beta2, static_cast<Real>(s.t));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Var param = params[p];
    if (param.shape() != s.m[p].shape()) throw DimensionError("adam: parameter shape changed");
    if (!param.has_grad()) {
      // Zero gradient: moments decay, the update is still applied.
      for (std::size_t i = 0; i < s.m[p].size(); ++i) {
        s.m[p][i] *= c.beta1;
        s.v[p][i] *= c.beta2;
      }
    } else {
      const Tensor& g = param.grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        s.m[p][i] = c.beta1 * s.m[p][i] + (Real(1) - c.beta1) * g[i];
        s.v[p][i] = c.beta2 * s.v[p][i] + (Real(1) - c.beta2) * g[i] * g[i];
      }
    }
    Real* w = param.mutable_value().raw();
    for (std::size_t i = 0; i < s.m[p].size(); ++i) {
      const Real m_hat = s.m[p][i] / correction1;
      const Real v_hat = s.v[p][i] / correction2;
      w[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  Shape s = x.shape();
  const std::size_t width = x.size() / s[0];
  s[0] = indices.size();
  Tensor out(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(x.raw() + indices[i] * width, width, out.raw() + i * width);
  }
  return out;
}

namespace {

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
  const std::size_t k = probs.shape()[1];
  const Real* p = probs.raw() + row * k;
  return static_cast<std::size_t>(std::max_element(p, p + k) - p);
}

}  // namespace

Evaluation evaluate(const Model& model, const LabeledTensor& data, std::size_t batch_size) {
  const std::size_t n = data.rows();
  const std::size_t k = model.config().num_classes;
  if (n == 0) throw ContractError("evaluate: empty dataset");
  Evaluation e;
  e.probabilities = Tensor({n, k});
  Real loss = 0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor probs = model.predict(gather_rows(data.x, idx));
    std::copy_n(probs.raw(), probs.size(), e.probabilities.raw() + start * k);
    Tape tape(false);
    loss += cross_entropy_loss(tape, Var(probs), std::span(data.y).subspan(start, count)).value()[0] *
            static_cast<Real>(count);
    for (std::size_t i = 0; i < count; ++i) {
      const int pred = static_cast<int>(argmax_row(probs, i));
      e.predictions.push_back(pred);
      if (pred == data.y[start + i]) ++correct;
    }
  }
  e.loss = loss / static_cast<Real>(n);
  e.accuracy = static_cast<Real>(correct) / static_cast<Real>(n);
  return e;
}

std::vector<EpochRecord> train(Model& model, const LabeledTensor& train_set, const LabeledTensor& validation,
                               const TrainConfig& cfg, const EpochCallback& on_epoch) {
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("train: epochs and batch_size must be >= 1");
  if (train_set.rows() == 0 || validation.rows() == 0) throw ContractError("train: empty training or validation set");
  const Shape& xs = train_set.x.shape();
  if (xs.size() != 3 || xs[1] != model.config().time_steps || xs[2] != model.config().channels) {
    throw DimensionError("train: data " + to_string(xs) + " does not match model input [N, " +
                         std::to_string(model.config().time_steps) + ", " + std::to_string(model.config().channels) +
                         "]");
  }
  const std::vector<Var> params = model.trainable_parameters();
  AdamConfig adam;
  adam.lr = cfg.lr;
  AdamState state = make_adam_state(params, adam);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train_set.rows());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochRecord> records;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    Real loss_sum = 0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_no) {
      const std::size_t count = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> idx(order.data() + start, count);
      std::vector<int> labels;
      for (std::size_t i : idx) labels.push_back(train_set.y[i]);

      for (const Var& p : params) Var(p).zero_grad();
      Tape tape;
      const Var probs = model.forward(tape, Var(gather_rows(train_set.x, idx)), Mode::train, rng);
      const Var loss = cross_entropy_loss(tape, probs, labels);
      const Real value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_no));
      }
      tape.backward(loss);
      adam_step(params, state);

      loss_sum += value * static_cast<Real>(count);
      for (std::size_t i = 0; i < count; ++i) {
        if (static_cast<int>(argmax_row(probs.value(), i)) == labels[i]) ++correct;
      }
    }
    const Evaluation val = evaluate(model, validation);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<Real>(order.size());
    rec.train_accuracy = static_cast<Real>(correct) / static_cast<Real>(order.size());
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;
    rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  for (const Var& p : params) Var(p).zero_grad();
  return records;
}

double measure_inference(const Model& model, const Tensor& batch, std::size_t repetitions) {
  if (repetitions < 10) throw ContractError("measure_inference: repetitions must be >= 10");
  model.predict(batch);  // warm-up
  std::vector<double> seconds;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    model.predict(batch);
    seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::nth_element(seconds.begin(), seconds.begin() + static_cast<std::ptrdiff_t>(repetitions / 2), seconds.end());
  return seconds[repetitions / 2] / static_cast<double>(batch.shape()[0]);
}

void retain_freed_memory() {
#if defined(__GLIBC__)
  constexpr int kLimit = 1 << 30;
  mallopt(M_MMAP_THRESHOLD, kLimit);
  mallopt(M_TRIM_THRESHOLD, kLimit);
#endif
}

void write_epoch_csv(const std::string& path, std::span<const EpochRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g,%.6f\n", r.epoch, double(r.train_loss),
                  double(r.train_accuracy), double(r.val_loss), double(r.val_accuracy), r.wall_time_seconds);
    out << buf;
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace ids

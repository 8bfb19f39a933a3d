#include "exnet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "exnet/error.hpp"
#include "exnet/optim.hpp"
#include "exnet/rng.hpp"

namespace exnet {

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (!(std::isfinite(learning_rate) && learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  validate_dropout_rate(dropout_rate);
}

ModelSpec configured_spec(const ModelSpec& base, const TrainConfig& config) {
  ModelSpec s = base;
  s.use_batchnorm = config.use_batchnorm;
  s.dropout_rate = config.dropout_rate;
  return s;
}

std::uint64_t init_seed(const TrainConfig& config) { return derive_seed(config.seed, 0x1417); }

namespace {

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

InputNorm norm_of(const ModelSpec& spec) { return {spec.input_mean, spec.input_std}; }

template <typename T>
int argmax_row(const T* row, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < k; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<int>(best);
}

}  // namespace

void write_epoch_log(std::ostream& os, std::span<const EpochLog> logs) {
  os << kEpochLogHeader << '\n';
  for (const auto& l : logs) {
    char loss[48];
    std::snprintf(loss, sizeof loss, "%.8f", l.train_loss);
    os << l.epoch << ',' << loss << ',' << fmt(l.train_accuracy) << ',' << fmt(l.validation.precision) << ','
       << fmt(l.validation.recall) << ',' << fmt(l.validation.f1) << ',' << fmt(l.validation.accuracy) << '\n';
  }
}

template <typename T>
std::vector<int> predict(Model<T>& model, std::span<const LabeledImage> items, std::size_t batch_size) {
  if (items.empty()) throw DataError("cannot evaluate an empty split");
  const Mode previous = model.mode();
  model.set_mode(Mode::eval);
  std::vector<int> out(items.size());
  try {
    BatchIterator<T> it(items, batch_size, 0, 0, false, norm_of(model.spec()));
    Batch<T> batch;
    while (it.next(batch)) {
      const Tensor<T> logits = model.forward(batch.images);
      const std::size_t k = logits.dim(1);
      for (std::size_t s = 0; s < batch.indices.size(); ++s) {
        out[batch.indices[s]] = argmax_row(logits.data() + s * k, k);
      }
    }
  } catch (...) {
    model.set_mode(previous);
    throw;
  }
  model.set_mode(previous);
  return out;
}

template <typename T>
MetricsReport evaluate(Model<T>& model, std::span<const LabeledImage> items, std::size_t batch_size) {
  const std::vector<int> preds = predict(model, items, batch_size);
  std::vector<int> truth;
  truth.reserve(items.size());
  for (const auto& it : items) truth.push_back(it.label);
  return report(confusion(preds, truth));
}

template <typename T>
FitSummary fit(Model<T>& model, std::span<const LabeledImage> train, std::span<const LabeledImage> validation,
               const TrainConfig& config, const FitOptions& options) {
  config.validate();
  if (train.empty()) throw DataError("training split is empty");
  if (validation.empty()) throw DataError("validation split is empty");

  SgdMomentum<T> optimizer(config.learning_rate, config.momentum);
  const std::uint64_t batch_seed = derive_seed(config.seed, 0xBA7C);
  const InputNorm norm = norm_of(model.spec());
  FitSummary summary;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    model.set_mode(Mode::train);
    BatchIterator<T> it(train, config.batch_size, batch_seed, epoch, true, norm);
    Batch<T> batch;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    while (it.next(batch)) {
      ++batch_no;
      model.zero_grad();
      const Tensor<T> logits = model.forward(batch.images);
      const LossResult<T> loss = softmax_cross_entropy(logits, std::span<const int>(batch.labels));
      if (!std::isfinite(loss.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_no) + ": " + std::to_string(loss.loss));
      }
      model.backward(loss.grad);
      optimizer.step(model.parameters());

      const std::size_t n = batch.labels.size();
      const std::size_t k = logits.dim(1);
      for (std::size_t s = 0; s < n; ++s) {
        if (argmax_row(logits.data() + s * k, k) == batch.labels[s]) ++correct;
      }
      loss_sum += loss.loss * static_cast<double>(n);
      seen += n;
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(seen);
    log.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    log.validation = evaluate(model, validation, config.batch_size);
    log.validation.degree_of_overfitting = log.train_accuracy - log.validation.accuracy;
    summary.logs.push_back(log);

    if (!have_best || log.validation.f1 > summary.best_f1) {
      have_best = true;
      summary.best_f1 = log.validation.f1;
      summary.best_epoch = epoch;
      if (!options.best_checkpoint.empty()) save_checkpoint(model, options.best_checkpoint);
    }
    if (options.on_epoch) options.on_epoch(log);
  }
  model.set_mode(Mode::train);
  return summary;
}

void write_sweep_csv(std::ostream& os, const SweepResult& result) {
  os << kSweepHeader << '\n';
  for (const auto& r : result.rows) {
    char rate[32];
    std::snprintf(rate, sizeof rate, "%.2f", r.rate);
    os << rate << ',';
    if (r.ok) {
      os << fmt(r.train_accuracy) << ',' << fmt(r.validation_accuracy) << ',' << fmt(r.overfit_degree) << ','
         << fmt(r.f1) << ",ok\n";
    } else {
      std::string msg = r.error;
      for (char& c : msg) {
        if (c == ',' || c == '\n' || c == '\r' || c == '"') c = ' ';
      }
      os << ",,,,failed: " << msg << '\n';
    }
  }
}

template <typename T>
SweepResult sweep_dropout(const ModelSpec& base, std::span<const LabeledImage> train,
                          std::span<const LabeledImage> validation, const TrainConfig& config,
                          std::span<const double> rates) {
  if (rates.empty()) throw ConfigError("sweep needs at least one dropout rate");
  for (std::size_t i = 0; i < rates.size(); ++i) {
    validate_dropout_rate(rates[i]);
    if (i > 0 && !(rates[i] > rates[i - 1])) throw ConfigError("sweep rates must be strictly increasing");
  }
  SweepResult result;
  for (const double rate : rates) {
    SweepRow row;
    row.rate = rate;
    try {
      TrainConfig c = config;
      c.dropout_rate = rate;
      Model<T> model = Model<T>::build(configured_spec(base, c), init_seed(c));
      const FitSummary s = fit(model, train, validation, c);
      const EpochLog& last = s.logs.back();
      row.train_accuracy = last.train_accuracy;
      row.validation_accuracy = last.validation.accuracy;
      row.overfit_degree = row.train_accuracy - row.validation_accuracy;
      row.f1 = last.validation.f1;
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

#define EXNET_INSTANTIATE(T)                                                                                       \
  template std::vector<int> predict<T>(Model<T>&, std::span<const LabeledImage>, std::size_t);                    \
  template MetricsReport evaluate<T>(Model<T>&, std::span<const LabeledImage>, std::size_t);                      \
  template FitSummary fit<T>(Model<T>&, std::span<const LabeledImage>, std::span<const LabeledImage>,             \
                             const TrainConfig&, const FitOptions&);                                              \
  template SweepResult sweep_dropout<T>(const ModelSpec&, std::span<const LabeledImage>,                          \
                                        std::span<const LabeledImage>, const TrainConfig&, std::span<const double>);

EXNET_INSTANTIATE(float)
EXNET_INSTANTIATE(double)

#undef EXNET_INSTANTIATE

}  // namespace exnet

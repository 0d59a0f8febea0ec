#include "spillcast/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "spillcast/errors.hpp"
#include "spillcast/rng.hpp"

namespace spillcast {

namespace {

constexpr double kClipLo = 1e-7;
constexpr double kClipHi = 1.0 - 1e-7;

using ad::Var;

void check_pair(const std::vector<double>& predictions, const std::vector<double>& truths) {
  if (predictions.size() != truths.size()) {
    throw DataError("metrics: " + std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(truths.size()) + " truths");
  }
  if (predictions.empty()) throw DataError("metrics: empty evaluation set");
  for (double t : truths) {
    if (t <= 0.0) throw DataError("metrics: non-positive true size");
  }
}

}  // namespace

void TrainConfig::validate(std::size_t train_size) const {
  if (layers < 1) throw ConfigError("train config: layers must be >= 1");
  if (hidden < 1) throw ConfigError("train config: hidden must be >= 1");
  if (msg_hidden < 1) throw ConfigError("train config: msg_hidden must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train config: learning_rate must be >= 0");
  if (!(theta >= 0.0)) throw ConfigError("train config: theta must be >= 0");
  if (!(lambda >= 0.0)) throw ConfigError("train config: lambda must be >= 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
  if (static_cast<std::size_t>(batch_size) > train_size) {
    throw ConfigError("train config: batch_size " + std::to_string(batch_size) +
                      " exceeds training set size " + std::to_string(train_size));
  }
  if (max_epochs < 1) throw ConfigError("train config: max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("train config: patience must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("train config: clip_norm must be > 0");
}

SplitIndices split_dataset(std::size_t count, std::uint64_t seed, double train_frac,
                           double val_frac) {
  if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0) {
    throw ConfigError("split: fractions must be nonnegative and sum to at most 1");
  }
  std::vector<int> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(mix64(seed, 0x73706c6974ull));
  shuffle_vec(order, rng);
  const auto n_train = static_cast<std::size_t>(train_frac * static_cast<double>(count));
  const auto n_val = static_cast<std::size_t>(val_frac * static_cast<double>(count));
  SplitIndices s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

double mrse_loss(const std::vector<double>& predictions, const std::vector<double>& truths) {
  check_pair(predictions, truths);
  double acc = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    double rel = (predictions[i] - truths[i]) / truths[i];
    acc += rel * rel;
  }
  return acc / static_cast<double>(truths.size());
}

Metrics compute_metrics(const std::vector<double>& predictions,
                        const std::vector<double>& truths, double wro_threshold) {
  check_pair(predictions, truths);
  Metrics m;
  m.count = truths.size();
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    double rel = (predictions[i] - truths[i]) / truths[i];
    m.mrse += rel * rel;
    m.mape += std::abs(rel);
    if (std::abs(rel) >= wro_threshold) ++wrong;
  }
  m.mrse /= static_cast<double>(m.count);
  m.mape /= static_cast<double>(m.count);
  m.wro_perc = 100.0 * static_cast<double>(wrong) / static_cast<double>(m.count);
  return m;
}

double user_cross_entropy(const Eigen::VectorXd& statuses, const Eigen::VectorXd& labels) {
  if (statuses.size() != labels.size()) {
    throw ShapeError("cross entropy: " + std::to_string(statuses.size()) + " statuses vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (statuses.size() == 0) throw DataError("cross entropy: empty input");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < statuses.size(); ++i) {
    double p = std::clamp(statuses(i), kClipLo, kClipHi);
    double y = labels(i);
    acc += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return -acc / static_cast<double>(statuses.size());
}

double regularized_loss(double mrse, const ad::ParameterSet& params,
                        const Eigen::VectorXd& statuses, const Eigen::VectorXd& labels,
                        double theta, double lambda) {
  double loss = mrse + theta * params.norm_sum();
  if (lambda != 0.0) loss += lambda * user_cross_entropy(statuses, labels);
  return loss;
}

std::vector<double> predict_items(PopularityModel& model, const ModelDataset& ds,
                                  const std::vector<int>& subset) {
  const EdgeIndex& ei = ds.edges_for(model.config().kind);
  std::vector<double> preds;
  preds.reserve(subset.size());
  for (int idx : subset) {
    const EvalItem& item = ds.items.at(static_cast<std::size_t>(idx));
    preds.push_back(model.predict(ei, ds.base, item.s0, item.dm).popularity);
  }
  return preds;
}

SubsetMetrics evaluate_subsets(const std::vector<double>& predictions, const ModelDataset& ds,
                               const std::vector<int>& subset, double wro_threshold) {
  if (predictions.size() != subset.size()) {
    throw DataError("evaluate: prediction count does not match subset size");
  }
  std::vector<double> t_all, p_all, t_pm, p_pm, t_rest, p_rest;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const EvalItem& item = ds.items.at(static_cast<std::size_t>(subset[i]));
    t_all.push_back(item.n_final);
    p_all.push_back(predictions[i]);
    if (item.is_pm) {
      t_pm.push_back(item.n_final);
      p_pm.push_back(predictions[i]);
    } else {
      t_rest.push_back(item.n_final);
      p_rest.push_back(predictions[i]);
    }
  }
  SubsetMetrics out;
  out.all = compute_metrics(p_all, t_all, wro_threshold);
  if (!t_pm.empty()) out.preventive = compute_metrics(p_pm, t_pm, wro_threshold);
  if (!t_rest.empty()) out.other = compute_metrics(p_rest, t_rest, wro_threshold);
  return out;
}

namespace {

struct DataTerms {
  double mrse = 0.0;
  double mean_ce = 0.0;
};

DataTerms data_terms(PopularityModel& model, const ModelDataset& ds,
                     const std::vector<int>& idxs, const EdgeIndex& ei, bool with_ce) {
  DataTerms t;
  for (int idx : idxs) {
    const EvalItem& item = ds.items.at(static_cast<std::size_t>(idx));
    auto pred = model.predict(ei, ds.base, item.s0, item.dm);
    double rel = (pred.popularity - item.n_final) / item.n_final;
    t.mrse += rel * rel;
    if (with_ce) t.mean_ce += user_cross_entropy(pred.statuses, item.final_mask);
  }
  const auto n = static_cast<double>(idxs.size());
  t.mrse /= n;
  t.mean_ce /= n;
  return t;
}

}  // namespace

TrainResult train_model(const ModelDataset& ds, const SplitIndices& split,
                        const TrainConfig& cfg) {
  cfg.validate(split.train.size());
  if (split.train.empty()) throw ConfigError("train: empty training set");
  for (int idx : split.train) {
    const EvalItem& item = ds.items.at(static_cast<std::size_t>(idx));
    if (item.n_final <= 0.0) {
      throw DataError("train: cascade " + std::to_string(item.message_id) +
                      " has non-positive final size");
    }
  }

  PopularityModel model(
      ds.model_config(cfg.kind, cfg.layers, cfg.hidden, cfg.msg_hidden, cfg.seed));
  const EdgeIndex& ei = ds.edges_for(cfg.kind);
  const int n = ds.num_nodes;

  std::mt19937_64 order_rng(mix64(cfg.seed, 0x6f72646572ull));
  std::vector<int> order = split.train;

  TrainResult result{std::move(model), {}, 0,
                     std::numeric_limits<double>::infinity()};
  std::vector<Eigen::MatrixXd> best = result.model.params().snapshot_values();
  int stale = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle_vec(order, order_rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      ad::Tape tape;
      auto batch = result.model.begin_batch(tape, ds.base);
      Var total;
      for (std::size_t bi = start; bi < end; ++bi) {
        const EvalItem& item = ds.items.at(static_cast<std::size_t>(order[bi]));
        auto fwd = result.model.forward(batch, ei, item.s0, item.dm);
        Var rel = ad::scalar_add(ad::scalar_mul(fwd.popularity, 1.0 / item.n_final), -1.0);
        Var item_loss = ad::hadamard(rel, rel);
        if (cfg.lambda > 0.0) {
          Var probs = ad::clip(fwd.statuses, kClipLo, kClipHi);
          Var y = tape.constant(Eigen::MatrixXd(item.final_mask));
          Var y_comp = tape.constant(
              Eigen::MatrixXd(Eigen::VectorXd::Ones(n) - item.final_mask));
          Var ones = tape.constant(Eigen::MatrixXd(Eigen::VectorXd::Ones(n)));
          Var ll = ad::add(ad::hadamard(y, ad::log_elem(probs)),
                           ad::hadamard(y_comp, ad::log_elem(ad::sub(ones, probs))));
          Var ce = ad::scalar_mul(ad::reduce_sum(ll), -1.0 / n);
          item_loss = ad::add(item_loss, ad::scalar_mul(ce, cfg.lambda));
        }
        total = (bi == start) ? item_loss : ad::add(total, item_loss);
      }
      Var loss = ad::scalar_mul(total, 1.0 / static_cast<double>(end - start));
      if (cfg.theta > 0.0) {
        Var reg;
        bool first = true;
        for (ad::Tensor* t : result.model.params().all()) {
          Var pv = tape.param(*t);
          Var norm = ad::sqrt_elem(ad::reduce_sum(ad::hadamard(pv, pv)));
          reg = first ? norm : ad::add(reg, norm);
          first = false;
        }
        loss = ad::add(loss, ad::scalar_mul(reg, cfg.theta));
      }
      const double loss_value = tape.scalar(loss);
      if (!std::isfinite(loss_value)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
      }
      result.model.params().zero_grad();
      tape.backward(loss);
      if (!result.model.params().grads_finite()) {
        throw NumericError("train: non-finite gradient at epoch " + std::to_string(epoch));
      }
      result.model.params().clip_gradients(cfg.clip_norm);
      result.model.params().sgd_step(cfg.learning_rate);
      if (!result.model.params().values_finite()) {
        throw NumericError("train: non-finite parameter at epoch " + std::to_string(epoch));
      }
    }

    DataTerms train_terms = data_terms(result.model, ds, split.train, ei, cfg.lambda > 0.0);
    double train_loss = train_terms.mrse + cfg.lambda * train_terms.mean_ce +
                        cfg.theta * result.model.params().norm_sum();
    double val_mrse = split.val.empty()
                          ? train_terms.mrse
                          : data_terms(result.model, ds, split.val, ei, false).mrse;
    result.history.push_back({epoch, train_loss, train_terms.mrse, val_mrse});

    if (val_mrse < result.best_val_mrse) {
      result.best_val_mrse = val_mrse;
      result.best_epoch = epoch;
      best = result.model.params().snapshot_values();
      stale = 0;
    } else {
      ++stale;
      if (stale >= cfg.patience) break;
    }
  }

  result.model.params().restore_values(best);
  return result;
}

}  // namespace spillcast

#include "voxmed/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>

#include "voxmed/cnn_kernels.hpp"
#include "voxmed/error.hpp"
#include "voxmed/random.hpp"

namespace voxmed {

void TrainConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::InvalidConfig, "TrainConfig: " + what); };
  if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) bad("betas must be in [0, 1)");
  if (!(epsilon > 0.0)) bad("epsilon must be positive");
  if (batch_size < 1) bad("batch_size must be >= 1");
  if (max_epochs < 1) bad("max_epochs must be >= 1");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) bad("split_ratio must be in (0, 1)");
}

AdamState AdamState::zeros_like(const ModelParams& params) {
  return AdamState{params.zeros_like(), params.zeros_like(), 0};
}

void TrainHistory::write_csv(std::ostream& out) const {
  out << "epoch,train_loss,train_acc,val_loss,val_acc,seconds\n";
  out << std::setprecision(9);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.train_loss << ',' << e.train_acc << ',' << e.val_loss << ',' << e.val_acc << ','
        << e.seconds << '\n';
  }
}

void TrainHistory::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_csv(out);
}

namespace {
constexpr double kProbClamp = 1e-12;
}

double cross_entropy(std::span<const std::vector<double>> probs, std::span<const std::vector<double>> onehot) {
  if (probs.size() != onehot.size()) {
    fail(ErrorCode::ShapeMismatch, std::to_string(probs.size()) + " predictions vs " + std::to_string(onehot.size()) +
                                       " labels");
  }
  if (probs.empty()) fail(ErrorCode::EmptyInput, "empty batch");
  double total = 0.0;
  for (std::size_t n = 0; n < probs.size(); ++n) {
    if (probs[n].size() != onehot[n].size()) fail(ErrorCode::ShapeMismatch, "class count differs in row " + std::to_string(n));
    for (std::size_t k = 0; k < probs[n].size(); ++k) {
      if (onehot[n][k] != 0.0) total -= onehot[n][k] * std::log(std::max(probs[n][k], kProbClamp));
    }
  }
  return total / static_cast<double>(probs.size());
}

double cross_entropy(std::span<const std::vector<double>> probs, std::span<const std::size_t> labels) {
  std::vector<std::vector<double>> onehot;
  onehot.reserve(labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const std::size_t k = n < probs.size() ? probs[n].size() : 0;
    if (labels[n] >= k) fail(ErrorCode::ShapeMismatch, "label " + std::to_string(labels[n]) + " out of range");
    onehot.push_back(one_hot(labels[n], k));
  }
  return cross_entropy(probs, onehot);
}

std::vector<double> one_hot(std::size_t label, std::size_t num_classes) {
  std::vector<double> y(num_classes, 0.0);
  y.at(label) = 1.0;
  return y;
}

namespace {

// Accumulates one sample's gradient (already scaled by 1/batch) into grads.
double accumulate_sample(const ModelParams& params, const Example& ex, bool train_mode, std::uint64_t seed,
                         double inv_batch, ModelParams& grads, bool& correct) {
  const ArchSpec& arch = params.arch;
  if (ex.embedding.size() != arch.input_dim) {
    fail(ErrorCode::ShapeMismatch, "example of length " + std::to_string(ex.embedding.size()) + " for input_dim " +
                                       std::to_string(arch.input_dim));
  }
  if (ex.label >= arch.num_classes) fail(ErrorCode::ShapeMismatch, "label " + std::to_string(ex.label) + " out of range");
  const std::vector<double> input(ex.embedding.begin(), ex.embedding.end());
  const ForwardTrace tr = forward_trace(params, input, ForwardOptions{train_mode, seed});
  correct = argmax(tr.probs) == ex.label;

  std::vector<double> dlogits(arch.num_classes);
  for (std::size_t k = 0; k < dlogits.size(); ++k) {
    dlogits[k] = (tr.probs[k] - (k == ex.label ? 1.0 : 0.0)) * inv_batch;
  }
  std::vector<double> d_dense_in(tr.dense_in.size(), 0.0);
  cnn::dense_backward(tr.dense_in, params.dense_weight().data, dlogits, d_dense_in, grads.dense_weight().data,
                      grads.dense_bias().data);
  std::vector<double> d_out(d_dense_in.size());
  for (std::size_t i = 0; i < d_out.size(); ++i) d_out[i] = d_dense_in[i] * tr.dropout[i];

  std::size_t channels_in = 1;
  std::vector<std::size_t> in_channels(arch.conv_layers.size());
  for (std::size_t i = 0; i < arch.conv_layers.size(); ++i) {
    in_channels[i] = channels_in;
    channels_in = arch.conv_layers[i].filters;
  }
  for (std::size_t li = arch.conv_layers.size(); li-- > 0;) {
    const auto& layer = arch.conv_layers[li];
    std::vector<double> d_act;
    if (layer.pool) {
      d_act.assign(tr.act[li].size(), 0.0);
      cnn::maxpool_backward(d_out, tr.pool_index[li], d_act);
    } else {
      d_act = std::move(d_out);
    }
    std::vector<double> d_pre(d_act.size());
    cnn::relu_backward(tr.pre[li], d_act, d_pre);
    const cnn::ConvShape shape{in_channels[li], tr.inputs[li].size() / in_channels[li], layer.filters, layer.kernel};
    std::vector<double> dx;
    if (li > 0) dx.assign(tr.inputs[li].size(), 0.0);
    cnn::conv1d_backward(shape, tr.inputs[li], params.conv_weight(li).data, d_pre, dx, grads.conv_weight(li).data,
                         grads.conv_bias(li).data);
    d_out = std::move(dx);
  }
  return -std::log(std::max(tr.probs[ex.label], kProbClamp));
}

BackwardResult backward_indices(const ModelParams& params, std::span<const Example> data,
                                std::span<const std::size_t> indices, bool train_mode,
                                std::span<const std::uint64_t> seeds) {
  if (indices.empty()) fail(ErrorCode::EmptyInput, "empty batch");
  if (train_mode && seeds.size() < indices.size()) {
    fail(ErrorCode::ShapeMismatch, "need one dropout seed per sample");
  }
  BackwardResult r{params.zeros_like(), 0.0, 0};
  const double inv_batch = 1.0 / static_cast<double>(indices.size());
  for (std::size_t j = 0; j < indices.size(); ++j) {
    bool correct = false;
    r.loss += accumulate_sample(params, data[indices[j]], train_mode, train_mode ? seeds[j] : 0, inv_batch,
                                r.gradients, correct);
    if (correct) ++r.correct;
  }
  r.loss *= inv_batch;
  return r;
}

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalStats evaluate_loss(const ModelParams& params, std::span<const Example> data) {
  EvalStats s;
  if (data.empty()) return s;
  std::size_t correct = 0;
  for (const auto& ex : data) {
    const auto p = forward(params, ex.embedding);
    s.loss -= std::log(std::max(p.probs[ex.label], kProbClamp));
    if (p.label_index == ex.label) ++correct;
  }
  s.loss /= static_cast<double>(data.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return s;
}

}  // namespace

BackwardResult backward(const ModelParams& params, std::span<const Example> batch, bool train_mode,
                        std::span<const std::uint64_t> dropout_seeds) {
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  return backward_indices(params, batch, idx, train_mode, dropout_seeds);
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state, const TrainConfig& cfg) {
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t ti = 0; ti < params.tensors.size(); ++ti) {
    auto& p = params.tensors[ti].data;
    const auto& g = grads.tensors[ti].data;
    auto& m = state.m.tensors[ti].data;
    auto& v = state.v.tensors[ti].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

Split split_dataset(std::span<const std::size_t> labels, double ratio, std::uint64_t seed, bool stratified,
                    std::span<const std::int64_t> groups) {
  if (labels.empty()) fail(ErrorCode::EmptyInput, "cannot split an empty dataset");
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorCode::InvalidConfig, "split ratio must be in (0, 1)");
  if (!groups.empty() && groups.size() != labels.size()) fail(ErrorCode::ShapeMismatch, "one group per item required");
  const std::size_t n = labels.size();
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio));
  Rng rng(seed);
  Split out;

  if (!groups.empty()) {
    std::map<std::int64_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < n; ++i) members[groups[i]].push_back(i);
    std::vector<std::int64_t> ids;
    for (const auto& [g, _] : members) ids.push_back(g);
    rng.shuffle(std::span(ids));
    for (const auto g : ids) {
      auto& side = out.train.size() < target ? out.train : out.test;
      side.insert(side.end(), members[g].begin(), members[g].end());
    }
  } else if (stratified) {
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
    struct Quota {
      std::size_t label;
      std::size_t take;
      double remainder;
    };
    std::vector<Quota> quotas;
    std::size_t assigned = 0;
    for (auto& [label, idx] : by_class) {
      rng.shuffle(std::span(idx));
      const double exact = static_cast<double>(idx.size()) * ratio;
      const auto take = static_cast<std::size_t>(std::floor(exact));
      quotas.push_back({label, take, exact - static_cast<double>(take)});
      assigned += take;
    }
    std::vector<std::size_t> order(quotas.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quotas[a].remainder > quotas[b].remainder; });
    for (std::size_t j = 0; assigned < target && j < order.size(); ++j, ++assigned) quotas[order[j]].take += 1;
    for (const auto& q : quotas) {
      const auto& idx = by_class[q.label];
      const std::size_t take = std::min(q.take, idx.size());
      out.train.insert(out.train.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
      out.test.insert(out.test.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
    }
  } else {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));
    out.train.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(target));
    out.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(target), perm.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> val_set, const ArchSpec& arch,
                  const TrainConfig& cfg) {
  cfg.validate();
  arch.validate();
  if (train_set.empty()) fail(ErrorCode::EmptyInput, "empty training set");
  std::set<std::size_t> classes;
  for (const auto& ex : train_set) classes.insert(ex.label);
  for (const auto& ex : val_set) classes.insert(ex.label);
  if (classes.size() < 2) fail(ErrorCode::DegenerateDataset, "training data contains a single class");

  ModelParams params = init_params(arch, derive_seed(cfg.seed, "init"));
  AdamState state = AdamState::zeros_like(params);
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  const std::uint64_t dropout_base = derive_seed(cfg.seed, "dropout");
  std::uint64_t sample_counter = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result{params, {}, {}};
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      std::vector<std::uint64_t> seeds(batch.size());
      for (auto& s : seeds) s = derive_seed(dropout_base, sample_counter++);
      const auto r = backward_indices(params, train_set, batch, true, seeds);
      adam_step(params, r.gradients, state, cfg);
      loss_sum += r.loss * static_cast<double>(batch.size());
      correct += r.correct;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_acc = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (!val_set.empty()) {
      const auto v = evaluate_loss(params, val_set);
      rec.val_loss = v.loss;
      rec.val_acc = v.accuracy;
    } else {
      const auto v = evaluate_loss(params, train_set);
      rec.val_loss = v.loss;
      rec.val_acc = v.accuracy;
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);

    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      result.params = params;
      result.history.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.early_stop_patience && cfg.early_stop_patience > 0) {
      break;
    }
  }
  result.params.snap_to_float32();
  return result;
}

Split split_examples(std::span<const Example> dataset, const TrainConfig& cfg) {
  std::vector<std::size_t> labels;
  std::vector<std::int64_t> groups;
  for (const auto& ex : dataset) {
    labels.push_back(ex.label);
    groups.push_back(ex.group);
  }
  return split_dataset(labels, cfg.split_ratio, derive_seed(cfg.seed, "split"), cfg.stratified,
                       cfg.group_by_patient ? std::span<const std::int64_t>(groups) : std::span<const std::int64_t>());
}

TrainResult train(std::span<const Example> dataset, const ArchSpec& arch, const TrainConfig& cfg) {
  cfg.validate();
  std::set<std::size_t> classes;
  for (const auto& ex : dataset) classes.insert(ex.label);
  if (dataset.empty()) fail(ErrorCode::EmptyInput, "empty dataset");
  if (classes.size() < 2) fail(ErrorCode::DegenerateDataset, "dataset contains a single class");

  const Split split = split_examples(dataset, cfg);
  std::vector<Example> train_part, val_part;
  for (const auto i : split.train) train_part.push_back(dataset[i]);
  for (const auto i : split.test) val_part.push_back(dataset[i]);
  auto result = train(train_part, val_part, arch, cfg);
  result.split = split;
  return result;
}

}  // namespace voxmed

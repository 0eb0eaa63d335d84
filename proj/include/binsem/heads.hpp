#pragma once

#include <random>
#include <vector>

#include "binsem/checkpoint.hpp"
#include "binsem/encoder.hpp"
#include "binsem/metrics.hpp"

namespace binsem {

inline Eigen::RowVectorXd softmax_vector(const Eigen::RowVectorXd& z) {
  double mx = z.maxCoeff();
  Eigen::RowVectorXd e = (z.array() - mx).exp().matrix();
  return e / e.sum();
}

// DS-BinSim head: linear over [h_a | h_b | bos_sim], two outputs.
struct BinSimHead {
  Tensor w;  // (2*d_hidden + 1) x 2
  Tensor b;  // 1 x 2

  static BinSimHead build(int d_hidden, uint64_t seed) {
    BinSimHead h;
    std::mt19937_64 rng(fnv1a("binsim-head", seed));
    h.w.name = "head.w";
    h.w.init_normal(2 * d_hidden + 1, 2, std::sqrt(1.0 / (2 * d_hidden + 1)), rng);
    h.b.name = "head.b";
    h.b.init_zero(1, 2);
    h.b.decay = false;
    return h;
  }

  std::vector<Tensor*> tensors() { return {&w, &b}; }
  std::vector<const Tensor*> tensors() const { return {&w, &b}; }
};

// DS-Toolchain head: linear d_hidden -> C with an ordered class list.
struct ToolchainHead {
  Tensor w;  // d_hidden x C
  Tensor b;  // 1 x C
  std::vector<std::string> classes;

  static ToolchainHead build(int d_hidden, std::vector<std::string> classes, uint64_t seed) {
    if (classes.size() < 2) throw ValidationError("toolchain head needs at least two classes");
    ToolchainHead h;
    h.classes = std::move(classes);
    std::mt19937_64 rng(fnv1a("toolchain-head", seed));
    h.w.name = "head.w";
    h.w.init_normal(d_hidden, static_cast<Eigen::Index>(h.classes.size()), std::sqrt(1.0 / d_hidden), rng);
    h.b.name = "head.b";
    h.b.init_zero(1, static_cast<Eigen::Index>(h.classes.size()));
    h.b.decay = false;
    return h;
  }

  std::vector<Tensor*> tensors() { return {&w, &b}; }
  std::vector<const Tensor*> tensors() const { return {&w, &b}; }
};

namespace detail {

inline Eigen::RowVectorXd mean_pool(const Mat& hidden, const SeqCache& cache) {
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(hidden.cols());
  int n = 0;
  for (Eigen::Index t = 0; t < hidden.rows(); ++t)
    if (cache.keep[static_cast<size_t>(t)]) {
      sum += hidden.row(t);
      ++n;
    }
  return n ? Eigen::RowVectorXd(sum / n) : sum;
}

inline Mat mean_pool_backward(const Eigen::RowVectorXd& d_pooled, const SeqCache& cache) {
  Eigen::Index L = static_cast<Eigen::Index>(cache.keep.size());
  int n = 0;
  for (uint8_t k : cache.keep) n += k;
  Mat d_hidden = Mat::Zero(L, d_pooled.size());
  if (!n) return d_hidden;
  for (Eigen::Index t = 0; t < L; ++t)
    if (cache.keep[static_cast<size_t>(t)]) d_hidden.row(t) = d_pooled / n;
  return d_hidden;
}

}  // namespace detail

// Softmax(F([h_a | h_b | bos_sim])) per the DS-BinSim head layout; the
// BoS similarity occupies the final input slot.
inline Eigen::RowVectorXd binsim_logits(const EncoderModel& model, const BinSimHead& head, const TokenSequence& a,
                                        const TokenSequence& b, double bos_sim) {
  Eigen::RowVectorXd ha = embed_function(model, a);
  Eigen::RowVectorXd hb = embed_function(model, b);
  Eigen::RowVectorXd concat(2 * model.cfg.d_hidden + 1);
  concat << ha, hb, bos_sim;
  return softmax_vector(concat * head.w.value + head.b.value.row(0));
}

inline Eigen::RowVectorXd toolchain_logits(const EncoderModel& model, const ToolchainHead& head,
                                           const TokenSequence& x) {
  Eigen::RowVectorXd h = embed_function(model, x);
  return softmax_vector(h * head.w.value + head.b.value.row(0));
}

struct PairPrediction {
  double score = 0;  // probability of class 1 (similar)
  int label = 0;     // argmax, ties resolve to 1
};

inline PairPrediction predict_pair(const EncoderModel& model, const BinSimHead& head, const TokenSequence& a,
                                   const TokenSequence& b, double bos_sim) {
  Eigen::RowVectorXd p = binsim_logits(model, head, a, b, bos_sim);
  return {p(1), p(1) >= p(0) ? 1 : 0};
}

struct ToolchainPrediction {
  int class_id = 0;
  std::vector<double> probabilities;
};

inline ToolchainPrediction predict_toolchain(const EncoderModel& model, const ToolchainHead& head,
                                             const TokenSequence& x) {
  Eigen::RowVectorXd p = toolchain_logits(model, head, x);
  ToolchainPrediction out;
  Eigen::Index arg;
  p.maxCoeff(&arg);
  out.class_id = static_cast<int>(arg);
  out.probabilities.assign(p.data(), p.data() + p.size());
  return out;
}

// ---------------------------------------------------------------------------
// Fine-tuning
// ---------------------------------------------------------------------------

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double val_f1 = 0;
  bool f1_defined = false;

  json to_json() const {
    json j = {{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}, {"val_accuracy", val_accuracy}};
    j["val_f1"] = f1_defined ? json(val_f1) : json(nullptr);
    return j;
  }
};

struct BinSimFinetuneResult {
  EncoderModel model;
  BinSimHead head;
  std::vector<TrainLogEntry> log;
  std::vector<EpochMetrics> epochs;
};

struct ToolchainFinetuneResult {
  EncoderModel model;
  ToolchainHead head;
  std::vector<TrainLogEntry> log;
  std::vector<EpochMetrics> epochs;
};

namespace detail {

// One forward/backward for a pair example; returns the loss and accumulates
// gradients into head (and encoder unless frozen).
inline double binsim_example_grad(EncoderModel& model, BinSimHead& head, const PairExample& ex, bool train,
                                  std::mt19937_64* rng, bool freeze_encoder, double scale) {
  int dh = model.cfg.d_hidden;
  SeqCache ca, cb;
  Mat hidden_a = encoder_forward(model, ex.a, train, rng, &ca);
  Mat hidden_b = encoder_forward(model, ex.b, train, rng, &cb);
  Eigen::RowVectorXd ha = mean_pool(hidden_a, ca);
  Eigen::RowVectorXd hb = mean_pool(hidden_b, cb);
  Eigen::RowVectorXd concat(2 * dh + 1);
  concat << ha, hb, ex.bos_sim;
  Eigen::RowVectorXd probs = softmax_vector(concat * head.w.value + head.b.value.row(0));
  double loss = -std::log(std::max(probs(ex.label), 1e-300));

  Eigen::RowVectorXd dz = probs;
  dz(ex.label) -= 1.0;
  dz *= scale;
  head.w.grad += concat.transpose() * dz;
  head.b.grad.row(0) += dz;
  if (!freeze_encoder) {
    Eigen::RowVectorXd dconcat = dz * head.w.value.transpose();
    encoder_backward(model, ca, mean_pool_backward(dconcat.head(dh), ca));
    encoder_backward(model, cb, mean_pool_backward(dconcat.segment(dh, dh), cb));
  }
  return loss;
}

inline double toolchain_example_grad(EncoderModel& model, ToolchainHead& head, const ToolchainExample& ex, bool train,
                                     std::mt19937_64* rng, bool freeze_encoder, double scale) {
  SeqCache c;
  Mat hidden = encoder_forward(model, ex.x, train, rng, &c);
  Eigen::RowVectorXd h = mean_pool(hidden, c);
  Eigen::RowVectorXd probs = softmax_vector(h * head.w.value + head.b.value.row(0));
  if (ex.label < 0 || ex.label >= probs.size())
    throw ValidationError("toolchain label " + std::to_string(ex.label) + " outside class range");
  double loss = -std::log(std::max(probs(ex.label), 1e-300));

  Eigen::RowVectorXd dz = probs;
  dz(ex.label) -= 1.0;
  dz *= scale;
  head.w.grad += h.transpose() * dz;
  head.b.grad.row(0) += dz;
  if (!freeze_encoder)
    encoder_backward(model, c, mean_pool_backward(dz * head.w.value.transpose(), c));
  return loss;
}

}  // namespace detail

inline EpochMetrics evaluate_binsim(const EncoderModel& model, const BinSimHead& head,
                                    const std::vector<PairExample>& examples) {
  EpochMetrics m;
  std::vector<LabeledPrediction> preds;
  for (const auto& ex : examples) {
    Eigen::RowVectorXd p = binsim_logits(model, head, ex.a, ex.b, ex.bos_sim);
    m.val_loss += -std::log(std::max(p(ex.label), 1e-300));
    preds.push_back({p(1) >= p(0) ? 1 : 0, ex.label});
  }
  if (!examples.empty()) {
    m.val_loss /= static_cast<double>(examples.size());
    auto rep = summarize(confusion(preds));
    m.val_accuracy = rep.accuracy;
    m.val_f1 = rep.f1;
    m.f1_defined = rep.f1_defined;
  }
  return m;
}

inline EpochMetrics evaluate_toolchain(const EncoderModel& model, const ToolchainHead& head,
                                       const std::vector<ToolchainExample>& examples) {
  EpochMetrics m;
  size_t correct = 0;
  for (const auto& ex : examples) {
    Eigen::RowVectorXd p = toolchain_logits(model, head, ex.x);
    m.val_loss += -std::log(std::max(p(ex.label), 1e-300));
    Eigen::Index arg;
    p.maxCoeff(&arg);
    correct += arg == ex.label;
  }
  if (!examples.empty()) {
    m.val_loss /= static_cast<double>(examples.size());
    m.val_accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  }
  return m;
}

// DS-BinSim fine-tuning; the input model is taken by value so the parent
// checkpoint stays untouched (copy-on-write into the result).
inline BinSimFinetuneResult finetune_binsim(EncoderModel model, const std::vector<PairExample>& train,
                                            const std::vector<PairExample>& valid, const OptimizerConfig& oc,
                                            bool freeze_encoder, uint64_t seed,
                                            const EpochCallback& per_epoch = {}) {
  oc.validate();
  if (train.empty()) throw ValidationError("binsim training set is empty");
  for (const auto& ex : train)
    if (ex.label != 0 && ex.label != 1) throw ValidationError("binsim labels must be 0 or 1");

  BinSimFinetuneResult res;
  res.model = std::move(model);
  res.head = BinSimHead::build(res.model.cfg.d_hidden, seed);

  std::vector<Tensor*> params = res.head.tensors();
  if (!freeze_encoder) {
    // the MLM projection plays no role in this objective; leave it be
    for (Tensor* t : res.model.tensors())
      if (t->name.rfind("mlm.", 0) != 0) params.push_back(t);
  }
  AdamState adam;
  adam.init(params);

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(fnv1a("shuffle", seed));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  long steps_per_epoch = static_cast<long>((train.size() + oc.batch_size - 1) / static_cast<size_t>(oc.batch_size));
  long total_steps = steps_per_epoch * oc.epochs;
  long step = 0;

  for (int epoch = 1; epoch <= oc.epochs; ++epoch) {
    std::mt19937_64 epoch_rng(fnv1a("dropout", seed));
    double epoch_sum = 0;
    long epoch_steps = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(oc.batch_size)) {
      size_t end = std::min(order.size(), at + static_cast<size_t>(oc.batch_size));
      ++step;
      double lr = schedule_lr(oc, step, total_steps);
      for (Tensor* t : params) t->grad.setZero();
      double batch_loss = 0;
      double scale = 1.0 / static_cast<double>(end - at);
      for (size_t i = at; i < end; ++i)
        batch_loss += scale * detail::binsim_example_grad(res.model, res.head, train[order[i]], true, &epoch_rng,
                                                          freeze_encoder, scale);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("fine-tuning loss diverged at epoch " + std::to_string(epoch));
      adam_step(params, adam, oc, lr);
      res.log.push_back({epoch, step, batch_loss, lr});
      epoch_sum += batch_loss;
      ++epoch_steps;
    }
    EpochMetrics em = evaluate_binsim(res.model, res.head, valid);
    em.epoch = epoch;
    em.train_loss = epoch_steps ? epoch_sum / static_cast<double>(epoch_steps) : 0.0;
    res.epochs.push_back(em);
    if (per_epoch) per_epoch(epoch, res.model, res.log);
  }
  return res;
}

inline ToolchainFinetuneResult finetune_toolchain(EncoderModel model, const std::vector<ToolchainExample>& train,
                                                  const std::vector<ToolchainExample>& valid,
                                                  std::vector<std::string> classes, const OptimizerConfig& oc,
                                                  bool freeze_encoder, uint64_t seed,
                                                  const EpochCallback& per_epoch = {}) {
  oc.validate();
  if (train.empty()) throw ValidationError("toolchain training set is empty");
  for (const auto& ex : train)
    if (ex.label < 0 || static_cast<size_t>(ex.label) >= classes.size())
      throw ValidationError("toolchain label outside the class list");

  ToolchainFinetuneResult res;
  res.model = std::move(model);
  res.head = ToolchainHead::build(res.model.cfg.d_hidden, std::move(classes), seed);

  std::vector<Tensor*> params = res.head.tensors();
  if (!freeze_encoder) {
    for (Tensor* t : res.model.tensors())
      if (t->name.rfind("mlm.", 0) != 0) params.push_back(t);
  }
  AdamState adam;
  adam.init(params);

  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(fnv1a("shuffle", seed));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  long steps_per_epoch = static_cast<long>((train.size() + oc.batch_size - 1) / static_cast<size_t>(oc.batch_size));
  long total_steps = steps_per_epoch * oc.epochs;
  long step = 0;

  for (int epoch = 1; epoch <= oc.epochs; ++epoch) {
    std::mt19937_64 epoch_rng(fnv1a("dropout", seed));
    double epoch_sum = 0;
    long epoch_steps = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(oc.batch_size)) {
      size_t end = std::min(order.size(), at + static_cast<size_t>(oc.batch_size));
      ++step;
      double lr = schedule_lr(oc, step, total_steps);
      for (Tensor* t : params) t->grad.setZero();
      double batch_loss = 0;
      double scale = 1.0 / static_cast<double>(end - at);
      for (size_t i = at; i < end; ++i)
        batch_loss += scale * detail::toolchain_example_grad(res.model, res.head, train[order[i]], true, &epoch_rng,
                                                             freeze_encoder, scale);
      if (!std::isfinite(batch_loss))
        throw std::runtime_error("fine-tuning loss diverged at epoch " + std::to_string(epoch));
      adam_step(params, adam, oc, lr);
      res.log.push_back({epoch, step, batch_loss, lr});
      epoch_sum += batch_loss;
      ++epoch_steps;
    }
    EpochMetrics em = evaluate_toolchain(res.model, res.head, valid);
    em.epoch = epoch;
    em.train_loss = epoch_steps ? epoch_sum / static_cast<double>(epoch_steps) : 0.0;
    res.epochs.push_back(em);
    if (per_epoch) per_epoch(epoch, res.model, res.log);
  }
  return res;
}

// ---------------------------------------------------------------------------
// DS-Task checkpoints: DS-Pre layout + head tensors + task.json
// ---------------------------------------------------------------------------

struct TaskInfo {
  std::string task;  // "binsim" | "toolchain"
  std::vector<std::string> classes;
  std::string dataset_hash;
  std::string parent_hash;

  json to_json() const {
    return {{"task", task}, {"classes", classes}, {"dataset_hash", dataset_hash}, {"parent_hash", parent_hash}};
  }
  static TaskInfo from_json(const json& j) {
    TaskInfo t;
    t.task = j.at("task").get<std::string>();
    for (const auto& c : j.at("classes")) t.classes.push_back(c.get<std::string>());
    t.dataset_hash = j.at("dataset_hash").get<std::string>();
    t.parent_hash = j.at("parent_hash").get<std::string>();
    return t;
  }
};

inline void save_task_checkpoint(const fs::path& dir, const EncoderModel& model,
                                 const std::vector<const Tensor*>& head_tensors, const OptimizerConfig& oc,
                                 uint64_t seed, const std::string& vocab_hash, const TaskInfo& task,
                                 const std::vector<TrainLogEntry>& log = {}) {
  fs::create_directories(dir);
  write_config(dir, {model.cfg, oc, seed, vocab_hash});
  std::vector<const Tensor*> all = model.tensors();
  all.insert(all.end(), head_tensors.begin(), head_tensors.end());
  write_weights(dir, all);
  std::ofstream tf(dir / "task.json");
  tf << task.to_json().dump(2) << "\n";
  if (!log.empty()) write_training_log(dir, log);
}

struct LoadedTaskCheckpoint {
  EncoderModel model;
  CheckpointInfo info;
  TaskInfo task;
  BinSimHead binsim;        // populated when task.task == "binsim"
  ToolchainHead toolchain;  // populated when task.task == "toolchain"
};

inline LoadedTaskCheckpoint load_task_checkpoint(const fs::path& dir) {
  LoadedTaskCheckpoint lc;
  lc.info = read_config(dir);
  std::ifstream tf(dir / "task.json");
  if (!tf) throw ValidationError("missing task.json in " + dir.string() + " (not a fine-tuned checkpoint)");
  lc.task = TaskInfo::from_json(json::parse(tf));
  lc.model = EncoderModel::build(lc.info.encoder, lc.info.seed);
  auto weights = read_weights(dir);
  assign_weights(lc.model.tensors(), weights);
  if (lc.task.task == "binsim") {
    lc.binsim = BinSimHead::build(lc.info.encoder.d_hidden, lc.info.seed);
    assign_weights(lc.binsim.tensors(), weights);
  } else if (lc.task.task == "toolchain") {
    lc.toolchain = ToolchainHead::build(lc.info.encoder.d_hidden, lc.task.classes, lc.info.seed);
    assign_weights(lc.toolchain.tensors(), weights);
  } else {
    throw ValidationError("unknown task kind \"" + lc.task.task + "\" in " + dir.string());
  }
  return lc;
}

}  // namespace binsem

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "binsem/heads.hpp"
#include "support/fixtures.hpp"

using namespace binsem;

namespace {

EncoderConfig head_config(int vocab) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_embed = 8;
  cfg.d_hidden = 8;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.max_seq = 16;
  cfg.n_conv_layers = 1;
  cfg.conv_kernel = 3;
  cfg.d_ffn = 16;
  cfg.dropout_pos = cfg.dropout_conv = cfg.dropout_ffn = cfg.dropout_attn = 0.0;
  return cfg;
}

TokenSequence seq_of(std::vector<int32_t> content, int max_seq) {
  TokenSequence s;
  s.ids.assign(static_cast<size_t>(max_seq), Vocabulary::pad_id);
  size_t pos = 0;
  s.ids[pos++] = Vocabulary::sos_id;
  for (int32_t id : content) s.ids[pos++] = id;
  s.ids[pos++] = Vocabulary::eos_id;
  s.true_len = static_cast<int>(pos);
  return s;
}

// Separable toy set: positives share the planted motif token in both legs.
std::vector<PairExample> motif_pairs(int n, int vocab, int max_seq, uint64_t seed) {
  std::mt19937_64 rng(seed);
  const int32_t motif = 5;
  std::vector<PairExample> out;
  for (int i = 0; i < n; ++i) {
    int label = i % 2;
    auto body = [&](bool with_motif) {
      std::vector<int32_t> ids;
      int len = 6 + static_cast<int>(rng() % 5);
      for (int t = 0; t < len; ++t) ids.push_back(6 + static_cast<int32_t>(rng() % (vocab - 6)));
      if (with_motif) ids[rng() % ids.size()] = motif;
      return ids;
    };
    PairExample ex;
    ex.a = seq_of(body(label == 1), max_seq);
    ex.b = seq_of(body(label == 1), max_seq);
    ex.bos_sim = label == 1 ? 0.9 : 0.1;
    ex.label = label;
    ex.pair_key = "(CO0,GO3)";
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<ToolchainExample> tail_examples(int n, int vocab, int max_seq, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<ToolchainExample> out;
  for (int i = 0; i < n; ++i) {
    int label = i % 2;
    std::vector<int32_t> ids;
    int len = 6 + static_cast<int>(rng() % 5);
    for (int t = 0; t < len; ++t) ids.push_back(7 + static_cast<int32_t>(rng() % (vocab - 7)));
    ids.push_back(label ? 5 : 6);  // class-revealing tail token
    ToolchainExample ex;
    ex.x = seq_of(ids, max_seq);
    ex.label = label;
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

TEST_CASE("binsim head algebra") {
  EncoderConfig cfg = head_config(12);
  auto model = EncoderModel::build(cfg, 7);
  auto head = BinSimHead::build(cfg.d_hidden, 3);
  auto a = seq_of({5, 6, 7}, cfg.max_seq);
  auto b = seq_of({8, 9}, cfg.max_seq);

  SECTION("probabilities sum to one") {
    auto p = binsim_logits(model, head, a, b, 0.4);
    CHECK(p.sum() == Catch::Approx(1.0).margin(1e-6));
    CHECK(p.minCoeff() >= 0.0);
  }

  SECTION("zero weights and bias give the uniform distribution") {
    head.w.value.setZero();
    head.b.value.setZero();
    auto p = binsim_logits(model, head, a, b, 0.77);
    CHECK(p(0) == Catch::Approx(0.5));
    CHECK(p(1) == Catch::Approx(0.5));
  }

  SECTION("swapping inputs together with the weight blocks changes nothing") {
    int dh = cfg.d_hidden;
    BinSimHead swapped = head;
    swapped.w.value.topRows(dh) = head.w.value.middleRows(dh, dh);
    swapped.w.value.middleRows(dh, dh) = head.w.value.topRows(dh);
    auto p1 = binsim_logits(model, head, a, b, 0.3);
    auto p2 = binsim_logits(model, swapped, b, a, 0.3);
    CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-12);
  }

  SECTION("a positive bos weight makes class 1 monotone in bos_sim") {
    head.w.value.setZero();
    head.b.value.setZero();
    head.w.value(2 * cfg.d_hidden, 1) = 2.0;  // only the bos slot drives class 1
    double prev = 0;
    for (double s : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      auto p = binsim_logits(model, head, a, b, s);
      if (s > 0) CHECK(p(1) > prev);
      prev = p(1);
    }
  }
}

TEST_CASE("toolchain head algebra") {
  EncoderConfig cfg = head_config(12);
  auto model = EncoderModel::build(cfg, 7);
  auto x = seq_of({5, 6, 7, 8}, cfg.max_seq);

  SECTION("probabilities sum to one and match the class count") {
    auto head = ToolchainHead::build(cfg.d_hidden, {"O0", "O1", "O3"}, 3);
    auto p = toolchain_logits(model, head, x);
    CHECK(p.size() == 3);
    CHECK(p.sum() == Catch::Approx(1.0).margin(1e-6));
  }

  SECTION("two classes with zero parameters give (0.5, 0.5)") {
    auto head = ToolchainHead::build(cfg.d_hidden, {"gcc", "clang"}, 3);
    head.w.value.setZero();
    head.b.value.setZero();
    auto p = toolchain_logits(model, head, x);
    CHECK(p(0) == Catch::Approx(0.5));
    CHECK(p(1) == Catch::Approx(0.5));
  }

  SECTION("argmax is invariant under adding a constant to all logits") {
    auto head = ToolchainHead::build(cfg.d_hidden, {"a", "b", "c"}, 5);
    auto before = predict_toolchain(model, head, x);
    head.b.value.array() += 11.5;
    auto after = predict_toolchain(model, head, x);
    CHECK(before.class_id == after.class_id);
  }

  SECTION("argmax class carries maximal probability") {
    auto head = ToolchainHead::build(cfg.d_hidden, {"a", "b", "c"}, 9);
    auto pred = predict_toolchain(model, head, x);
    for (double p : pred.probabilities) CHECK(p <= pred.probabilities[static_cast<size_t>(pred.class_id)] + 1e-15);
  }
}

TEST_CASE("predict_pair tie and score rules") {
  EncoderConfig cfg = head_config(12);
  auto model = EncoderModel::build(cfg, 7);
  auto head = BinSimHead::build(cfg.d_hidden, 3);
  auto a = seq_of({5, 6}, cfg.max_seq);
  auto b = seq_of({7, 8}, cfg.max_seq);

  auto pred = predict_pair(model, head, a, b, 0.5);
  CHECK((pred.label == 1) == (pred.score >= 0.5));

  head.w.value.setZero();
  head.b.value.setZero();
  auto tie = predict_pair(model, head, a, b, 0.5);
  CHECK(tie.score == Catch::Approx(0.5));
  CHECK(tie.label == 1);  // ties resolve to 1
}

TEST_CASE("binsim fine-tuning overfits a separable toy set") {
  EncoderConfig cfg = head_config(24);
  auto model = EncoderModel::build(cfg, 21);
  auto pairs = motif_pairs(100, cfg.vocab_size, cfg.max_seq, 5);
  std::vector<PairExample> train(pairs.begin(), pairs.begin() + 84);
  std::vector<PairExample> valid(pairs.begin() + 84, pairs.end());

  OptimizerConfig oc;
  oc.epochs = 5;
  oc.batch_size = 10;
  oc.lr = 1e-2;

  auto res = finetune_binsim(model, train, valid, oc, false, 17);
  auto train_metrics = evaluate_binsim(res.model, res.head, train);
  CHECK(train_metrics.val_accuracy >= 0.95);

  // an overfit model labels an identical pair with bos_sim 1 as similar
  auto ident = train[1];  // label-1 examples sit at odd indices
  REQUIRE(ident.label == 1);
  auto pred = predict_pair(res.model, res.head, ident.a, ident.a, 1.0);
  CHECK(pred.label == 1);
}

TEST_CASE("toolchain fine-tuning overfits and respects single-class data") {
  EncoderConfig cfg = head_config(24);
  auto model = EncoderModel::build(cfg, 23);
  auto examples = tail_examples(60, cfg.vocab_size, cfg.max_seq, 9);
  std::vector<ToolchainExample> train(examples.begin(), examples.begin() + 50);
  std::vector<ToolchainExample> valid(examples.begin() + 50, examples.end());

  OptimizerConfig oc;
  oc.epochs = 10;
  oc.batch_size = 10;
  oc.lr = 1e-2;

  SECTION("overfit oracle") {
    auto res = finetune_toolchain(model, train, valid, {"gcc", "clang"}, oc, false, 19);
    auto m = evaluate_toolchain(res.model, res.head, train);
    CHECK(m.val_accuracy >= 0.95);
  }

  SECTION("single-class dataset predicts that class everywhere") {
    std::vector<ToolchainExample> ones;
    for (const auto& ex : train)
      if (ex.label == 1) ones.push_back(ex);
    auto res = finetune_toolchain(model, ones, {}, {"gcc", "clang"}, oc, false, 19);
    for (const auto& ex : ones) {
      auto pred = predict_toolchain(res.model, res.head, ex.x);
      CHECK(pred.class_id == 1);
    }
  }
}

TEST_CASE("freezing the encoder leaves its weights bitwise unchanged") {
  EncoderConfig cfg = head_config(24);
  auto model = EncoderModel::build(cfg, 31);
  auto pairs = motif_pairs(20, cfg.vocab_size, cfg.max_seq, 3);

  std::vector<Mat> before;
  for (const Tensor* t : model.tensors()) before.push_back(t->value);

  OptimizerConfig oc;
  oc.epochs = 2;
  oc.batch_size = 5;
  auto res = finetune_binsim(model, pairs, {}, oc, true, 7);

  auto after = res.model.tensors();
  size_t i = 0;
  for (const Tensor* t : after) {
    CHECK(std::memcmp(before[i].data(), t->value.data(), sizeof(double) * t->count()) == 0);
    ++i;
  }
}

TEST_CASE("zero learning rate keeps validation metrics constant") {
  EncoderConfig cfg = head_config(24);
  auto model = EncoderModel::build(cfg, 37);
  auto pairs = motif_pairs(24, cfg.vocab_size, cfg.max_seq, 13);
  std::vector<PairExample> train(pairs.begin(), pairs.begin() + 16);
  std::vector<PairExample> valid(pairs.begin() + 16, pairs.end());

  OptimizerConfig oc;
  oc.epochs = 3;
  oc.batch_size = 8;
  oc.lr = 0.0;
  auto res = finetune_binsim(model, train, valid, oc, false, 41);
  REQUIRE(res.epochs.size() == 3);
  for (const auto& em : res.epochs) {
    CHECK(em.val_loss == Catch::Approx(res.epochs[0].val_loss).margin(1e-12));
    CHECK(em.val_accuracy == res.epochs[0].val_accuracy);
  }
}

TEST_CASE("cross entropy on one-hot targets is the negative log of the true-class probability") {
  EncoderConfig cfg = head_config(12);
  auto model = EncoderModel::build(cfg, 7);
  auto head = BinSimHead::build(cfg.d_hidden, 3);
  PairExample ex;
  ex.a = seq_of({5, 6}, cfg.max_seq);
  ex.b = seq_of({7, 8}, cfg.max_seq);
  ex.bos_sim = 0.25;
  ex.label = 1;
  auto m = evaluate_binsim(model, head, {ex});
  auto p = binsim_logits(model, head, ex.a, ex.b, ex.bos_sim);
  CHECK(m.val_loss == Catch::Approx(-std::log(p(1))));
}

TEST_CASE("task checkpoints round-trip and keep the parent intact") {
  namespace fs = std::filesystem;
  EncoderConfig cfg = head_config(24);
  auto model = EncoderModel::build(cfg, 43);
  OptimizerConfig oc;
  oc.epochs = 1;
  oc.batch_size = 8;

  fs::path parent = fs::temp_directory_path() / "binsem_parent_ckpt";
  fs::path child = fs::temp_directory_path() / "binsem_task_ckpt";
  fs::remove_all(parent);
  fs::remove_all(child);
  save_encoder_checkpoint(parent, model, oc, 43, "beef");
  std::string parent_hash = checkpoint_hash(parent);

  auto loaded = load_encoder_checkpoint(parent);
  auto pairs = motif_pairs(16, cfg.vocab_size, cfg.max_seq, 3);
  auto res = finetune_binsim(loaded.model, pairs, {}, oc, false, 3);

  TaskInfo info{"binsim", {"dissimilar", "similar"}, "dshash", parent_hash};
  save_task_checkpoint(child, res.model, std::as_const(res.head).tensors(), oc, 3, "beef", info, res.log);

  CHECK(checkpoint_hash(parent) == parent_hash);  // parent untouched

  auto task = load_task_checkpoint(child);
  CHECK(task.task.task == "binsim");
  CHECK(task.task.parent_hash == parent_hash);
  CHECK((task.binsim.w.value - res.head.w.value).cwiseAbs().maxCoeff() == 0.0);
  auto p1 = binsim_logits(res.model, res.head, pairs[0].a, pairs[0].b, pairs[0].bos_sim);
  auto p2 = binsim_logits(task.model, task.binsim, pairs[0].a, pairs[0].b, pairs[0].bos_sim);
  CHECK((p1 - p2).cwiseAbs().maxCoeff() < 1e-15);

  fs::remove_all(parent);
  fs::remove_all(child);
}

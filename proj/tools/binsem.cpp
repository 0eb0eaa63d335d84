// binsem: disassembly normalization, MLM pre-training, and fine-tuned
// similarity / toolchain classification over x86-64 functions.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "binsem/asm_text.hpp"
#include "binsem/checkpoint.hpp"
#include "binsem/config.hpp"
#include "binsem/corpus.hpp"
#include "binsem/encoder.hpp"
#include "binsem/heads.hpp"
#include "binsem/ingest.hpp"
#include "binsem/metrics.hpp"
#include "binsem/normalizer.hpp"

namespace fs = std::filesystem;
using namespace binsem;

namespace {

struct CommonOpts {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "pipeline config file (JSON)");
  cmd->add_option("--seed", opts.seed, "run seed")->each([&opts](const std::string&) { opts.seed_set = true; });
}

PipelineConfig resolve_config(const CommonOpts& opts) {
  PipelineConfig cfg;
  if (!opts.config_path.empty()) cfg = PipelineConfig::load(opts.config_path);
  if (opts.seed_set) cfg.seed = opts.seed;
  return cfg;
}

std::vector<NormalizedFunction> read_nf_file(const std::string& path) {
  auto in = open_input(path);
  return read_nfs(in);
}

Vocabulary load_vocab(const std::string& path) {
  auto in = open_input(path);
  return Vocabulary::load_tsv(in);
}

// Functions longer than max_seq-2 cannot be encoded; drop them with a note
// so stage outputs stay composable across profiles.
std::vector<TokenSequence> encode_all(const std::vector<NormalizedFunction>& nfs, const Vocabulary& vocab,
                                      int max_seq, std::vector<const NormalizedFunction*>* kept = nullptr) {
  std::vector<TokenSequence> seqs;
  size_t dropped = 0;
  for (const auto& nf : nfs) {
    if (nf.tokens.size() + 2 > static_cast<size_t>(max_seq)) {
      ++dropped;
      continue;
    }
    seqs.push_back(encode(nf, vocab, max_seq));
    if (kept) kept->push_back(&nf);
  }
  if (dropped)
    std::cerr << "note: dropped " << dropped << " function(s) longer than max_seq-2 = " << (max_seq - 2) << "\n";
  return seqs;
}

void check_vocab_hash(const std::string& dataset_hash, const std::string& ckpt_hash) {
  if (dataset_hash != ckpt_hash)
    throw ValidationError("vocab hash mismatch: dataset " + dataset_hash + " vs checkpoint " + ckpt_hash);
}

DatasetMeta read_meta(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw ValidationError("missing meta.json in " + dir.string());
  return DatasetMeta::from_json(json::parse(in));
}

double epoch_mean_loss(const std::vector<TrainLogEntry>& log, int epoch) {
  double sum = 0;
  long n = 0;
  for (const auto& e : log)
    if (e.epoch == epoch) {
      sum += e.loss;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

int run_ingest(const std::string& input, const std::string& asm_path, const std::string& sections_path,
               const std::string& output, const FunctionRecord& meta) {
  std::vector<FunctionRecord> records;
  if (!asm_path.empty()) {
    SectionMap hints;
    if (!sections_path.empty()) {
      auto in = open_input(sections_path);
      hints = SectionMap::from_json(json::parse(in));
    }
    std::ifstream af(asm_path);
    if (!af) throw ValidationError("cannot open " + asm_path);
    std::ostringstream text;
    text << af.rdbuf();
    auto result = parse_asm_text(text.str(), hints, meta);
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    records.push_back(std::move(result.record));
  } else {
    auto in = open_input(input);
    records = parse_records(in);
  }
  auto out = open_output(output);
  serialize_records(records, out);
  std::cerr << "ingested " << records.size() << " function(s) -> " << output << "\n";
  return 0;
}

int run_normalize(const std::string& input, const std::string& output, const PipelineConfig& cfg, bool no_filter) {
  auto in = open_input(input);
  auto records = parse_records(in);

  std::vector<NormalizedFunction> nfs(records.size());
  unsigned n_threads = std::min<size_t>(worker_threads(), std::max<size_t>(records.size(), 1));
  if (n_threads <= 1 || records.size() < 2) {
    for (size_t i = 0; i < records.size(); ++i) nfs[i] = normalize_function(records[i], cfg.norm);
  } else {
    std::atomic<size_t> next{0};
    std::atomic<bool> failed{false};
    std::string error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t)
      pool.emplace_back([&] {
        size_t i;
        while ((i = next.fetch_add(1)) < records.size() && !failed) {
          try {
            nfs[i] = normalize_function(records[i], cfg.norm);
          } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(error_mu);
            error = records[i].function_name + ": " + e.what();
            failed = true;
          }
        }
      });
    for (auto& th : pool) th.join();
    if (failed) throw ValidationError(error);
  }

  size_t before = nfs.size();
  if (!no_filter) nfs = filter_functions(nfs);
  auto out = open_output(output);
  write_nfs(nfs, out);
  cfg.echo_next_to(output);
  std::cerr << "normalized " << before << " function(s), kept " << nfs.size() << " -> " << output << "\n";
  return 0;
}

int run_vocab(const std::string& input, const std::string& output, const PipelineConfig& cfg) {
  auto nfs = read_nf_file(input);
  auto vocab = Vocabulary::build(nfs);
  auto out = open_output(output);
  vocab.save_tsv(out);
  cfg.echo_next_to(output);
  std::cerr << "vocabulary of " << vocab.size() << " tokens (incl. 5 specials) -> " << output << "\n";
  return 0;
}

int run_stats(const std::string& input, const std::string& records_path, const std::string& holdout_path,
              double holdout_ratio, const std::string& output, const PipelineConfig& cfg) {
  auto nfs = read_nf_file(input);
  std::vector<FunctionRecord> records;
  if (!records_path.empty()) {
    auto in = open_input(records_path);
    records = parse_records(in);
  }

  StatsReport rep;
  if (!holdout_path.empty()) {
    auto holdout = read_nf_file(holdout_path);
    rep = corpus_stats(nfs, records, &holdout);
  } else if (holdout_ratio > 0 && nfs.size() > 1) {
    auto parts = split(nfs, {1.0 - holdout_ratio, holdout_ratio, 0.0}, cfg.seed);
    rep = corpus_stats(parts[0], records, &parts[1]);
  } else {
    rep = corpus_stats(nfs, records);
  }
  auto out = open_output(output);
  out << rep.to_json().dump(2) << "\n";
  cfg.echo_next_to(output);
  return 0;
}

int run_pretrain(const std::string& input, const std::string& vocab_path, const std::string& out_dir,
                 PipelineConfig cfg) {
  auto vocab = load_vocab(vocab_path);
  cfg.encoder.vocab_size = static_cast<int>(vocab.size());
  cfg.encoder.validate();
  cfg.optimizer.validate();

  auto nfs = read_nf_file(input);
  auto seqs = encode_all(nfs, vocab, cfg.encoder.max_seq);
  std::string vocab_hash = hash_hex(vocab.hash());

  fs::create_directories(out_dir);
  cfg.echo_next_to(out_dir);
  auto t0 = std::chrono::steady_clock::now();
  auto res = pretrain(seqs, cfg.encoder, cfg.optimizer, cfg.seed,
                      [&](int epoch, const EncoderModel& model, const std::vector<TrainLogEntry>& log) {
                        save_encoder_checkpoint(out_dir, model, cfg.optimizer, cfg.seed, vocab_hash, log);
                        std::cerr << "epoch " << epoch << " mean loss " << epoch_mean_loss(log, epoch) << "\n";
                      });
  auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cerr << "pre-trained " << seqs.size() << " sequences, " << res.model.parameter_count() << " parameters, "
            << secs << "s -> " << out_dir << "\n";
  return 0;
}

int run_make_dataset(const std::string& input, const std::string& vocab_path, const std::string& task,
                     const std::string& out_dir, PipelineConfig cfg) {
  auto vocab = load_vocab(vocab_path);
  auto nfs = read_nf_file(input);

  std::vector<NormalizedFunction> usable;
  for (const auto& nf : nfs)
    if (nf.tokens.size() + 2 <= static_cast<size_t>(cfg.encoder.max_seq)) usable.push_back(nf);
  if (usable.size() < nfs.size())
    std::cerr << "note: dropped " << (nfs.size() - usable.size()) << " over-length function(s)\n";

  fs::create_directories(out_dir);
  DatasetMeta meta;
  meta.vocab_hash = hash_hex(vocab.hash());
  meta.max_seq = cfg.encoder.max_seq;

  const char* names[3] = {"train", "valid", "test"};
  if (task == "binsim") {
    auto pairs = make_pairs(usable, vocab, cfg.encoder.max_seq, cfg.ratio_pos, cfg.seed);
    auto parts = split(pairs, cfg.split_ratios, cfg.seed);
    for (int i = 0; i < 3; ++i) {
      auto out = open_output((fs::path(out_dir) / (std::string(names[i]) + ".jsonl")).string());
      write_pairs(parts[static_cast<size_t>(i)], out);
      meta.counts[names[i]] = parts[static_cast<size_t>(i)].size();
    }
    meta.kind = "binsim";
    meta.classes = {"dissimilar", "similar"};
  } else {
    auto ds = make_toolchain(usable, toolchain_task_from_string(task), vocab, cfg.encoder.max_seq);
    auto parts = split(ds.examples, cfg.split_ratios, cfg.seed);
    for (int i = 0; i < 3; ++i) {
      auto out = open_output((fs::path(out_dir) / (std::string(names[i]) + ".jsonl")).string());
      write_toolchain(parts[static_cast<size_t>(i)], out);
      meta.counts[names[i]] = parts[static_cast<size_t>(i)].size();
    }
    meta.kind = "toolchain";
    meta.classes = ds.classes;
    for (size_t c = 0; c < ds.classes.size(); ++c) meta.counts["class_" + ds.classes[c]] = ds.class_counts[c];
    std::cerr << "class balance:";
    for (size_t c = 0; c < ds.classes.size(); ++c) std::cerr << " " << ds.classes[c] << "=" << ds.class_counts[c];
    std::cerr << "\n";
  }

  std::ofstream mf(fs::path(out_dir) / "meta.json");
  mf << meta.to_json().dump(2) << "\n";
  cfg.echo_next_to(out_dir);
  std::cerr << "dataset (" << meta.kind << ") -> " << out_dir << "\n";
  return 0;
}

int run_finetune(const std::string& ckpt_dir, const std::string& ds_dir, const std::string& out_dir,
                 std::string task, bool freeze, const CommonOpts& common) {
  auto parent = load_encoder_checkpoint(ckpt_dir);
  auto meta = read_meta(ds_dir);
  check_vocab_hash(meta.vocab_hash, parent.info.vocab_hash);
  if (meta.max_seq > parent.info.encoder.max_seq)
    throw ValidationError("dataset max_seq exceeds the checkpoint's maximum sequence length");

  if (task.empty() || task == "auto") task = meta.kind;
  bool want_binsim = task == "binsim";
  if (want_binsim != (meta.kind == "binsim"))
    throw ValidationError("task " + task + " does not match dataset kind " + meta.kind);

  OptimizerConfig oc = parent.info.optimizer;
  uint64_t seed = parent.info.seed;
  if (!common.config_path.empty()) oc = PipelineConfig::load(common.config_path).optimizer;
  if (common.seed_set) seed = common.seed;

  auto train_in = open_input((fs::path(ds_dir) / "train.jsonl").string());
  auto valid_in = open_input((fs::path(ds_dir) / "valid.jsonl").string());

  TaskInfo info;
  info.dataset_hash = hash_hex(hash_file((fs::path(ds_dir) / "train.jsonl").string()));
  info.parent_hash = checkpoint_hash(ckpt_dir);
  info.classes = meta.classes;

  auto emit = [&](const std::vector<EpochMetrics>& epochs) {
    json arr = json::array();
    for (const auto& em : epochs) {
      arr.push_back(em.to_json());
      std::cerr << "epoch " << em.epoch << " train_loss " << em.train_loss << " val_loss " << em.val_loss
                << " val_acc " << em.val_accuracy << "\n";
    }
    std::ofstream ef(fs::path(out_dir) / "epochs.json");
    ef << arr.dump(2) << "\n";
  };

  fs::create_directories(out_dir);
  if (want_binsim) {
    auto train = read_pairs(train_in, meta.max_seq);
    auto valid = read_pairs(valid_in, meta.max_seq);
    auto res = finetune_binsim(parent.model, train, valid, oc, freeze, seed);
    info.task = "binsim";
    save_task_checkpoint(out_dir, res.model, std::as_const(res.head).tensors(), oc, seed, parent.info.vocab_hash,
                         info, res.log);
    emit(res.epochs);
  } else {
    auto train = read_toolchain(train_in, meta.max_seq);
    auto valid = read_toolchain(valid_in, meta.max_seq);
    auto res = finetune_toolchain(parent.model, train, valid, meta.classes, oc, freeze, seed);
    info.task = "toolchain";
    save_task_checkpoint(out_dir, res.model, std::as_const(res.head).tensors(), oc, seed, parent.info.vocab_hash,
                         info, res.log);
    emit(res.epochs);
  }
  std::cerr << "fine-tuned (" << info.task << ") -> " << out_dir << "\n";
  return 0;
}

void maybe_check_sidecar_meta(const std::string& data_path, const CheckpointInfo& info, int* max_seq) {
  fs::path dir = fs::path(data_path).parent_path();
  if (!dir.empty() && fs::exists(dir / "meta.json")) {
    auto meta = read_meta(dir);
    check_vocab_hash(meta.vocab_hash, info.vocab_hash);
    *max_seq = meta.max_seq;
  }
}

int run_predict(const std::string& ckpt_dir, const std::string& input, const std::string& output) {
  auto ckpt = load_task_checkpoint(ckpt_dir);
  int max_seq = ckpt.info.encoder.max_seq;
  maybe_check_sidecar_meta(input, ckpt.info, &max_seq);
  auto in = open_input(input);
  auto out = open_output(output);

  if (ckpt.task.task == "binsim") {
    auto pairs = read_pairs(in, max_seq);
    for (const auto& p : pairs) {
      auto pred = predict_pair(ckpt.model, ckpt.binsim, p.a, p.b, p.bos_sim);
      json j = {{"score", pred.score}, {"label", pred.label}};
      if (!p.pair_key.empty()) j["pair"] = p.pair_key;
      out << j.dump() << "\n";
    }
    std::cerr << "predicted " << pairs.size() << " pair(s) -> " << output << "\n";
  } else {
    auto xs = read_toolchain(in, max_seq);
    for (const auto& x : xs) {
      auto pred = predict_toolchain(ckpt.model, ckpt.toolchain, x.x);
      json j = {{"class", pred.class_id},
                {"class_label", ckpt.task.classes[static_cast<size_t>(pred.class_id)]},
                {"probabilities", pred.probabilities}};
      out << j.dump() << "\n";
    }
    std::cerr << "predicted " << xs.size() << " example(s) -> " << output << "\n";
  }
  return 0;
}

int run_eval(const std::string& ckpt_dir, const std::string& input, const std::string& output,
             const std::string& csv_path, bool by_pair, bool weighted) {
  auto ckpt = load_task_checkpoint(ckpt_dir);
  int max_seq = ckpt.info.encoder.max_seq;
  maybe_check_sidecar_meta(input, ckpt.info, &max_seq);
  auto in = open_input(input);

  json report;
  report["task"] = ckpt.task.task;
  report["checkpoint"] = ckpt_dir;

  if (ckpt.task.task == "binsim") {
    auto pairs = read_pairs(in, max_seq);
    if (pairs.empty()) throw ValidationError("evaluation set is empty");
    std::vector<LabeledPrediction> preds;
    std::vector<ScoredPrediction> scores;
    std::vector<GroupedPrediction> grouped;
    for (const auto& p : pairs) {
      auto pred = predict_pair(ckpt.model, ckpt.binsim, p.a, p.b, p.bos_sim);
      preds.push_back({pred.label, p.label});
      scores.push_back({pred.score, p.label});
      grouped.push_back({p.pair_key.empty() ? "(all)" : p.pair_key, pred.label, p.label, pred.score});
    }
    MetricsReport m = summarize(confusion(preds));
    m.auc = roc_auc(scores);
    m.auc_defined = true;
    report["n"] = pairs.size();
    report["metrics"] = m.to_json();
    if (by_pair) {
      auto rep = report_by_pair(grouped, weighted);
      report["by_pair"] = pair_report_json(rep);
      if (!csv_path.empty()) {
        auto csv = open_output(csv_path);
        pair_report_csv(rep, csv);
      }
    }
  } else {
    auto xs = read_toolchain(in, max_seq);
    if (xs.empty()) throw ValidationError("evaluation set is empty");
    std::vector<LabeledPrediction> preds;
    for (const auto& x : xs) {
      auto pred = predict_toolchain(ckpt.model, ckpt.toolchain, x.x);
      preds.push_back({pred.class_id, x.label});
    }
    auto macro = multiclass_macro(preds, ckpt.task.classes.size());
    json per_class = json::array();
    for (size_t c = 0; c < ckpt.task.classes.size(); ++c)
      per_class.push_back({{"class", ckpt.task.classes[c]}, {"metrics", macro.per_class[c].to_json()}});
    report["n"] = xs.size();
    report["metrics"] = {{"accuracy", macro.accuracy}, {"precision", macro.precision},
                         {"recall", macro.recall},     {"f1", macro.f1},
                         {"auc", nullptr}};
    report["per_class"] = per_class;
  }

  auto out = open_output(output);
  out << report.dump(2) << "\n";
  std::cerr << "evaluation report -> " << output << "\n";
  return 0;
}

int run_embed(const std::string& ckpt_dir, const std::string& input, const std::string& vocab_path,
              const std::string& output) {
  auto ckpt = load_encoder_checkpoint(ckpt_dir);
  auto vocab = load_vocab(vocab_path);
  check_vocab_hash(hash_hex(vocab.hash()), ckpt.info.vocab_hash);
  auto nfs = read_nf_file(input);
  std::vector<const NormalizedFunction*> kept;
  auto seqs = encode_all(nfs, vocab, ckpt.info.encoder.max_seq, &kept);

  auto out = open_output(output);
  for (size_t i = 0; i < seqs.size(); ++i) {
    auto e = embed_function(ckpt.model, seqs[i]);
    json j;
    j["id"] = {{"binary_id", kept[i]->id.binary_id},
               {"function_name", kept[i]->id.function_name},
               {"compiler", kept[i]->id.compiler},
               {"opt_level", kept[i]->id.opt_level}};
    j["embedding"] = std::vector<double>(e.data(), e.data() + e.size());
    out << j.dump() << "\n";
  }
  std::cerr << "embedded " << seqs.size() << " function(s) -> " << output << "\n";
  return 0;
}

int run_export_attn(const std::string& ckpt_dir, const std::string& input, const std::string& vocab_path,
                    const std::string& output, size_t limit) {
  auto ckpt = load_encoder_checkpoint(ckpt_dir);
  auto vocab = load_vocab(vocab_path);
  check_vocab_hash(hash_hex(vocab.hash()), ckpt.info.vocab_hash);
  auto nfs = read_nf_file(input);
  std::vector<const NormalizedFunction*> kept;
  auto seqs = encode_all(nfs, vocab, ckpt.info.encoder.max_seq, &kept);

  json functions = json::array();
  for (size_t i = 0; i < seqs.size() && i < limit; ++i) {
    auto attn = export_attention(ckpt.model, seqs[i]);
    json entry = attention_to_json(attn);
    entry["id"] = {{"binary_id", kept[i]->id.binary_id}, {"function_name", kept[i]->id.function_name}};
    entry["true_len"] = seqs[i].true_len;
    functions.push_back(std::move(entry));
  }
  json j = {{"n_layers", ckpt.info.encoder.n_layers},
            {"n_heads", ckpt.info.encoder.n_heads},
            {"max_seq", ckpt.info.encoder.max_seq},
            {"functions", functions}};
  auto out = open_output(output);
  out << j.dump() << "\n";
  std::cerr << "exported attention for " << functions.size() << " function(s) -> " << output << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"binary function normalization, pre-training and provenance toolkit"};
  app.require_subcommand(1);

  std::function<int()> action;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate disassembly JSONL or convert annotated asm text");
  static CommonOpts ingest_common;
  static std::string ingest_input, ingest_asm, ingest_sections, ingest_out;
  static std::string ingest_binary = "unknown", ingest_suite = "unknown", ingest_compiler = "other",
                     ingest_opt = "unknown", ingest_fn = "unknown";
  ingest->add_option("input", ingest_input, "function records (JSONL)");
  ingest->add_option("--asm", ingest_asm, "Intel-syntax assembly listing (one function)");
  ingest->add_option("--sections", ingest_sections, "section map JSON for the asm adapter");
  ingest->add_option("--binary-id", ingest_binary);
  ingest->add_option("--testsuite", ingest_suite);
  ingest->add_option("--compiler", ingest_compiler);
  ingest->add_option("--opt-level", ingest_opt);
  ingest->add_option("--function-name", ingest_fn);
  ingest->add_option("-o,--output", ingest_out, "output JSONL")->required();
  add_common(ingest, ingest_common);
  ingest->callback([&] {
    action = [&]() {
      if (ingest_input.empty() && ingest_asm.empty()) throw ValidationError("ingest needs an input file or --asm");
      FunctionRecord meta;
      meta.binary_id = ingest_binary;
      meta.testsuite = ingest_suite;
      meta.compiler = Compiler::from_string(ingest_compiler);
      meta.opt_level = opt_from_literal(ingest_opt);
      meta.function_name = ingest_fn;
      return run_ingest(ingest_input, ingest_asm, ingest_sections, ingest_out, meta);
    };
  });

  // normalize
  auto* normalize = app.add_subcommand("normalize", "normalize records into token sequences");
  static CommonOpts norm_common;
  static std::string norm_input, norm_out, norm_mode;
  static bool norm_no_filter = false;
  normalize->add_option("input", norm_input, "function records (JSONL)")->required();
  normalize->add_option("--mode", norm_mode, "balanced|coarse|fine");
  normalize->add_flag("--no-filter", norm_no_filter, "keep functions outside 5 < n <= 250");
  normalize->add_option("-o,--output", norm_out, "normalized functions (JSONL)")->required();
  add_common(normalize, norm_common);
  normalize->callback([&] {
    action = [&]() {
      auto cfg = resolve_config(norm_common);
      if (!norm_mode.empty()) cfg.norm.mode = mode_from_string(norm_mode);
      return run_normalize(norm_input, norm_out, cfg, norm_no_filter);
    };
  });

  // vocab
  auto* vocab = app.add_subcommand("vocab", "build the token vocabulary");
  static CommonOpts vocab_common;
  static std::string vocab_input, vocab_out;
  vocab->add_option("input", vocab_input, "normalized functions (JSONL)")->required();
  vocab->add_option("-o,--output", vocab_out, "vocabulary TSV")->required();
  add_common(vocab, vocab_common);
  vocab->callback([&] {
    action = [&]() { return run_vocab(vocab_input, vocab_out, resolve_config(vocab_common)); };
  });

  // stats
  auto* stats = app.add_subcommand("stats", "corpus statistics report");
  static CommonOpts stats_common;
  static std::string stats_input, stats_records, stats_holdout, stats_out;
  static double stats_holdout_ratio = 0.05;
  stats->add_option("input", stats_input, "normalized functions (JSONL)")->required();
  stats->add_option("--records", stats_records, "matching function records for basic-block stats");
  stats->add_option("--holdout", stats_holdout, "held-out NF file for the OOV rate");
  stats->add_option("--holdout-ratio", stats_holdout_ratio, "seeded holdout ratio when no file given");
  stats->add_option("-o,--output", stats_out, "stats report (JSON)")->required();
  add_common(stats, stats_common);
  stats->callback([&] {
    action = [&]() {
      return run_stats(stats_input, stats_records, stats_holdout, stats_holdout_ratio, stats_out,
                       resolve_config(stats_common));
    };
  });

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "masked-language-model pre-training (DS-Pre)");
  static CommonOpts pre_common;
  static std::string pre_input, pre_vocab, pre_out;
  pre->add_option("input", pre_input, "normalized functions (JSONL)")->required();
  pre->add_option("--vocab", pre_vocab, "vocabulary TSV")->required();
  pre->add_option("-o,--output", pre_out, "checkpoint directory")->required();
  add_common(pre, pre_common);
  pre->callback([&] {
    action = [&]() { return run_pretrain(pre_input, pre_vocab, pre_out, resolve_config(pre_common)); };
  });

  // make-dataset
  auto* mk = app.add_subcommand("make-dataset", "build labeled fine-tuning datasets");
  static CommonOpts mk_common;
  static std::string mk_input, mk_vocab, mk_task, mk_out;
  static double mk_ratio_pos = -1;
  mk->add_option("input", mk_input, "normalized functions (JSONL)")->required();
  mk->add_option("--vocab", mk_vocab, "vocabulary TSV")->required();
  mk->add_option("--task", mk_task, "binsim|compiler|optlevel|optlevel-gcc|optlevel-clang")->required();
  mk->add_option("--ratio-pos", mk_ratio_pos, "positive share for binsim pairs");
  mk->add_option("-o,--output", mk_out, "dataset directory")->required();
  add_common(mk, mk_common);
  mk->callback([&] {
    action = [&]() {
      auto cfg = resolve_config(mk_common);
      if (mk_ratio_pos > 0) cfg.ratio_pos = mk_ratio_pos;
      if (mk_task != "binsim") toolchain_task_from_string(mk_task);  // validate early
      return run_make_dataset(mk_input, mk_vocab, mk_task, mk_out, cfg);
    };
  });

  // finetune
  auto* ft = app.add_subcommand("finetune", "fine-tune a head on a DS-Pre checkpoint");
  static CommonOpts ft_common;
  static std::string ft_ckpt, ft_ds, ft_out, ft_task = "auto";
  static bool ft_freeze = false;
  ft->add_option("checkpoint", ft_ckpt, "DS-Pre checkpoint directory")->required();
  ft->add_option("dataset", ft_ds, "dataset directory from make-dataset")->required();
  ft->add_option("--task", ft_task, "binsim|compiler|optlevel|optlevel-gcc|optlevel-clang (default: from dataset)");
  ft->add_flag("--freeze-encoder", ft_freeze, "train the head only");
  ft->add_option("-o,--output", ft_out, "task checkpoint directory")->required();
  add_common(ft, ft_common);
  ft->callback([&] {
    action = [&]() {
      std::string task = ft_task;
      if (task != "auto" && task != "binsim") {
        toolchain_task_from_string(task);  // validate the literal
        task = "toolchain";
      }
      return run_finetune(ft_ckpt, ft_ds, ft_out, task, ft_freeze, ft_common);
    };
  });

  // predict
  auto* pr = app.add_subcommand("predict", "run a fine-tuned checkpoint over examples");
  static CommonOpts pr_common;
  static std::string pr_ckpt, pr_input, pr_out;
  pr->add_option("checkpoint", pr_ckpt, "DS-Task checkpoint directory")->required();
  pr->add_option("input", pr_input, "examples (JSONL)")->required();
  pr->add_option("-o,--output", pr_out, "predictions (JSONL)")->required();
  add_common(pr, pr_common);
  pr->callback([&] {
    action = [&]() { return run_predict(pr_ckpt, pr_input, pr_out); };
  });

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a fine-tuned checkpoint");
  static CommonOpts ev_common;
  static std::string ev_ckpt, ev_input, ev_out, ev_csv;
  static bool ev_by_pair = false, ev_weighted = false;
  ev->add_option("checkpoint", ev_ckpt, "DS-Task checkpoint directory")->required();
  ev->add_option("input", ev_input, "labeled examples (JSONL)")->required();
  ev->add_option("-o,--output", ev_out, "report (JSON)")->required();
  ev->add_option("--csv", ev_csv, "per-pair CSV table (with --by-pair)");
  ev->add_flag("--by-pair", ev_by_pair, "group metrics by build-pair key");
  ev->add_flag("--weighted", ev_weighted, "weight the average row by group size");
  add_common(ev, ev_common);
  ev->callback([&] {
    action = [&]() { return run_eval(ev_ckpt, ev_input, ev_out, ev_csv, ev_by_pair, ev_weighted); };
  });

  // embed
  auto* em = app.add_subcommand("embed", "extract mean-pooled function embeddings");
  static CommonOpts em_common;
  static std::string em_ckpt, em_input, em_vocab, em_out;
  em->add_option("checkpoint", em_ckpt, "checkpoint directory")->required();
  em->add_option("input", em_input, "normalized functions (JSONL)")->required();
  em->add_option("--vocab", em_vocab, "vocabulary TSV")->required();
  em->add_option("-o,--output", em_out, "embeddings (JSONL)")->required();
  add_common(em, em_common);
  em->callback([&] {
    action = [&]() { return run_embed(em_ckpt, em_input, em_vocab, em_out); };
  });

  // export-attn
  auto* ex = app.add_subcommand("export-attn", "export raw attention weights");
  static CommonOpts ex_common;
  static std::string ex_ckpt, ex_input, ex_vocab, ex_out;
  static size_t ex_limit = 1;
  ex->add_option("checkpoint", ex_ckpt, "checkpoint directory")->required();
  ex->add_option("input", ex_input, "normalized functions (JSONL)")->required();
  ex->add_option("--vocab", ex_vocab, "vocabulary TSV")->required();
  ex->add_option("--limit", ex_limit, "number of functions to export");
  ex->add_option("-o,--output", ex_out, "attention tensors (JSON)")->required();
  add_common(ex, ex_common);
  ex->callback([&] {
    action = [&]() { return run_export_attn(ex_ckpt, ex_input, ex_vocab, ex_out, ex_limit); };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return action ? action() : 1;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "binsem/encoder.hpp"

namespace binsem {

namespace fs = std::filesystem;

// Checkpoint directory layout:
//   config.json        encoder + optimizer config, seed, vocab hash
//   manifest.json      tensor names/shapes/offsets into weights.bin
//   weights.bin        named tensors, row-major little-endian float64
//   training_log.jsonl one {epoch, step, loss, lr} object per step
//   task.json          present only in fine-tuned (DS-Task) checkpoints

inline void write_weights(const fs::path& dir, const std::vector<const Tensor*>& tensors) {
  json manifest = json::array();
  std::ofstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw ValidationError("cannot write " + (dir / "weights.bin").string());
  size_t offset = 0;
  for (const Tensor* t : tensors) {
    size_t bytes = t->count() * sizeof(double);
    manifest.push_back({{"name", t->name}, {"rows", t->value.rows()}, {"cols", t->value.cols()}, {"offset", offset}});
    blob.write(reinterpret_cast<const char*>(t->value.data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  json mj = {{"dtype", "f64"}, {"byte_order", "little"}, {"total_bytes", offset}, {"tensors", manifest}};
  std::ofstream mf(dir / "manifest.json");
  mf << mj.dump(2) << "\n";
}

inline std::map<std::string, Mat> read_weights(const fs::path& dir) {
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw ValidationError("missing manifest.json in " + dir.string());
  json mj = json::parse(mf);
  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  if (!blob) throw ValidationError("missing weights.bin in " + dir.string());

  std::map<std::string, Mat> out;
  for (const auto& tj : mj.at("tensors")) {
    Mat m(tj.at("rows").get<Eigen::Index>(), tj.at("cols").get<Eigen::Index>());
    blob.seekg(static_cast<std::streamoff>(tj.at("offset").get<size_t>()));
    blob.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!blob) throw ValidationError("weights.bin truncated at tensor " + tj.at("name").get<std::string>());
    out[tj.at("name").get<std::string>()] = std::move(m);
  }
  return out;
}

inline void assign_weights(std::vector<Tensor*> tensors, const std::map<std::string, Mat>& weights) {
  for (Tensor* t : tensors) {
    auto it = weights.find(t->name);
    if (it == weights.end()) throw ValidationError("checkpoint missing tensor " + t->name);
    if (it->second.rows() != t->value.rows() || it->second.cols() != t->value.cols())
      throw ValidationError("checkpoint tensor " + t->name + " has mismatching shape");
    t->value = it->second;
  }
}

struct CheckpointInfo {
  EncoderConfig encoder;
  OptimizerConfig optimizer;
  uint64_t seed = 0;
  std::string vocab_hash;
};

inline void write_config(const fs::path& dir, const CheckpointInfo& info) {
  json j = {{"encoder", info.encoder.to_json()},
            {"optimizer", info.optimizer.to_json()},
            {"seed", info.seed},
            {"vocab_hash", info.vocab_hash}};
  std::ofstream f(dir / "config.json");
  if (!f) throw ValidationError("cannot write " + (dir / "config.json").string());
  f << j.dump(2) << "\n";
}

inline CheckpointInfo read_config(const fs::path& dir) {
  std::ifstream f(dir / "config.json");
  if (!f) throw ValidationError("missing config.json in " + dir.string());
  json j = json::parse(f);
  CheckpointInfo info;
  info.encoder = EncoderConfig::from_json(j.at("encoder"));
  info.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
  info.seed = j.at("seed").get<uint64_t>();
  info.vocab_hash = j.at("vocab_hash").get<std::string>();
  return info;
}

inline void write_training_log(const fs::path& dir, const std::vector<TrainLogEntry>& log) {
  std::ofstream f(dir / "training_log.jsonl");
  if (!f) throw ValidationError("cannot write training log in " + dir.string());
  for (const auto& e : log) f << e.to_json().dump() << "\n";
}

inline void save_encoder_checkpoint(const fs::path& dir, const EncoderModel& model, const OptimizerConfig& oc,
                                    uint64_t seed, const std::string& vocab_hash,
                                    const std::vector<TrainLogEntry>& log = {}) {
  fs::create_directories(dir);
  write_config(dir, {model.cfg, oc, seed, vocab_hash});
  write_weights(dir, model.tensors());
  if (!log.empty()) write_training_log(dir, log);
}

struct LoadedCheckpoint {
  EncoderModel model;
  CheckpointInfo info;
};

inline LoadedCheckpoint load_encoder_checkpoint(const fs::path& dir) {
  LoadedCheckpoint lc;
  lc.info = read_config(dir);
  lc.model = EncoderModel::build(lc.info.encoder, lc.info.seed);
  assign_weights(lc.model.tensors(), read_weights(dir));
  return lc;
}

// Fingerprint of a checkpoint's identity (config + weights), used to link
// fine-tuned checkpoints back to their parent.
inline std::string checkpoint_hash(const fs::path& dir) {
  uint64_t h = hash_file((dir / "config.json").string());
  h = fnv1a(hash_hex(hash_file((dir / "weights.bin").string())), h);
  return hash_hex(h);
}

}  // namespace binsem

#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <string>

#include "binsem/encoder.hpp"
#include "binsem/normalizer.hpp"

namespace binsem {

// Resolved pipeline configuration: encoder + optimizer hyperparameters,
// normalization mode, dataset knobs and the run seed. Loaded from a JSON
// file, overridden by CLI flags, and echoed next to every artifact a stage
// produces.
struct PipelineConfig {
  EncoderConfig encoder;
  OptimizerConfig optimizer;
  NormConfig norm;
  uint64_t seed = 0;
  double ratio_pos = 0.5;
  std::array<double, 3> split_ratios = {0.90, 0.05, 0.05};

  json to_json() const {
    return {{"encoder", encoder.to_json()},
            {"optimizer", optimizer.to_json()},
            {"normalization",
             {{"mode", mode_literal(norm.mode)}, {"small_disp_literal_max", norm.small_disp_literal_max}}},
            {"dataset", {{"ratio_pos", ratio_pos}, {"split", split_ratios}}},
            {"seed", seed}};
  }

  static PipelineConfig from_json(const json& j) {
    PipelineConfig c;
    if (j.contains("encoder")) c.encoder = EncoderConfig::from_json(j.at("encoder"));
    if (j.contains("optimizer")) c.optimizer = OptimizerConfig::from_json(j.at("optimizer"));
    if (j.contains("normalization")) {
      const json& n = j.at("normalization");
      if (n.contains("mode")) c.norm.mode = mode_from_string(n.at("mode").get<std::string>());
      if (n.contains("small_disp_literal_max")) c.norm.small_disp_literal_max = n.at("small_disp_literal_max").get<int>();
    }
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("ratio_pos")) c.ratio_pos = d.at("ratio_pos").get<double>();
      if (d.contains("split")) {
        auto arr = d.at("split");
        if (arr.size() != 3) throw ValidationError("dataset.split must have three ratios");
        for (int i = 0; i < 3; ++i) c.split_ratios[static_cast<size_t>(i)] = arr[static_cast<size_t>(i)].get<double>();
      }
    }
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    return c;
  }

  static PipelineConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    try {
      return from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw ValidationError("config file " + path + ": " + e.what());
    }
  }

  // Persist the resolved configuration next to an artifact. Directories get
  // effective_config.json inside; plain files get <file>.config.json.
  void echo_next_to(const std::filesystem::path& artifact) const {
    namespace fs = std::filesystem;
    fs::path where = fs::is_directory(artifact) ? artifact / "effective_config.json"
                                                : fs::path(artifact.string() + ".config.json");
    std::ofstream out(where);
    if (out) out << to_json().dump(2) << "\n";
  }
};

}  // namespace binsem

#pragma once

#include <cstdint>
#include <string>

#include "disco/model.hpp"
#include "json.hpp"

namespace disco {

// Provenance record embedded in every artifact (checkpoints, metrics JSON,
// dump files) so results can be traced back to the run that produced them.
struct RunManifest {
  std::string version = "disco-0.1.0";
  std::uint64_t seed = 0;
  std::string corpus_checksum;  // FNV-1a over the training corpus bytes
  nlohmann::json config;        // full config snapshot
  std::string checkpoint_path;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

// Binary model file: 8-byte magic "DISCOCKP", a little-endian u64 header
// length, a JSON header (manifest, vocabulary, label set, model dimensions,
// memory column ids, and a named-array table), then the raw array payload as
// little-endian float64 in table order.
void save_checkpoint(const std::string& path, const Model& model, const RunManifest& manifest);

struct LoadedCheckpoint {
  Model model;
  RunManifest manifest;
};

// Rebuilds the full model (including the memory matrix when one was saved).
// Malformed files, missing arrays, and shape disagreements all raise
// checkpoint errors naming the offending piece.
LoadedCheckpoint load_checkpoint(const std::string& path);

std::string label_task_name(LabelTask task);
LabelTask label_task_from_name(const std::string& name);

}  // namespace disco

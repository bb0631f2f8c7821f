#include "disco/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <utility>
#include <vector>

namespace disco {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'D', 'I', 'S', 'C', 'O', 'C', 'K', 'P'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

// Every (name, tensor) pair the file stores, in a fixed order. The same
// listing drives both directions so save and load cannot drift apart.
std::vector<std::pair<std::string, Tensor>> named_arrays(const Model& m) {
  std::vector<std::pair<std::string, Tensor>> out = {
      {"embeddings", m.embeddings}, {"enc_fwd.W", m.enc_fwd.W},
      {"enc_fwd.b", m.enc_fwd.b},   {"enc_bwd.W", m.enc_bwd.W},
      {"enc_bwd.b", m.enc_bwd.b},   {"dec.W", m.dec.W},
      {"dec.b", m.dec.b},           {"attn.W_alpha", m.attn.W_alpha},
      {"attn.W_c", m.attn.W_c},     {"attn.W_s", m.attn.W_s},
      {"attn.b_s", m.attn.b_s},     {"fusion.W_i", m.fusion.W_i},
      {"fusion.b_i", m.fusion.b_i}, {"cls.W_r", m.cls.W_r},
      {"cls.b_r", m.cls.b_r}};
  if (!m.memory.empty()) out.emplace_back("memory.M", m.memory.M);
  return out;
}

}  // namespace

std::string label_task_name(LabelTask task) {
  switch (task) {
    case LabelTask::second_level: return "second_level";
    case LabelTask::top_level: return "top_level";
    case LabelTask::binary: return "binary";
  }
  throw Error(ErrorKind::config, "unrepresentable label task");
}

LabelTask label_task_from_name(const std::string& name) {
  if (name == "second_level") return LabelTask::second_level;
  if (name == "top_level") return LabelTask::top_level;
  if (name == "binary") return LabelTask::binary;
  throw Error(ErrorKind::config, "unknown label task \"" + name + "\"");
}

json RunManifest::to_json() const {
  json j;
  j["version"] = version;
  j["seed"] = seed;
  j["corpus_checksum"] = corpus_checksum;
  j["config"] = config;
  j["checkpoint_path"] = checkpoint_path;
  return j;
}

RunManifest RunManifest::from_json(const json& j) {
  RunManifest m;
  m.version = j.value("version", std::string());
  m.seed = j.value("seed", std::uint64_t{0});
  m.corpus_checksum = j.value("corpus_checksum", std::string());
  m.config = j.value("config", json::object());
  m.checkpoint_path = j.value("checkpoint_path", std::string());
  return m;
}

void save_checkpoint(const std::string& path, const Model& model, const RunManifest& manifest) {
  const auto arrays = named_arrays(model);

  json table = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["dtype"] = "f64";
    entry["offset"] = offset;
    table.push_back(std::move(entry));
    offset += static_cast<std::uint64_t>(t.size()) * 8;
  }

  json header;
  header["format_version"] = 1;
  header["manifest"] = manifest.to_json();
  header["vocab"] = model.vocab.id_to_token;
  header["labels"] = {{"task", label_task_name(model.labels.task)},
                      {"names", model.labels.names},
                      {"positive", model.labels.positive}};
  header["config"] = {{"d", model.cfg.d},
                      {"hidden", model.cfg.hidden},
                      {"k", model.cfg.k},
                      {"fusion_concat", model.cfg.fusion_concat},
                      {"decoder_zero_init", model.cfg.decoder_zero_init},
                      {"forget_bias_one", model.cfg.forget_bias_one}};
  header["memory_ids"] = model.memory.column_ids;
  header["memory_labels"] = model.memory.column_labels;
  header["arrays"] = std::move(table);
  const std::string header_text = header.dump();

  std::string blob;
  blob.reserve(16 + header_text.size() + offset);
  blob.append(kMagic, sizeof(kMagic));
  put_u64(blob, header_text.size());
  blob += header_text;
  for (const auto& [name, t] : arrays) {
    (void)name;
    for (double x : t.values()) put_u64(blob, std::bit_cast<std::uint64_t>(x));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot open checkpoint for writing: " + path);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw Error(ErrorKind::io, "short write to checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open checkpoint: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::checkpoint, path + " is not a model checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (16 + header_len > bytes.size()) {
    throw Error(ErrorKind::checkpoint, path + ": header length exceeds file size");
  }

  json header;
  try {
    header = json::parse(bytes.begin() + 16, bytes.begin() + 16 + header_len);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::checkpoint, path + ": unreadable header: " + e.what());
  }

  LoadedCheckpoint out;
  try {
    if (header.at("format_version").get<int>() != 1) {
      throw Error(ErrorKind::checkpoint,
                  path + ": unsupported format version " + header["format_version"].dump());
    }
    out.manifest = RunManifest::from_json(header.at("manifest"));

    const auto tokens = header.at("vocab").get<std::vector<std::string>>();
    Vocab fresh;
    if (tokens.size() < Vocab::reserved_count) {
      throw Error(ErrorKind::checkpoint, path + ": vocabulary too small");
    }
    for (std::size_t i = 0; i < Vocab::reserved_count; ++i) {
      if (tokens[i] != fresh.id_to_token[i]) {
        throw Error(ErrorKind::checkpoint,
                    path + ": reserved token " + std::to_string(i) + " is \"" + tokens[i] +
                        "\", expected \"" + fresh.id_to_token[i] + "\"");
      }
    }
    Vocab vocab;
    for (std::size_t i = Vocab::reserved_count; i < tokens.size(); ++i) vocab.add(tokens[i]);

    const json& jl = header.at("labels");
    LabelSet labels = LabelSet::from_names(jl.at("names").get<std::vector<std::string>>(),
                                           label_task_from_name(jl.at("task").get<std::string>()));
    labels.positive = jl.value("positive", std::string());

    const json& jc = header.at("config");
    ModelConfig cfg;
    cfg.d = jc.at("d").get<std::size_t>();
    cfg.hidden = jc.at("hidden").get<std::size_t>();
    cfg.k = jc.at("k").get<std::size_t>();
    cfg.fusion_concat = jc.at("fusion_concat").get<bool>();
    cfg.decoder_zero_init = jc.at("decoder_zero_init").get<bool>();
    cfg.forget_bias_one = jc.at("forget_bias_one").get<bool>();

    std::mt19937_64 scratch(0);  // every value is overwritten below
    out.model = Model::init(cfg, std::move(vocab), std::move(labels), scratch);
    const auto memory_ids = header.at("memory_ids").get<std::vector<std::string>>();
    if (!memory_ids.empty()) {
      out.model.memory = MemoryMatrix::init(out.model.fused_width(), memory_ids, scratch);
      auto mem_labels = header.value("memory_labels", std::vector<int>{});
      if (!mem_labels.empty() && mem_labels.size() != memory_ids.size()) {
        throw Error(ErrorKind::checkpoint, path + ": memory_labels length does not match columns");
      }
      out.model.memory.column_labels = std::move(mem_labels);
    }

    const unsigned char* payload = bytes.data() + 16 + header_len;
    const std::uint64_t payload_len = bytes.size() - 16 - header_len;
    auto targets = named_arrays(out.model);
    const json& table = header.at("arrays");
    if (table.size() != targets.size()) {
      throw Error(ErrorKind::checkpoint,
                  path + ": expected " + std::to_string(targets.size()) + " arrays, header has " +
                      std::to_string(table.size()));
    }
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const json& entry = table.at(i);
      auto& [name, tensor] = targets[i];
      if (entry.at("name").get<std::string>() != name) {
        throw Error(ErrorKind::checkpoint, path + ": array " + std::to_string(i) + " is \"" +
                                               entry["name"].get<std::string>() +
                                               "\", expected \"" + name + "\"");
      }
      if (entry.at("dtype").get<std::string>() != "f64") {
        throw Error(ErrorKind::checkpoint, path + ": array " + name + " has unsupported dtype");
      }
      if (entry.at("shape").get<Shape>() != tensor.shape()) {
        throw Error(ErrorKind::checkpoint,
                    path + ": array " + name + " shape " + entry["shape"].dump() +
                        " does not match the model built from this header");
      }
      const std::uint64_t off = entry.at("offset").get<std::uint64_t>();
      const std::uint64_t need = static_cast<std::uint64_t>(tensor.size()) * 8;
      if (off + need > payload_len) {
        throw Error(ErrorKind::checkpoint, path + ": array " + name + " runs past end of file");
      }
      auto& vals = tensor.values();
      for (std::size_t j = 0; j < vals.size(); ++j) {
        vals[j] = std::bit_cast<double>(get_u64(payload + off + 8 * j));
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::checkpoint, path + ": malformed header: " + e.what());
  }
  return out;
}

}  // namespace disco

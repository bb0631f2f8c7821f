#ifndef DISCO_ERROR_HPP
#define DISCO_ERROR_HPP

#include <stdexcept>
#include <string>

namespace disco {

// Error classes map to distinct CLI exit codes (see README).
enum class ErrorKind {
  dimension,   // tensor shape mismatch
  numeric,     // NaN/Inf produced by an op
  config,      // bad configuration value or file
  parse,       // malformed input file (corpus, embeddings, ...)
  corpus,      // empty or unusable corpus / split
  label,       // unknown relation label
  instance,    // unusable single instance (e.g. empty argument)
  memory,      // context-memory misuse
  checkpoint,  // unreadable or incompatible checkpoint
  training,    // divergence or optimizer misuse
  usage,       // API/CLI called wrongly
  io,          // file system failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::config: return "config";
    case ErrorKind::parse: return "parse";
    case ErrorKind::corpus: return "corpus";
    case ErrorKind::label: return "label";
    case ErrorKind::instance: return "instance";
    case ErrorKind::memory: return "memory";
    case ErrorKind::checkpoint: return "checkpoint";
    case ErrorKind::training: return "training";
    case ErrorKind::usage: return "usage";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace disco

#endif

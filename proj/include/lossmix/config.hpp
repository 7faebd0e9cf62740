#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossmix/signal.hpp"
#include "lossmix/trainer.hpp"

namespace lossmix {

/// Fatal configuration-file problem; the message carries file, line and
/// column. Maps to the usage exit code.
class ConfigParseError : public std::runtime_error {
 public:
  explicit ConfigParseError(const std::string& what)
      : std::runtime_error(what) {}
};

/// Human-readable key-value configuration with one section per module:
///
///   [dataset]
///   n_pairs = 24
///   snr_list = 0, 6
///
/// flattens to "dataset.n_pairs" etc. '#' and ';' start comments. CLI flags
/// override file values by writing into `values` after parsing.
struct KeyValueConfig {
  std::map<std::string, std::string> values;

  static KeyValueConfig parse_string(const std::string& text,
                                     const std::string& origin);
  static KeyValueConfig parse_file(const std::filesystem::path& path);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> fallback) const;
};

/// FNV-1a 64-bit digest as 16 lowercase hex characters.
std::string fnv1a_hex(const std::string& payload);

/// Hashes of canonical config serializations; emitted files carry these so
/// a verifier can re-derive and match them.
std::string dataset_config_hash(const DatasetConfig& cfg);
std::string train_config_hash(const TrainConfig& cfg);

/// Builds configs from parsed key-value state (defaults where absent).
DatasetConfig dataset_config_from(const KeyValueConfig& kv);
TrainConfig train_config_from(const KeyValueConfig& kv);

/// True when the file carries a config_hash marker (JSON field or
/// "# config_hash=..." comment) equal to `expected`.
bool artifact_hash_matches(const std::filesystem::path& path,
                           const std::string& expected);

}  // namespace lossmix

#include "lossmix/config.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lossmix/errors.hpp"

namespace lossmix {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void parse_fail(const std::string& origin, std::size_t line,
                             std::size_t col, const std::string& what) {
  std::ostringstream os;
  os << origin << ":" << line << ":" << col << ": " << what;
  throw ConfigParseError(os.str());
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_string(const std::string& text,
                                            const std::string& origin) {
  KeyValueConfig kv;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#' || stripped[0] == ';') continue;
    if (stripped.front() == '[') {
      if (stripped.back() != ']') {
        parse_fail(origin, line_no, line.find('[') + 1,
                   "unterminated section header");
      }
      section = trim(stripped.substr(1, stripped.size() - 2));
      if (section.empty()) {
        parse_fail(origin, line_no, 1, "empty section name");
      }
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      parse_fail(origin, line_no, 1, "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      parse_fail(origin, line_no, eq + 1, "missing key before '='");
    }
    std::string value = line.substr(eq + 1);
    const std::size_t comment = value.find_first_of("#;");
    if (comment != std::string::npos) value = value.substr(0, comment);
    const std::string full_key = section.empty() ? key : section + "." + key;
    kv.values[full_key] = trim(value);
  }
  return kv;
}

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path.string());
}

bool KeyValueConfig::has(const std::string& key) const {
  return values.count(key) != 0;
}

std::string KeyValueConfig::get(const std::string& key,
                                const std::string& fallback) const {
  const auto it = values.find(key);
  return it == values.end() ? fallback : it->second;
}

double KeyValueConfig::get_double(const std::string& key,
                                  double fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigParseError("config key '" + key + "': '" + it->second +
                           "' is not a number");
  }
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    std::size_t pos = 0;
    const int v = std::stoi(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigParseError("config key '" + key + "': '" + it->second +
                           "' is not an integer");
  }
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  try {
    std::size_t pos = 0;
    const std::uint64_t v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigParseError("config key '" + key + "': '" + it->second +
                           "' is not an unsigned integer");
  }
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigParseError("config key '" + key + "': '" + it->second +
                         "' is not a boolean");
}

std::vector<double> KeyValueConfig::get_double_list(
    const std::string& key, std::vector<double> fallback) const {
  const auto it = values.find(key);
  if (it == values.end()) return fallback;
  std::vector<double> out;
  std::istringstream in(it->second);
  std::string token;
  while (std::getline(in, token, ',')) {
    token = trim(token);
    if (token.empty()) continue;
    try {
      out.push_back(std::stod(token));
    } catch (const std::exception&) {
      throw ConfigParseError("config key '" + key + "': '" + token +
                             "' is not a number");
    }
  }
  if (out.empty()) {
    throw ConfigParseError("config key '" + key + "': empty list");
  }
  return out;
}

std::string fnv1a_hex(const std::string& payload) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : payload) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return std::string(buf);
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

std::string dataset_canonical(const DatasetConfig& cfg) {
  std::ostringstream os;
  os << "dataset|n_pairs=" << cfg.n_pairs << "|n_test=" << cfg.n_test
     << "|val_fraction=" << num(cfg.val_fraction) << "|snr=";
  for (std::size_t i = 0; i < cfg.snr_list.size(); ++i) {
    if (i) os << ",";
    os << num(cfg.snr_list[i]);
  }
  os << "|seed=" << cfg.seed << "|n_fft=" << cfg.stft.n_fft
     << "|hop=" << cfg.stft.hop << "|duration=" << num(cfg.duration_s)
     << "|rate=" << num(cfg.sample_rate) << "|harmonics=" << cfg.n_harmonics
     << "|floor=" << num(cfg.floor_db);
  return os.str();
}

std::string train_canonical(const TrainConfig& cfg) {
  std::ostringstream os;
  os << "train|regime=" << to_string(cfg.regime)
     << "|loss=" << to_string(cfg.loss) << "|epochs=" << cfg.epochs
     << "|batch=" << cfg.batch_size << "|seed=" << cfg.seed
     << "|alpha=" << num(cfg.beta_alpha) << "|C=" << num(cfg.mix_capacity)
     << "|mlp_hidden=" << cfg.mlp_hidden
     << "|denoiser_hidden=" << cfg.denoiser_hidden
     << "|bottleneck=" << cfg.bottleneck << "|l2=" << num(cfg.l2_weight)
     << "|detach=" << (cfg.detach_phi_embedding ? 1 : 0) << "|opt="
     << (cfg.optimizer.kind == OptimizerConfig::Kind::Adam ? "adam" : "sgd")
     << "|lr=" << num(cfg.optimizer.learning_rate)
     << "|beta1=" << num(cfg.optimizer.beta1)
     << "|beta2=" << num(cfg.optimizer.beta2)
     << "|eps=" << num(cfg.optimizer.epsilon) << "|"
     << dataset_canonical(cfg.dataset);
  return os.str();
}

}  // namespace

std::string dataset_config_hash(const DatasetConfig& cfg) {
  return fnv1a_hex(dataset_canonical(cfg));
}

std::string train_config_hash(const TrainConfig& cfg) {
  return fnv1a_hex(train_canonical(cfg));
}

DatasetConfig dataset_config_from(const KeyValueConfig& kv) {
  DatasetConfig cfg;
  cfg.n_pairs = kv.get_int("dataset.n_pairs", cfg.n_pairs);
  cfg.n_test = kv.get_int("dataset.n_test", cfg.n_test);
  cfg.val_fraction = kv.get_double("dataset.val_fraction", cfg.val_fraction);
  cfg.snr_list = kv.get_double_list("dataset.snr_list", cfg.snr_list);
  cfg.seed = kv.get_u64("dataset.seed", cfg.seed);
  cfg.stft.n_fft = kv.get_int("stft.n_fft", cfg.stft.n_fft);
  cfg.stft.hop = kv.get_int("stft.hop", cfg.stft.hop);
  cfg.duration_s = kv.get_double("dataset.duration_s", cfg.duration_s);
  cfg.sample_rate = kv.get_double("dataset.sample_rate", cfg.sample_rate);
  cfg.n_harmonics = kv.get_int("dataset.n_harmonics", cfg.n_harmonics);
  cfg.floor_db = kv.get_double("stft.floor_db", cfg.floor_db);
  return cfg;
}

TrainConfig train_config_from(const KeyValueConfig& kv) {
  TrainConfig cfg;
  cfg.regime = regime_from_string(kv.get("train.regime", "erm"));
  cfg.loss = loss_kind_from_string(kv.get("train.loss", "lsd"));
  cfg.epochs = kv.get_int("train.epochs", cfg.epochs);
  cfg.batch_size = kv.get_int("train.batch_size", cfg.batch_size);
  cfg.seed = kv.get_u64("train.seed", cfg.seed);
  cfg.beta_alpha = kv.get_double("mixing.beta_alpha", cfg.beta_alpha);
  cfg.mix_capacity = kv.get_double("mixing.capacity", cfg.mix_capacity);
  cfg.mlp_hidden = kv.get_int("network.mlp_hidden", cfg.mlp_hidden);
  cfg.denoiser_hidden =
      kv.get_int("network.denoiser_hidden", cfg.denoiser_hidden);
  cfg.bottleneck = kv.get_int("network.bottleneck", cfg.bottleneck);
  cfg.l2_weight = kv.get_double("train.l2_weight", cfg.l2_weight);
  cfg.detach_phi_embedding =
      kv.get_bool("mixing.detach_embedding", cfg.detach_phi_embedding);
  const std::string opt = kv.get("optimizer.kind", "adam");
  if (opt == "adam") {
    cfg.optimizer.kind = OptimizerConfig::Kind::Adam;
  } else if (opt == "sgd") {
    cfg.optimizer.kind = OptimizerConfig::Kind::Sgd;
  } else {
    throw ConfigParseError("optimizer.kind: '" + opt +
                           "' is not adam or sgd");
  }
  cfg.optimizer.learning_rate =
      kv.get_double("optimizer.learning_rate", cfg.optimizer.learning_rate);
  cfg.optimizer.beta1 = kv.get_double("optimizer.beta1", cfg.optimizer.beta1);
  cfg.optimizer.beta2 = kv.get_double("optimizer.beta2", cfg.optimizer.beta2);
  cfg.optimizer.epsilon =
      kv.get_double("optimizer.epsilon", cfg.optimizer.epsilon);
  cfg.dataset = dataset_config_from(kv);
  return cfg;
}

bool artifact_hash_matches(const std::filesystem::path& path,
                           const std::string& expected) {
  std::ifstream in(path);
  if (!in) return false;
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::size_t pos = text.find("config_hash");
  while (pos != std::string::npos) {
    std::size_t i = pos + std::string("config_hash").size();
    while (i < text.size() &&
           (text[i] == '"' || text[i] == ':' || text[i] == '=' ||
            text[i] == ' ')) {
      ++i;
    }
    std::size_t j = i;
    while (j < text.size() &&
           std::isxdigit(static_cast<unsigned char>(text[j]))) {
      ++j;
    }
    if (j - i == expected.size() && text.compare(i, j - i, expected) == 0) {
      return true;
    }
    pos = text.find("config_hash", pos + 1);
  }
  return false;
}

}  // namespace lossmix

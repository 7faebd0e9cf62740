#include "lossmix/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"
#include "lossmix/errors.hpp"
#include "lossmix/rng.hpp"

namespace lossmix {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

double rms(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / static_cast<double>(v.size()));
}

std::size_t sample_count(double duration_s, double sample_rate) {
  if (!(duration_s > 0.0) || !(sample_rate > 0.0)) {
    throw std::invalid_argument("duration and sample rate must be positive");
  }
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate));
}

}  // namespace

void StftConfig::validate() const {
  if (n_fft < 8 || !is_power_of_two(static_cast<std::size_t>(n_fft))) {
    throw std::invalid_argument("StftConfig: n_fft must be a power of two >= 8");
  }
  if (hop <= 0 || hop > n_fft || n_fft % hop != 0) {
    throw std::invalid_argument(
        "StftConfig: hop must be positive and divide n_fft");
  }
}

std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x,
                                      bool inverse) {
  const std::size_t n = x.size();
  if (!is_power_of_two(n)) {
    throw std::invalid_argument("fft: length " + std::to_string(n) +
                                " is not a power of two");
  }
  // Bit-reversal permutation.
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double angle = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(angle), std::sin(angle));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv_n = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= inv_n;
  }
  return x;
}

Waveform synth_clean(std::uint64_t seed, double duration_s,
                     double sample_rate, int n_harmonics) {
  const std::size_t n = sample_count(duration_s, sample_rate);
  Waveform w{std::vector<double>(n, 0.0), sample_rate};
  if (n_harmonics <= 0) return w;

  Rng rng(seed);
  const double f0 = rng.uniform(80.0, 300.0);
  const double env_freq = rng.uniform(1.0, 4.0);
  const double env_phase = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> phases(static_cast<std::size_t>(n_harmonics));
  for (double& p : phases) p = rng.uniform(0.0, 2.0 * kPi);

  const double nyquist = sample_rate / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double v = 0.0;
    for (int h = 1; h <= n_harmonics; ++h) {
      const double freq = f0 * h;
      if (freq >= nyquist) break;
      v += std::sin(2.0 * kPi * freq * t + phases[h - 1]) / h;
    }
    const double env = 0.55 + 0.45 * std::sin(2.0 * kPi * env_freq * t + env_phase);
    w.samples[i] = env * v;
  }
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::fabs(v));
  if (peak > 0.0) {
    const double scale = 0.9 / peak;
    for (double& v : w.samples) v *= scale;
  }
  return w;
}

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::White:
      return "white";
    case NoiseKind::Pink:
      return "pink";
    case NoiseKind::Tonal:
      return "tonal";
  }
  return "?";
}

Waveform synth_noise(std::uint64_t seed, double duration_s,
                     double sample_rate, NoiseKind kind) {
  const std::size_t n = sample_count(duration_s, sample_rate);
  Rng rng(seed);
  Waveform w{std::vector<double>(n, 0.0), sample_rate};
  switch (kind) {
    case NoiseKind::White: {
      for (double& v : w.samples) v = rng.normal();
      break;
    }
    case NoiseKind::Pink: {
      // White spectrum shaped by 1/sqrt(k) (power ~ 1/f, -3 dB/octave),
      // synthesized in the frequency domain on the next power of two.
      std::size_t n2 = 1;
      while (n2 < n) n2 <<= 1;
      std::vector<std::complex<double>> spec(n2, {0.0, 0.0});
      for (std::size_t k = 1; k <= n2 / 2; ++k) {
        const double mag = 1.0 / std::sqrt(static_cast<double>(k));
        const double phase = rng.uniform(0.0, 2.0 * kPi);
        const std::complex<double> c =
            k == n2 / 2 ? std::complex<double>(mag, 0.0)
                        : std::polar(mag, phase);
        spec[k] = c;
        if (k != n2 / 2) spec[n2 - k] = std::conj(c);
      }
      const auto time = fft(std::move(spec), true);
      for (std::size_t i = 0; i < n; ++i) w.samples[i] = time[i].real();
      break;
    }
    case NoiseKind::Tonal: {
      // Sinusoid centered on a bin of any power-of-two window that is a
      // multiple of 1024 samples, so FFT-based checks see a single line.
      const std::size_t bin = 20 + rng.below(181);
      const double freq =
          static_cast<double>(bin) * sample_rate / 1024.0;
      const double phase = rng.uniform(0.0, 2.0 * kPi);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / sample_rate;
        w.samples[i] = std::sin(2.0 * kPi * freq * t + phase);
      }
      break;
    }
  }
  const double r = rms(w.samples);
  if (r > 0.0) {
    const double scale = 1.0 / r;
    for (double& v : w.samples) v *= scale;
  }
  return w;
}

Waveform mix_at_snr(const Waveform& s, const Waveform& n, double snr_db) {
  if (s.samples.size() != n.samples.size() || s.sample_rate != n.sample_rate) {
    throw std::invalid_argument("mix_at_snr: length or rate mismatch");
  }
  if (!std::isfinite(snr_db)) {
    throw std::invalid_argument("mix_at_snr: snr_db must be finite");
  }
  const double rms_s = rms(s.samples);
  const double rms_n = rms(n.samples);
  if (!(rms_s > 0.0)) {
    throw std::invalid_argument("mix_at_snr: clean signal is silent");
  }
  if (!(rms_n > 0.0)) {
    throw std::invalid_argument("mix_at_snr: noise signal is silent");
  }
  const double gain = rms_s / (rms_n * std::pow(10.0, snr_db / 20.0));
  Waveform out{std::vector<double>(s.samples.size()), s.sample_rate};
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = s.samples[i] + gain * n.samples[i];
  }
  return out;
}

Spectrogram stft_log_power(const Waveform& x, const StftConfig& cfg,
                           double floor_db) {
  cfg.validate();
  const std::size_t n_fft = static_cast<std::size_t>(cfg.n_fft);
  const std::size_t hop = static_cast<std::size_t>(cfg.hop);
  if (x.samples.size() < n_fft) {
    throw std::invalid_argument("stft_log_power: signal length " +
                                std::to_string(x.samples.size()) +
                                " is shorter than one frame of " +
                                std::to_string(n_fft));
  }
  const std::size_t frames = (x.samples.size() - n_fft) / hop + 1;
  const std::size_t bins = n_fft / 2;  // one-sided, Nyquist bin removed

  std::vector<double> window(n_fft);
  for (std::size_t k = 0; k < n_fft; ++k) {
    window[k] =
        0.5 * (1.0 - std::cos(2.0 * kPi * static_cast<double>(k) /
                              static_cast<double>(n_fft)));
  }

  Tensor power({frames, bins});
  std::vector<std::complex<double>> frame(n_fft);
  double peak = 0.0;
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < n_fft; ++k) {
      frame[k] = {x.samples[t * hop + k] * window[k], 0.0};
    }
    const auto spec = fft(frame, false);
    for (std::size_t f = 0; f < bins; ++f) {
      const double p = std::norm(spec[f]);
      power.at(t, f) = p;
      peak = std::max(peak, p);
    }
  }

  Tensor log_power({frames, bins});
  if (peak == 0.0) {
    for (std::size_t i = 0; i < log_power.size(); ++i) {
      log_power[i] = floor_db;
    }
  } else {
    const double floor_power = peak * std::pow(10.0, floor_db / 10.0);
    for (std::size_t i = 0; i < log_power.size(); ++i) {
      log_power[i] = 10.0 * std::log10(std::max(power[i], floor_power));
    }
  }
  return Spectrogram{std::move(log_power), cfg};
}

void DatasetConfig::validate() const {
  if (n_pairs < 2) {
    throw std::invalid_argument("DatasetConfig: n_pairs must be >= 2");
  }
  if (n_test < 1) {
    throw std::invalid_argument("DatasetConfig: n_test must be >= 1");
  }
  if (snr_list.empty()) {
    throw std::invalid_argument("DatasetConfig: snr_list must not be empty");
  }
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw std::invalid_argument(
        "DatasetConfig: val_fraction must lie in (0, 1)");
  }
  stft.validate();
}

std::vector<NoiseKind> train_noise_kinds() {
  return {NoiseKind::White, NoiseKind::Pink};
}

std::vector<NoiseKind> test_noise_kinds() { return {NoiseKind::Tonal}; }

namespace {

SamplePair build_pair(const DatasetConfig& cfg, std::uint64_t clean_seed,
                      std::uint64_t noise_seed, NoiseKind kind,
                      double snr_db) {
  const Waveform clean =
      synth_clean(clean_seed, cfg.duration_s, cfg.sample_rate,
                  cfg.n_harmonics);
  const Waveform noise =
      synth_noise(noise_seed, cfg.duration_s, cfg.sample_rate, kind);
  const Waveform noisy = mix_at_snr(clean, noise, snr_db);
  return SamplePair{stft_log_power(noisy, cfg.stft, cfg.floor_db).log_power,
                    stft_log_power(clean, cfg.stft, cfg.floor_db).log_power};
}

}  // namespace

Dataset make_dataset(const DatasetConfig& cfg) {
  cfg.validate();
  Dataset ds;
  const auto train_kinds = train_noise_kinds();
  const auto test_kinds = test_noise_kinds();

  const int n_val =
      std::max(1, static_cast<int>(std::lround(cfg.val_fraction * cfg.n_pairs)));
  const int n_train = cfg.n_pairs - n_val;
  if (n_train < 1) {
    throw std::invalid_argument("DatasetConfig: no training pairs left after "
                                "the validation split");
  }

  for (int i = 0; i < cfg.n_pairs; ++i) {
    const NoiseKind kind = train_kinds[i % train_kinds.size()];
    const double snr = cfg.snr_list[i % cfg.snr_list.size()];
    SamplePair pair = build_pair(cfg, Rng::derive(cfg.seed, 2 * i),
                                 Rng::derive(cfg.seed, 2 * i + 1), kind, snr);
    if (i < n_train) {
      ds.train.push_back(std::move(pair));
    } else {
      ds.val.push_back(std::move(pair));
    }
  }
  // Disjoint seed stream for the test split.
  constexpr std::uint64_t kTestStream = 1u << 20;
  for (int i = 0; i < cfg.n_test; ++i) {
    const NoiseKind kind = test_kinds[i % test_kinds.size()];
    const double snr = cfg.snr_list[i % cfg.snr_list.size()];
    ds.test.push_back(build_pair(cfg, Rng::derive(cfg.seed, kTestStream + 2 * i),
                                 Rng::derive(cfg.seed, kTestStream + 2 * i + 1),
                                 kind, snr));
  }
  return ds;
}

namespace {

constexpr char kCacheMagic[] = "LMIXDS01";

void write_split(const std::filesystem::path& file,
                 const std::vector<SamplePair>& split) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out.write(kCacheMagic, 8);
  const std::uint64_t n = split.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  for (const SamplePair& pair : split) {
    const std::uint64_t frames = pair.noisy.rows();
    const std::uint64_t bins = pair.noisy.cols();
    out.write(reinterpret_cast<const char*>(&frames), sizeof(frames));
    out.write(reinterpret_cast<const char*>(&bins), sizeof(bins));
    out.write(reinterpret_cast<const char*>(pair.noisy.data().data()),
              static_cast<std::streamsize>(pair.noisy.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(pair.clean.data().data()),
              static_cast<std::streamsize>(pair.clean.size() * sizeof(double)));
  }
  if (!out) throw IoError("write failed for " + file.string());
}

std::vector<SamplePair> read_split(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != kCacheMagic) {
    throw IoError(file.string() + " is not a dataset cache file");
  }
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::vector<SamplePair> split;
  split.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t frames = 0, bins = 0;
    in.read(reinterpret_cast<char*>(&frames), sizeof(frames));
    in.read(reinterpret_cast<char*>(&bins), sizeof(bins));
    std::vector<double> noisy(frames * bins), clean(frames * bins);
    in.read(reinterpret_cast<char*>(noisy.data()),
            static_cast<std::streamsize>(noisy.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(clean.data()),
            static_cast<std::streamsize>(clean.size() * sizeof(double)));
    if (!in) throw IoError("truncated dataset cache " + file.string());
    split.push_back(SamplePair{Tensor({frames, bins}, std::move(noisy)),
                               Tensor({frames, bins}, std::move(clean))});
  }
  return split;
}

}  // namespace

void save_dataset_cache(const std::filesystem::path& dir, const Dataset& ds,
                        const DatasetConfig& config,
                        const std::string& config_hash) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_split(dir / "train.bin", ds.train);
  write_split(dir / "val.bin", ds.val);
  write_split(dir / "test.bin", ds.test);

  nlohmann::json manifest;
  manifest["config_hash"] = config_hash;
  manifest["seed"] = config.seed;
  manifest["snr_list"] = config.snr_list;
  manifest["n_pairs"] = config.n_pairs;
  manifest["n_test"] = config.n_test;
  manifest["val_fraction"] = config.val_fraction;
  manifest["stft"] = {{"n_fft", config.stft.n_fft}, {"hop", config.stft.hop}};
  manifest["splits"] = {
      {"train", {{"file", "train.bin"}, {"n_pairs", ds.train.size()}}},
      {"val", {{"file", "val.bin"}, {"n_pairs", ds.val.size()}}},
      {"test", {{"file", "test.bin"}, {"n_pairs", ds.test.size()}}}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest.dump(2) << "\n";
}

Dataset load_dataset_cache(const std::filesystem::path& dir) {
  Dataset ds;
  ds.train = read_split(dir / "train.bin");
  ds.val = read_split(dir / "val.bin");
  ds.test = read_split(dir / "test.bin");
  return ds;
}

std::string cached_config_hash(const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) return {};
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception&) {
    return {};
  }
  return manifest.value("config_hash", std::string{});
}

}  // namespace lossmix

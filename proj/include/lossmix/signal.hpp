#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lossmix/sample.hpp"
#include "lossmix/tensor.hpp"

namespace lossmix {

struct Waveform {
  std::vector<double> samples;
  double sample_rate = 8000.0;
};

/// STFT parameters. Window family is the periodic Hann
/// w[k] = 0.5*(1 - cos(2*pi*k/N)).
struct StftConfig {
  int n_fft = 64;  // power of two, >= 8
  int hop = 32;    // positive, divides n_fft

  void validate() const;
};

/// Log-power spectrogram, frames x bins with bins = n_fft/2 (one-sided
/// spectrum, Nyquist bin removed). Cells are 10*log10(power) clamped at
/// floor_db below the per-clip peak power.
struct Spectrogram {
  Tensor log_power;
  StftConfig config;
};

/// Radix-2 Cooley-Tukey transform. Length must be a power of two; the
/// inverse applies the 1/N scale so inverse(fft(x)) round-trips.
std::vector<std::complex<double>> fft(std::vector<std::complex<double>> x,
                                      bool inverse);

/// Deterministic harmonic stack: random fundamental in 80-300 Hz, 1/h
/// harmonic amplitude decay, slow amplitude envelope, peak-normalized to
/// 0.9. n_harmonics = 0 yields silence.
Waveform synth_clean(std::uint64_t seed, double duration_s,
                     double sample_rate, int n_harmonics);

enum class NoiseKind { White, Pink, Tonal };

std::string to_string(NoiseKind kind);

/// Deterministic unit-RMS noise clip of the requested spectral character.
Waveform synth_noise(std::uint64_t seed, double duration_s,
                     double sample_rate, NoiseKind kind);

/// x = s + g*n with the gain g chosen so that
/// 10*log10(RMS^2(s) / RMS^2(g*n)) = snr_db. Throws std::invalid_argument
/// for mismatched lengths/rates, a silent s, or a non-finite snr_db.
Waveform mix_at_snr(const Waveform& s, const Waveform& n, double snr_db);

/// Spectrogram with frames = floor((len - n_fft)/hop) + 1. Throws when the
/// signal is shorter than one frame. An all-zero clip maps to floor_db in
/// every cell.
Spectrogram stft_log_power(const Waveform& x, const StftConfig& cfg,
                           double floor_db = -80.0);

struct DatasetConfig {
  int n_pairs = 24;  // train+val pool; split by val_fraction
  int n_test = 6;
  double val_fraction = 0.1;
  std::vector<double> snr_list = {0.0, 6.0};
  std::uint64_t seed = 7;
  StftConfig stft{};
  double duration_s = 0.5;
  double sample_rate = 8000.0;
  int n_harmonics = 8;
  double floor_db = -80.0;

  void validate() const;
};

struct Dataset {
  std::vector<SamplePair> train;
  std::vector<SamplePair> val;
  std::vector<SamplePair> test;
};

/// Deterministic train/val/test triplet of (noisy, clean) spectrogram
/// pairs under the additive model. Train/val draw from the white and pink
/// noise kinds; the test split uses tonal noise and a disjoint seed stream,
/// so both the noise kinds and the seeds differ from training. Pairs cycle
/// through snr_list. Spectrograms are always computed from mixed waveforms,
/// never by mixing spectrograms.
Dataset make_dataset(const DatasetConfig& config);

/// Noise kinds used by each split (construction contract, exposed for
/// verification).
std::vector<NoiseKind> train_noise_kinds();
std::vector<NoiseKind> test_noise_kinds();

/// Binary cache: one shape-prefixed raw-array file per split plus a JSON
/// manifest carrying seeds, SNRs and the config hash. Throws IoError on
/// filesystem failure.
void save_dataset_cache(const std::filesystem::path& dir, const Dataset& ds,
                        const DatasetConfig& config,
                        const std::string& config_hash);
Dataset load_dataset_cache(const std::filesystem::path& dir);
/// Config hash recorded in a cache manifest; empty when absent.
std::string cached_config_hash(const std::filesystem::path& dir);

}  // namespace lossmix

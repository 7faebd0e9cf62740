#include <pybind11/complex.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lossmix/checkpoint.hpp"
#include "lossmix/cli.hpp"
#include "lossmix/config.hpp"
#include "lossmix/losses.hpp"
#include "lossmix/mixing.hpp"
#include "lossmix/signal.hpp"
#include "lossmix/trainer.hpp"

namespace py = pybind11;
using namespace lossmix;

namespace {

DatasetConfig dataset_config_from_kwargs(const py::dict& kwargs) {
  DatasetConfig cfg;
  if (kwargs.contains("n_pairs")) cfg.n_pairs = kwargs["n_pairs"].cast<int>();
  if (kwargs.contains("n_test")) cfg.n_test = kwargs["n_test"].cast<int>();
  if (kwargs.contains("val_fraction")) {
    cfg.val_fraction = kwargs["val_fraction"].cast<double>();
  }
  if (kwargs.contains("snr_list")) {
    cfg.snr_list = kwargs["snr_list"].cast<std::vector<double>>();
  }
  if (kwargs.contains("dataset_seed")) {
    cfg.seed = kwargs["dataset_seed"].cast<std::uint64_t>();
  }
  if (kwargs.contains("n_fft")) cfg.stft.n_fft = kwargs["n_fft"].cast<int>();
  if (kwargs.contains("hop")) cfg.stft.hop = kwargs["hop"].cast<int>();
  if (kwargs.contains("duration_s")) {
    cfg.duration_s = kwargs["duration_s"].cast<double>();
  }
  return cfg;
}

TrainConfig train_config_from_kwargs(const py::dict& kwargs) {
  TrainConfig cfg;
  if (kwargs.contains("regime")) {
    cfg.regime = regime_from_string(kwargs["regime"].cast<std::string>());
  }
  if (kwargs.contains("loss")) {
    cfg.loss = loss_kind_from_string(kwargs["loss"].cast<std::string>());
  }
  if (kwargs.contains("epochs")) cfg.epochs = kwargs["epochs"].cast<int>();
  if (kwargs.contains("batch_size")) {
    cfg.batch_size = kwargs["batch_size"].cast<int>();
  }
  if (kwargs.contains("seed")) {
    cfg.seed = kwargs["seed"].cast<std::uint64_t>();
  }
  if (kwargs.contains("beta_alpha")) {
    cfg.beta_alpha = kwargs["beta_alpha"].cast<double>();
  }
  if (kwargs.contains("capacity")) {
    cfg.mix_capacity = kwargs["capacity"].cast<double>();
  }
  if (kwargs.contains("l2_weight")) {
    cfg.l2_weight = kwargs["l2_weight"].cast<double>();
  }
  if (kwargs.contains("learning_rate")) {
    cfg.optimizer.learning_rate = kwargs["learning_rate"].cast<double>();
  }
  if (kwargs.contains("detach_phi_embedding")) {
    cfg.detach_phi_embedding = kwargs["detach_phi_embedding"].cast<bool>();
  }
  cfg.dataset = dataset_config_from_kwargs(kwargs);
  return cfg;
}

py::dict report_to_dict(const TrainingReport& report,
                        const std::string& hash) {
  py::dict out;
  out["regime"] = to_string(report.regime);
  out["seed"] = report.seed;
  out["config_hash"] = hash;
  py::list epochs;
  for (const EpochRecord& rec : report.epochs) {
    py::dict line;
    line["epoch"] = rec.epoch;
    line["train_loss"] = rec.train_loss;
    line["val_lsd"] = rec.val_lsd;
    if (rec.has_phi) {
      line["phi_q"] = py::make_tuple(rec.phi_at_quartiles[0],
                                     rec.phi_at_quartiles[1],
                                     rec.phi_at_quartiles[2]);
    }
    epochs.append(line);
  }
  out["epochs"] = epochs;
  out["final_train_loss"] = report.final_train_loss;
  out["final_val_lsd"] = report.final_val_lsd;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Loss mixup training laboratory: mixing functions, reparameterized "
      "gradients, spectral denoising objectives.";

  m.def("beta_cdf", &beta_cdf, py::arg("alpha"), py::arg("x"),
        "CDF of the symmetric Beta(alpha, alpha) distribution.");
  m.def("beta_inverse_cdf", &beta_inverse_cdf, py::arg("alpha"), py::arg("u"),
        "Inverse CDF of Beta(alpha, alpha); |CDF(result) - u| <= 1e-10.");

  m.def(
      "phi_eval",
      [](const std::string& rho, double lam) {
        const cli::RhoSpec spec = cli::parse_rho_spec(rho);
        return phi_eval(spec.mixing(), lam, spec.embedding);
      },
      py::arg("rho"), py::arg("lam"),
      "Mixing function phi(lam) = rho(lam) / (rho(lam) + rho(1 - lam)). "
      "rho is 'identity', 'pow:<c>' or 'neural:<seed>'.");

  m.def(
      "phi_curve",
      [](const std::string& rho, int n_points) {
        const cli::RhoSpec spec = cli::parse_rho_spec(rho);
        return phi_curve_table(spec.mixing(), n_points, spec.embedding);
      },
      py::arg("rho"), py::arg("n_points") = 101,
      "Evenly spaced (lambda, phi) table including both endpoints.");

  m.def(
      "sample_lambda",
      [](double alpha, std::uint64_t seed, int n) {
        const MixingDistribution dist =
            alpha == 1.0 ? MixingDistribution::uniform()
                         : MixingDistribution::symmetric_beta(alpha);
        Rng rng(seed);
        std::vector<double> draws(static_cast<std::size_t>(n));
        for (double& v : draws) v = sample_lambda(dist, rng);
        return draws;
      },
      py::arg("alpha"), py::arg("seed"), py::arg("n") = 1,
      "Seeded draws from the mixing distribution via the inverse CDF.");

  m.def(
      "fft",
      [](std::vector<std::complex<double>> x, bool inverse) {
        return fft(std::move(x), inverse);
      },
      py::arg("x"), py::arg("inverse") = false,
      "Radix-2 FFT; length must be a power of two.");

  m.def(
      "stft_log_power",
      [](const std::vector<double>& samples, double sample_rate, int n_fft,
         int hop, double floor_db) {
        StftConfig cfg;
        cfg.n_fft = n_fft;
        cfg.hop = hop;
        const Spectrogram spec =
            stft_log_power(Waveform{samples, sample_rate}, cfg, floor_db);
        std::vector<std::vector<double>> rows(spec.log_power.rows());
        for (std::size_t t = 0; t < spec.log_power.rows(); ++t) {
          rows[t].assign(spec.log_power.data().begin() +
                             static_cast<std::ptrdiff_t>(t * spec.log_power.cols()),
                         spec.log_power.data().begin() +
                             static_cast<std::ptrdiff_t>((t + 1) * spec.log_power.cols()));
        }
        return rows;
      },
      py::arg("samples"), py::arg("sample_rate") = 8000.0,
      py::arg("n_fft") = 64, py::arg("hop") = 32, py::arg("floor_db") = -80.0,
      "Log-power spectrogram (frames x bins), Nyquist bin removed.");

  m.def(
      "make_dataset_summary",
      [](const py::kwargs& kwargs) {
        const DatasetConfig cfg = dataset_config_from_kwargs(kwargs);
        const Dataset ds = make_dataset(cfg);
        py::dict out;
        out["config_hash"] = dataset_config_hash(cfg);
        out["train_pairs"] = ds.train.size();
        out["val_pairs"] = ds.val.size();
        out["test_pairs"] = ds.test.size();
        out["frames"] = ds.train.front().noisy.rows();
        out["bins"] = ds.train.front().noisy.cols();
        return out;
      },
      "Generates the synthetic dataset and reports its geometry.");

  m.def(
      "train",
      [](const py::kwargs& kwargs) {
        const TrainConfig cfg = train_config_from_kwargs(kwargs);
        cfg.validate();
        const Dataset ds = make_dataset(cfg.dataset);
        const TrainingReport report = train(cfg, ds);
        return report_to_dict(report, train_config_hash(cfg));
      },
      "Runs one training regime on the synthetic dataset; returns the "
      "per-epoch report.");

  m.def(
      "ablate",
      [](int seeds, const py::kwargs& kwargs) {
        const TrainConfig base = train_config_from_kwargs(kwargs);
        base.validate();
        const AblationResult result = run_ablation(base, seeds);
        py::list rows;
        for (const AblationRow& row : result.rows) {
          py::dict r;
          r["regime"] = to_string(row.regime);
          r["seed"] = row.seed;
          r["final_val_lsd"] = row.final_val_lsd;
          rows.append(r);
        }
        py::list summary;
        for (const AblationSummary& s : result.summary) {
          py::dict r;
          r["regime"] = to_string(s.regime);
          r["mean"] = s.mean;
          r["stddev"] = s.stddev;
          summary.append(r);
        }
        py::dict out;
        out["rows"] = rows;
        out["summary"] = summary;
        return out;
      },
      py::arg("seeds") = 3,
      "Four-regime ablation; every cell shares the dataset seed.");

  m.def(
      "equivalence_report",
      [](const std::string& kind, int trials, std::uint64_t seed) {
        Rng rng(seed);
        const EquivalenceReport report =
            equivalence_report(loss_kind_from_string(kind), trials, rng);
        py::dict out;
        out["kind"] = to_string(report.kind);
        out["trials"] = report.trials;
        out["max_rel_gap"] = report.max_rel_gap;
        out["worst_seed"] = report.worst_seed;
        out["gaps"] = report.gaps;
        return out;
      },
      py::arg("kind"), py::arg("trials") = 50, py::arg("seed") = 7,
      "Label-mixup vs loss-mixup parameter-gradient gap on random tiny "
      "instances.");

  m.def(
      "loss_eval",
      [](const std::string& kind, const std::vector<std::vector<double>>& pred,
         const std::vector<std::vector<double>>& target) {
        const auto to_tensor = [](const std::vector<std::vector<double>>& rows) {
          const std::size_t r = rows.size(), c = rows.empty() ? 0 : rows[0].size();
          std::vector<double> flat;
          flat.reserve(r * c);
          for (const auto& row : rows) {
            if (row.size() != c) {
              throw std::invalid_argument("ragged rows");
            }
            flat.insert(flat.end(), row.begin(), row.end());
          }
          return Tensor({r, c}, std::move(flat));
        };
        return loss_eval(loss_kind_from_string(kind), to_tensor(pred),
                         to_tensor(target));
      },
      py::arg("kind"), py::arg("prediction"), py::arg("target"),
      "Evaluates mse / cross-entropy / lsd on (frames x bins) data.");

  m.attr("__version__") = "0.1.0";
}

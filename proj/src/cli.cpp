#include "lossmix/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "lossmix/checkpoint.hpp"
#include "lossmix/config.hpp"
#include "lossmix/errors.hpp"
#include "lossmix/mixing.hpp"
#include "lossmix/trainer.hpp"

namespace lossmix::cli {

namespace {

namespace fs = std::filesystem;

std::string sig6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return std::string(buf);
}

fs::path ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF endings
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

struct Context {
  KeyValueConfig kv;
  fs::path out_root;
  int verbosity = 0;
};

int cmd_gen_data(const Context& ctx, bool force) {
  const DatasetConfig cfg = dataset_config_from(ctx.kv);
  cfg.validate();
  const std::string hash = dataset_config_hash(cfg);
  const fs::path dir = ctx.out_root / "dataset";
  const std::string existing = cached_config_hash(dir);
  if (!existing.empty()) {
    if (existing == hash) {
      std::cout << "cache up to date (config_hash=" << hash << ")\n";
      return 0;
    }
    if (!force) {
      throw IoError("dataset cache at " + dir.string() +
                    " has config_hash=" + existing + ", requested " + hash +
                    "; pass --force to overwrite");
    }
  }
  const Dataset ds = make_dataset(cfg);
  save_dataset_cache(ensure_dir(dir), ds, cfg, hash);
  std::cout << "wrote dataset cache to " << dir.string()
            << " (config_hash=" << hash << ", train=" << ds.train.size()
            << " val=" << ds.val.size() << " test=" << ds.test.size() << ")\n";
  return 0;
}

int cmd_train(const Context& ctx, bool save_ckpt) {
  const TrainConfig cfg = train_config_from(ctx.kv);
  cfg.validate();
  const std::string hash = train_config_hash(cfg);
  const Dataset ds = make_dataset(cfg.dataset);
  Model final_model;
  const TrainingReport report = train(cfg, ds, &final_model);

  const fs::path dir = ensure_dir(ctx.out_root / "train");
  const std::string stem =
      to_string(cfg.regime) + "-seed" + std::to_string(cfg.seed);

  std::string jsonl;
  for (const EpochRecord& rec : report.epochs) {
    nlohmann::json line;
    line["epoch"] = rec.epoch;
    line["train_loss"] = rec.train_loss;
    line["val_lsd"] = rec.val_lsd;
    if (rec.has_phi) {
      line["phi_q"] = {rec.phi_at_quartiles[0], rec.phi_at_quartiles[1],
                       rec.phi_at_quartiles[2]};
    }
    line["config_hash"] = hash;
    jsonl += line.dump();
    jsonl += "\n";
    if (ctx.verbosity > 0) {
      std::cout << "epoch " << rec.epoch << " train_loss=" << rec.train_loss
                << " val_lsd=" << rec.val_lsd << "\n";
    }
  }
  write_text(dir / (stem + ".jsonl"), jsonl);

  nlohmann::json summary;
  summary["config_hash"] = hash;
  summary["regime"] = to_string(cfg.regime);
  summary["seed"] = cfg.seed;
  summary["epochs"] = report.epochs.size();
  summary["config"] = {
      {"loss", to_string(cfg.loss)},
      {"batch_size", cfg.batch_size},
      {"beta_alpha", cfg.beta_alpha},
      {"capacity", cfg.mix_capacity},
      {"l2_weight", cfg.l2_weight},
      {"learning_rate", cfg.optimizer.learning_rate},
      {"dataset_seed", cfg.dataset.seed},
      {"n_pairs", cfg.dataset.n_pairs},
  };
  summary["final_train_loss"] = report.final_train_loss;
  summary["final_val_lsd"] = report.final_val_lsd;
  if (!report.epochs.empty() && report.epochs.back().has_phi) {
    const auto& q = report.epochs.back().phi_at_quartiles;
    summary["mean_phi_at_quartiles"] = {q[0], q[1], q[2]};
  }
  summary["wall_ms"] = report.wall_ms_total;  // timing only; not covered by
                                              // the determinism contract
  write_text(dir / (stem + ".summary.json"), summary.dump(2) + "\n");

  if (save_ckpt) {
    save_checkpoint(dir / (stem + ".ckpt.json"), final_model);
  }

  std::cout << "trained " << to_string(cfg.regime) << " for "
            << report.epochs.size()
            << " epochs; final val_lsd=" << report.final_val_lsd << " ("
            << dir.string() << "/" << stem << ".jsonl)\n";
  return 0;
}

int cmd_ablate(const Context& ctx, int n_seeds) {
  const TrainConfig base = train_config_from(ctx.kv);
  base.validate();
  const std::string hash = train_config_hash(base);
  const AblationResult result = run_ablation(base, n_seeds);

  std::string csv = "regime,seed,final_val_lsd\n";
  for (const AblationRow& row : result.rows) {
    csv += to_string(row.regime) + "," + std::to_string(row.seed) + "," +
           sig6(row.final_val_lsd) + "\n";
  }
  for (const AblationSummary& s : result.summary) {
    csv += "# aggregate regime=" + to_string(s.regime) +
           " mean=" + sig6(s.mean) + " stddev=" + sig6(s.stddev) + "\n";
  }
  csv +=
      "# reference-full-scale-pesq: erm=3.18 learnable-label-mixup=3.10 "
      "loss-mixup=3.20 learnable-loss-mixup=3.26\n";
  csv += "# config_hash=" + hash + "\n";

  const fs::path dir = ensure_dir(ctx.out_root / "ablate");
  write_text(dir / "ablation.csv", csv);

  nlohmann::json doc;
  doc["config_hash"] = hash;
  doc["n_seeds"] = n_seeds;
  nlohmann::json rows = nlohmann::json::array();
  for (const AblationRow& row : result.rows) {
    rows.push_back({{"regime", to_string(row.regime)},
                    {"seed", row.seed},
                    {"final_val_lsd", row.final_val_lsd}});
  }
  doc["rows"] = rows;
  nlohmann::json summary = nlohmann::json::array();
  for (const AblationSummary& s : result.summary) {
    summary.push_back({{"regime", to_string(s.regime)},
                       {"mean", s.mean},
                       {"stddev", s.stddev}});
  }
  doc["summary"] = summary;
  doc["reference_full_scale_pesq"] = {{"erm", 3.18},
                                      {"learnable-label-mixup", 3.10},
                                      {"loss-mixup", 3.20},
                                      {"learnable-loss-mixup", 3.26}};
  write_text(dir / "ablation.json", doc.dump(2) + "\n");

  std::cout << "ablation over " << result.rows.size() << " cells written to "
            << dir.string() << "\n";
  return 0;
}

std::string sanitize(const std::string& spec) {
  std::string out = spec;
  for (char& c : out) {
    if (c == ':' || c == '.') c = '_';
  }
  return out;
}

int cmd_mixfn(const Context& ctx, const std::vector<std::string>& specs,
              int points) {
  if (points < 2) throw std::invalid_argument("mixfn: --points must be >= 2");
  const fs::path dir = ensure_dir(ctx.out_root / "mixfn");
  for (const std::string& spec : specs) {
    const RhoSpec holder = parse_rho_spec(spec);
    const MixingFunction phi = holder.mixing();
    const auto table = phi_curve_table(phi, points, holder.embedding);
    const std::string hash =
        fnv1a_hex("mixfn|rho=" + spec + "|points=" + std::to_string(points));
    std::string csv = "lambda,phi\n";
    for (const auto& [lam, value] : table) {
      csv += sig6(lam) + "," + sig6(value) + "\n";
    }
    csv += "# config_hash=" + hash + "\n";
    const fs::path file = dir / ("phi-" + sanitize(spec) + ".csv");
    write_text(file, csv);
    std::cout << "wrote " << file.string() << "\n";
  }
  return 0;
}

int cmd_gradcheck(const Context& ctx, double step, bool inject_bug) {
  struct Result {
    Regime regime;
    GradCheckReport report;
    std::string worst_param;
    bool pass;
  };
  constexpr double kTolerance = 1e-5;
  std::vector<Result> results;

  bool first = true;
  for (Regime regime :
       {Regime::Erm, Regime::LabelMixup, Regime::LossMixup,
        Regime::LearnableLabelMixup, Regime::LearnableLossMixup}) {
    TrainConfig cfg;
    cfg.regime = regime;
    cfg.loss = LossKind::Lsd;
    cfg.denoiser_hidden = 8;
    cfg.bottleneck = 4;
    cfg.mlp_hidden = 6;
    cfg.seed = 42;
    const std::size_t frames = 3, bins = 6;
    Model model = make_model(cfg, bins);

    Rng data_rng(Rng::derive(cfg.seed, 0xda7a));
    const auto random_tensor = [&]() {
      Tensor t({frames, bins});
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = data_rng.normal();
      return t;
    };
    const SamplePair p0{random_tensor(), random_tensor()};
    const SamplePair p1{random_tensor(), random_tensor()};
    const double lam = 0.37;

    const std::vector<double> theta = model.flatten();
    const auto loss_at = [&](std::span<const double> params) {
      Model probe = model;
      probe.unflatten(params);
      Tape tape;
      const TapedModel staged = stage_model(tape, probe);
      const Value loss =
          regime_unit_loss(tape, staged, regime, cfg.loss, p0, p1, lam);
      return tape.value(loss);
    };

    Tape tape;
    const TapedModel staged = stage_model(tape, model);
    const Value loss =
        regime_unit_loss(tape, staged, regime, cfg.loss, p0, p1, lam);
    tape.backward(loss);
    std::vector<double> analytic = staged.gradients(tape);
    if (inject_bug && first) analytic[0] += 1e-2;
    first = false;

    const GradCheckReport report =
        gradient_check(loss_at, theta, analytic, step);
    results.push_back(Result{regime, report,
                             model.param_name(report.worst_index),
                             report.max_rel_error < kTolerance});
  }

  nlohmann::json doc;
  doc["step"] = step;
  doc["tolerance"] = kTolerance;
  doc["config_hash"] = fnv1a_hex("gradcheck|step=" + std::to_string(step));
  nlohmann::json objectives = nlohmann::json::array();
  bool all_pass = true;
  std::string first_failure;
  for (const Result& r : results) {
    objectives.push_back({{"regime", to_string(r.regime)},
                          {"max_rel_error", r.report.max_rel_error},
                          {"worst_param", r.worst_param},
                          {"pass", r.pass}});
    std::printf("%-24s max_rel_error=%.3e worst=%s %s\n",
                to_string(r.regime).c_str(), r.report.max_rel_error,
                r.worst_param.c_str(), r.pass ? "PASS" : "FAIL");
    if (!r.pass && all_pass) {
      all_pass = false;
      first_failure = to_string(r.regime);
    }
  }
  doc["objectives"] = objectives;
  const fs::path dir = ensure_dir(ctx.out_root / "gradcheck");
  write_text(dir / "report.json", doc.dump(2) + "\n");

  if (!all_pass) {
    std::cerr << "gradient check failed for objective '" << first_failure
              << "'\n";
    return 2;
  }
  return 0;
}

}  // namespace

MixingFunction RhoSpec::mixing() const {
  switch (kind) {
    case Kind::Identity:
      return MixingFunction{RhoFunction::identity()};
    case Kind::Power:
      return MixingFunction{RhoFunction::power(power)};
    case Kind::Neural:
      return MixingFunction{RhoFunction::neural(mlp.get(), 5.0)};
  }
  return MixingFunction{RhoFunction::identity()};
}

RhoSpec parse_rho_spec(const std::string& spec) {
  RhoSpec out;
  if (spec == "identity") {
    return out;
  }
  if (spec.rfind("pow:", 0) == 0) {
    const std::string arg = spec.substr(4);
    try {
      std::size_t pos = 0;
      const double c = std::stod(arg, &pos);
      if (pos != arg.size()) throw std::invalid_argument("trailing");
      RhoFunction::power(c);  // validates c > 0
      out.kind = RhoSpec::Kind::Power;
      out.power = c;
      return out;
    } catch (const std::exception&) {
      throw std::invalid_argument("malformed rho spec '" + spec +
                                  "': expected pow:<positive number>");
    }
  }
  if (spec.rfind("neural:", 0) == 0) {
    const std::string arg = spec.substr(7);
    try {
      std::size_t pos = 0;
      const unsigned long long seed = std::stoull(arg, &pos);
      if (pos != arg.size()) throw std::invalid_argument("trailing");
      Rng rng(seed);
      out.kind = RhoSpec::Kind::Neural;
      out.mlp = std::make_shared<Network>(make_rho_mlp(4, 8, rng));
      out.embedding.resize(4);
      for (double& v : out.embedding) v = rng.normal();
      return out;
    } catch (const std::exception&) {
      throw std::invalid_argument("malformed rho spec '" + spec +
                                  "': expected neural:<seed>");
    }
  }
  throw std::invalid_argument("malformed rho spec '" + spec +
                              "': expected identity, pow:<c> or "
                              "neural:<seed>");
}

int run(std::vector<std::string> args) {
  CLI::App app{"loss-mixup training laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed_override = 0;
  int verbosity = 0;
  app.add_option("--config", config_path, "key-value config file");
  app.add_option("--out", out_dir, "output directory root");
  auto* seed_opt =
      app.add_option("--seed", seed_override, "training seed override");
  app.add_flag("-v,--verbose", verbosity, "verbose progress output");

  auto* gen = app.add_subcommand("gen-data", "write the dataset cache");
  bool force = false;
  gen->add_flag("--force", force, "overwrite a differing-hash cache");

  auto* train_cmd = app.add_subcommand("train", "train one regime");
  std::string regime;
  int epochs = 0, batch_size = 0;
  std::string loss_name;
  double alpha = 0.0, capacity = 0.0, l2 = -1.0;
  bool save_ckpt = false;
  auto* regime_opt = train_cmd->add_option(
      "--regime", regime,
      "erm | label-mixup | loss-mixup | learnable-label-mixup | "
      "learnable-loss-mixup");
  auto* epochs_opt = train_cmd->add_option("--epochs", epochs, "epoch count");
  auto* batch_opt =
      train_cmd->add_option("--batch-size", batch_size, "batch size");
  auto* loss_opt =
      train_cmd->add_option("--loss", loss_name, "mse | cross-entropy | lsd");
  auto* alpha_opt = train_cmd->add_option(
      "--alpha", alpha, "Beta concentration for the fixed mixup regimes");
  auto* capacity_opt =
      train_cmd->add_option("--capacity", capacity, "neural rho capacity C");
  auto* l2_opt = train_cmd->add_option("--l2", l2, "l2 regularization weight");
  train_cmd->add_flag("--save-checkpoint", save_ckpt,
                      "write the final parameter checkpoint");

  auto* ablate_cmd =
      app.add_subcommand("ablate", "compare the four regimes over seeds");
  int n_seeds = 3;
  ablate_cmd->add_option("--seeds", n_seeds, "seeds per regime")
      ->check(CLI::PositiveNumber);
  auto* ablate_epochs_opt =
      ablate_cmd->add_option("--epochs", epochs, "epoch count");

  auto* mixfn_cmd =
      app.add_subcommand("mixfn", "emit mixing-function curve tables");
  std::vector<std::string> rho_specs{"identity"};
  int points = 101;
  mixfn_cmd->add_option("--rho", rho_specs,
                        "rho specs: identity, pow:<c>, neural:<seed>");
  mixfn_cmd->add_option("--points", points, "table rows");

  auto* gradcheck_cmd = app.add_subcommand(
      "gradcheck", "finite-difference checks for every objective");
  double step = 1e-6;
  gradcheck_cmd->add_option("--step", step, "finite-difference step");
  bool inject_bug = false;
  gradcheck_cmd->add_flag("--self-test-bug", inject_bug)->group("");

  std::vector<char*> argv;
  std::vector<std::string> storage = std::move(args);
  std::string prog = "lossmix";
  argv.push_back(prog.data());
  for (std::string& a : storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    Context ctx;
    if (!config_path.empty()) {
      ctx.kv = KeyValueConfig::parse_file(config_path);
    }
    if (seed_opt->count() > 0) {
      ctx.kv.values["train.seed"] = std::to_string(seed_override);
    }
    if (regime_opt->count() > 0) ctx.kv.values["train.regime"] = regime;
    if (epochs_opt->count() > 0 || ablate_epochs_opt->count() > 0) {
      ctx.kv.values["train.epochs"] = std::to_string(epochs);
    }
    if (batch_opt->count() > 0) {
      ctx.kv.values["train.batch_size"] = std::to_string(batch_size);
    }
    if (loss_opt->count() > 0) ctx.kv.values["train.loss"] = loss_name;
    if (alpha_opt->count() > 0) {
      ctx.kv.values["mixing.beta_alpha"] = std::to_string(alpha);
    }
    if (capacity_opt->count() > 0) {
      ctx.kv.values["mixing.capacity"] = std::to_string(capacity);
    }
    if (l2_opt->count() > 0) {
      ctx.kv.values["train.l2_weight"] = std::to_string(l2);
    }

    if (!out_dir.empty()) {
      ctx.out_root = out_dir;
    } else if (const char* env = std::getenv("LOSSMIX_OUT_ROOT")) {
      ctx.out_root = env;
    } else {
      ctx.out_root = "out";
    }
    ensure_dir(ctx.out_root);
    ctx.verbosity = verbosity;

    if (gen->parsed()) return cmd_gen_data(ctx, force);
    if (train_cmd->parsed()) return cmd_train(ctx, save_ckpt);
    if (ablate_cmd->parsed()) return cmd_ablate(ctx, n_seeds);
    if (mixfn_cmd->parsed()) return cmd_mixfn(ctx, rho_specs, points);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(ctx, step, inject_bug);
    std::cerr << "no subcommand\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "i/o failure: " << e.what() << "\n";
    return 3;
  } catch (const ConfigParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace lossmix::cli

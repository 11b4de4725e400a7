// Command-line entry point: training, inference, evaluation, synthetic data
// generation, and gradient self-verification.
//
// Exit codes: 0 success, 1 verification failure, 2 usage/input error,
// 3 numeric failure.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include "msff/checkpoint.hpp"
#include "msff/dataset.hpp"
#include "msff/gradcheck.hpp"
#include "msff/image_io.hpp"
#include "msff/losses.hpp"
#include "msff/synth.hpp"
#include "msff/trainer.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailure = 1;
constexpr int kUsageError = 2;
constexpr int kNumericFailure = 3;

struct TrainArgs {
  std::string config_path;
  std::string data_dir;
  std::string out_dir;
  std::string profile = "desk";
  double lambda = -1.0;  // negative = keep profile/config value
  long long seed = -1;
};

int cmd_train(const TrainArgs& args) {
  msff::TrainConfig cfg = msff::profile_by_name(args.profile);
  if (!args.config_path.empty()) msff::apply_config_file(cfg, args.config_path);
  if (args.lambda >= 0) cfg.lambda = args.lambda;
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  cfg.validate();
  const std::vector<msff::Scene> dataset = msff::load_dataset(args.data_dir);
  const msff::TrainRun run = msff::train(cfg, dataset, args.out_dir);
  std::printf("trained %lld steps, %d epochs; l_tm=%.6f l_reg=%.6f total=%.6f\n",
              static_cast<long long>(run.steps_run), run.state.epoch, run.last.l_tm,
              run.last.l_reg, run.last.total);
  std::printf("wrote %s/final.ckpt and %s/losses.csv\n", args.out_dir.c_str(),
              args.out_dir.c_str());
  return kOk;
}

struct InferArgs {
  std::string ckpt;
  std::string scene_dir;
  std::string out_pfm;
  std::string dump_flow_dir;
  std::string tonemapped_png;
};

int cmd_infer(const InferArgs& args) {
  msff::TrainState state = msff::load_checkpoint(args.ckpt);
  msff::DtypeScope mode(state.config.numeric_mode);
  const msff::Scene scene = msff::load_scene(args.scene_dir);
  const msff::InferenceResult res =
      msff::infer_full(state.net, scene.stack, state.config.gamma);
  msff::save_hdr(args.out_pfm, res.h_hat);
  if (!args.dump_flow_dir.empty()) {
    std::filesystem::create_directories(args.dump_flow_dir);
    for (int s = 0; s < 3; ++s)
      msff::save_flow_pfm(args.dump_flow_dir + "/flow_s" + std::to_string(s) + ".pfm",
                          res.flows[static_cast<std::size_t>(s)]);
  }
  if (!args.tonemapped_png.empty()) {
    const msff::HdrImage& h = res.h_hat;
    std::vector<std::uint8_t> rgb(h.rgb.size());
    const double denom = std::log1p(state.config.mu);
    for (std::size_t i = 0; i < h.rgb.size(); ++i) {
      const double t =
          std::log1p(state.config.mu * std::clamp(static_cast<double>(h.rgb[i]), 0.0, 1.0)) /
          denom;
      rgb[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
    }
    msff::save_png8(args.tonemapped_png, rgb, h.height, h.width);
  }
  std::printf("wrote %s (%dx%d)\n", args.out_pfm.c_str(), res.h_hat.width, res.h_hat.height);
  return kOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string data_dir;
  std::string csv_path;
};

int cmd_eval(const EvalArgs& args) {
  msff::TrainState state = msff::load_checkpoint(args.ckpt);
  msff::DtypeScope mode(state.config.numeric_mode);
  const std::vector<msff::Scene> scenes = msff::load_dataset(args.data_dir);
  const msff::MetricsReport report =
      msff::evaluate(state.net, scenes, state.config.mu, state.config.gamma);
  if (report.scenes.empty()) {
    std::fprintf(stderr, "error: no scene in %s carries gt.pfm\n", args.data_dir.c_str());
    return kUsageError;
  }
  std::ofstream csv(args.csv_path);
  if (!csv) {
    std::fprintf(stderr, "error: cannot open %s\n", args.csv_path.c_str());
    return kUsageError;
  }
  csv << msff::metrics_csv(report);
  std::cout << msff::metrics_table(report);
  return kOk;
}

struct SynthArgs {
  std::string out_dir;
  int count = 4;
  int size = 64;
  int max_shift = 4;
  long long seed = 0;
  double sat_frac = 0.25;
};

int cmd_synth(const SynthArgs& args) {
  std::mt19937_64 rng(static_cast<std::uint64_t>(args.seed));
  for (int i = 0; i < args.count; ++i) {
    msff::SynthParams p;
    p.seed = rng();
    p.size = args.size;
    if (args.max_shift > 0) {
      // Integer shifts: the rendered pair then matches exactly under the
      // ground-truth warp on interior pixels.
      p.dx = static_cast<double>(static_cast<long long>(rng() % (2 * args.max_shift + 1)) -
                                 args.max_shift);
      p.dy = static_cast<double>(static_cast<long long>(rng() % (2 * args.max_shift + 1)) -
                                 args.max_shift);
    }
    p.t1 = 1.0;
    p.t2 = 4.0;
    p.saturation_fraction = args.sat_frac;
    char name[32];
    std::snprintf(name, sizeof(name), "/scene_%03d", i);
    msff::write_synthetic_scene(args.out_dir + name, msff::synth_scene(p));
  }
  std::printf("wrote %d scenes under %s\n", args.count, args.out_dir.c_str());
  return kOk;
}

struct GradcheckArgs {
  std::string op = "all";
  double eps = 1e-5;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  std::vector<std::string> ops;
  if (args.op == "all") {
    ops = msff::gradcheck_op_names();
  } else {
    const auto known = msff::gradcheck_op_names();
    if (std::find(known.begin(), known.end(), args.op) == known.end()) {
      std::fprintf(stderr, "error: unknown op '%s'; available:", args.op.c_str());
      for (const auto& name : known) std::fprintf(stderr, " %s", name.c_str());
      std::fprintf(stderr, "\n");
      return kUsageError;
    }
    ops.push_back(args.op);
  }
  std::vector<std::string> offenders;
  for (const std::string& op : ops) {
    const msff::GradCheckResult res = msff::run_gradcheck(op, args.eps);
    std::printf("%-18s max_rel_err %.3e (threshold %.0e) %s\n", res.op.c_str(),
                res.max_rel_error, res.threshold, res.passed() ? "PASS" : "FAIL");
    if (!res.passed()) offenders.push_back(op);
  }
  if (!offenders.empty()) {
    std::fprintf(stderr, "gradcheck failed for:");
    for (const auto& op : offenders) std::fprintf(stderr, " %s", op.c_str());
    std::fprintf(stderr, "\n");
    return kVerificationFailure;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  msff::init_threads_from_env();
  CLI::App app{"Two-exposure HDR deghosting with multi-scale feature flow"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model on a scene directory");
  train->add_option("--config", train_args.config_path,
                    "Key = value config file overriding the profile");
  train->add_option("--data", train_args.data_dir, "Dataset directory of scenes")->required();
  train->add_option("--out", train_args.out_dir, "Output directory for checkpoints and logs")
      ->required();
  train->add_option("--profile", train_args.profile, "Config profile: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}));
  train->add_option("--lambda", train_args.lambda, "Weight of the regularized loss");
  train->add_option("--seed", train_args.seed, "Run seed");

  InferArgs infer_args;
  CLI::App* infer = app.add_subcommand("infer", "Reconstruct an HDR image for one scene");
  infer->add_option("--ckpt", infer_args.ckpt, "Checkpoint file")->required();
  infer->add_option("--scene", infer_args.scene_dir, "Scene directory")->required();
  infer->add_option("--out", infer_args.out_pfm, "Output PFM path")->required();
  infer->add_option("--dump-flow", infer_args.dump_flow_dir,
                    "Directory for per-scale flow PFM dumps");
  infer->add_option("--tonemapped", infer_args.tonemapped_png,
                    "Optional 8-bit tonemapped preview PNG");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint against ground truth");
  eval->add_option("--ckpt", eval_args.ckpt, "Checkpoint file")->required();
  eval->add_option("--data", eval_args.data_dir, "Dataset directory of scenes")->required();
  eval->add_option("--csv", eval_args.csv_path, "Metrics CSV output path")->required();

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate synthetic scenes with ground truth");
  synth->add_option("--out", synth_args.out_dir, "Output dataset directory")->required();
  synth->add_option("--count", synth_args.count, "Number of scenes");
  synth->add_option("--size", synth_args.size, "Scene size in pixels");
  synth->add_option("--max-shift", synth_args.max_shift, "Max |translation| in pixels");
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_option("--sat-frac", synth_args.sat_frac,
                    "Fraction of reference pixels driven into saturation");

  GradcheckArgs gc_args;
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Verify gradients by finite differences");
  gradcheck->add_option("--op", gc_args.op, "Op name or 'all'");
  gradcheck->add_option("--eps", gc_args.eps, "Finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (infer->parsed()) return cmd_infer(infer_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (synth->parsed()) return cmd_synth(synth_args);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_args);
  } catch (const msff::NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kNumericFailure;
  } catch (const msff::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kUsageError;
  } catch (const msff::IoError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kUsageError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsageError;
  }
  return kUsageError;
}

#include "msff/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "msff/dataset.hpp"
#include "msff/synth.hpp"

namespace msff {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Hand-rolled Fisher-Yates so shuffle order does not depend on the stdlib.
void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
}

struct Batch {
  Tensor x1, xr, gt;
};

Batch build_batch(const std::vector<PatchSample>& patches, double gamma) {
  std::vector<const LdrImage*> l1, l2;
  l1.reserve(patches.size());
  l2.reserve(patches.size());
  for (const PatchSample& p : patches) {
    l1.push_back(&p.ldr[0]);
    l2.push_back(&p.ldr[1]);
  }
  Batch b;
  b.x1 = make_input_batch(l1, gamma);
  b.xr = make_input_batch(l2, gamma);
  const int size = patches[0].size();
  b.gt = Tensor::zeros({static_cast<int>(patches.size()), 3, size, size});
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const HdrImage& gt = *patches[i].gt;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c)
          b.gt.set(static_cast<int>(i), c, y, x, gt.at(y, x, c));
  }
  return b;
}

TrainRun train_loop(TrainState state, const std::vector<Scene>& dataset,
                    const std::string& out_dir) {
  const TrainConfig& cfg = state.config;
  cfg.validate();
  if (dataset.empty()) throw ConfigError("train: dataset is empty");
  for (const Scene& s : dataset)
    if (!s.stack.gt) throw ConfigError("train: scene '" + s.name + "' has no ground truth");

  DtypeScope mode(cfg.numeric_mode);
  std::filesystem::create_directories(out_dir);

  std::vector<PatchSample> patches;
  for (const Scene& s : dataset) {
    auto scene_patches = crop_patches(s, cfg.patch_size, cfg.patch_stride);
    for (auto& p : scene_patches) patches.push_back(std::move(p));
  }

  const ParamList params = state.net.parameters();

  std::ofstream csv(out_dir + "/losses.csv");
  if (!csv) throw std::runtime_error("cannot open " + out_dir + "/losses.csv");
  csv << "epoch,step,l_tm,l_reg,total,lr\n";

  TrainRun run;
  run.steps_run = 0;
  char row[256];
  std::int64_t step = state.step;
  bool stop = false;

  for (int epoch = state.epoch; epoch < cfg.epochs && !stop; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_final);
    std::mt19937_64 rng(epoch_stream_seed(cfg.seed, epoch));
    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_indices(order, rng);

    for (std::size_t pos = 0; pos < order.size() && !stop;
         pos += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size));
      std::vector<PatchSample> batch_patches;
      batch_patches.reserve(end - pos);
      for (std::size_t i = pos; i < end; ++i)
        batch_patches.push_back(augment(patches[order[i]], rng));
      Batch batch = build_batch(batch_patches, cfg.gamma);

      Tape tape;
      for (const auto& [name, p] : params) p.zero_grad();
      MsffNet::Outputs out = state.net.forward(batch.x1, batch.xr);
      TotalLoss loss = total_loss(out.h_hat, out.h_of, batch.gt, cfg.lambda, cfg.mu);
      if (!std::isfinite(loss.report.total)) {
        const std::string tag = out_dir + "/diagnostic_step" + std::to_string(step);
        batch.x1.save_txt(tag + "_x1.txt");
        batch.xr.save_txt(tag + "_xr.txt");
        batch.gt.save_txt(tag + "_gt.txt");
        throw NumericError("non-finite loss at step " + std::to_string(step) +
                           "; batch dumped to " + tag + "_*.txt");
      }
      tape.backward(loss.value);
      state.adam.step(params, lr);
      ++step;
      ++run.steps_run;
      run.last = loss.report;
      std::snprintf(row, sizeof(row), "%d,%lld,%.17g,%.17g,%.17g,%.17g\n", epoch,
                    static_cast<long long>(step), loss.report.l_tm, loss.report.l_reg,
                    loss.report.total, lr);
      csv << row;
      if (cfg.target_l_tm > 0 && loss.report.l_tm < cfg.target_l_tm) {
        run.reached_target = true;
        stop = true;
      }
    }
    state.epoch = epoch + 1;
    state.step = step;
    if (cfg.checkpoint_interval > 0 && state.epoch % cfg.checkpoint_interval == 0 && !stop) {
      std::snprintf(row, sizeof(row), "%s/epoch_%04d.ckpt", out_dir.c_str(), state.epoch);
      save_checkpoint(row, state);
    }
  }
  state.step = step;
  save_checkpoint(out_dir + "/final.ckpt", state);
  run.state = std::move(state);
  return run;
}

}  // namespace

std::uint64_t epoch_stream_seed(std::uint64_t seed, int epoch) {
  return splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch) + 1));
}

TrainRun train(const TrainConfig& cfg, const std::vector<Scene>& dataset,
               const std::string& out_dir) {
  cfg.validate();
  DtypeScope mode(cfg.numeric_mode);
  TrainState state;
  state.config = cfg;
  state.net = MsffNet(cfg.channels, cfg.seed);
  state.adam = Adam(state.net.parameters(), cfg.beta1, cfg.beta2, cfg.adam_eps);
  state.epoch = 0;
  state.step = 0;
  return train_loop(std::move(state), dataset, out_dir);
}

TrainRun train_resume(TrainState state, const std::vector<Scene>& dataset,
                      const std::string& out_dir) {
  return train_loop(std::move(state), dataset, out_dir);
}

MetricsReport evaluate(const MsffNet& net, const std::vector<Scene>& scenes, double mu,
                       double gamma) {
  MetricsReport report;
  for (const Scene& scene : scenes) {
    if (!scene.stack.gt) {
      std::cerr << "warning: scene '" << scene.name << "' has no gt.pfm, skipping\n";
      continue;
    }
    const InferenceResult res = infer_full(net, scene.stack, gamma);
    report.scenes.push_back(compute_scene_metrics(scene.name, res.h_hat, *scene.stack.gt, mu));
  }
  return report;
}

}  // namespace msff

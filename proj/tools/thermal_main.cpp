// thermal: dataset generation, training, inference, evaluation.
#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "thermal/capi.h"

namespace {

int finish(thermal_status st, const char* verb) {
  if (st == THERMAL_OK) return 0;
  std::fprintf(stderr, "thermal %s failed: %s\n", verb, thermal_last_error());
  return (int)st;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermal - 2D die thermal simulation and surrogate pipeline"};
  app.require_subcommand(1);

  // --- gen ---------------------------------------------------------------
  auto* gen = app.add_subcommand("gen", "Generate a simulated dataset");
  int g_layouts = 12;
  uint64_t g_seed = 0;
  std::string g_profile = "nominal", g_out;
  int g_w = 64, g_h = 64, g_frames = 100, g_threads = 0;
  double g_dt = 1e-3;
  int g_basic = 0, g_seq = 0, g_comb = 0;
  gen->add_option("--layouts", g_layouts, "number of circuit layouts")->capture_default_str();
  gen->add_option("--seed", g_seed, "master seed")->capture_default_str();
  gen->add_option("--profile", g_profile, "nominal | extended")->capture_default_str();
  gen->add_option("--out", g_out, "output directory")->required();
  gen->add_option("--width", g_w, "grid width")->capture_default_str();
  gen->add_option("--height", g_h, "grid height")->capture_default_str();
  gen->add_option("--frames", g_frames, "frames per sequence")->capture_default_str();
  gen->add_option("--dt", g_dt, "frame period, seconds")->capture_default_str();
  gen->add_option("--threads", g_threads, "worker cap (0 = auto)")->capture_default_str();
  gen->add_option("--mix-basic", g_basic, "basic gates per layout (0 = default mix)");
  gen->add_option("--mix-sequential", g_seq, "sequential cells per layout");
  gen->add_option("--mix-combinational", g_comb, "combinational blocks per layout");

  // --- train / ablate ----------------------------------------------------
  std::string t_data, t_out = "model.thmw", t_history, t_ablate;
  double t_lambda = -1, t_lr = -1, t_dropout = -1, t_noise = -1;
  int t_epochs = 0, t_batch = 0, t_channels = 0, t_depth = 0, t_pos = -1, t_patience = 0;
  uint64_t t_seed = 0;
  auto add_train_flags = [&](CLI::App* c, bool with_out) {
    c->add_option("--data", t_data, "dataset directory")->required();
    if (with_out) {
      c->add_option("--out", t_out, "checkpoint path")->capture_default_str();
      c->add_option("--history", t_history, "history json path");
      c->add_option("--ablate", t_ablate, "pair | physics | concat");
    }
    c->add_option("--lambda", t_lambda, "physics-loss weight (default 0.1)");
    c->add_option("--lr", t_lr, "learning rate (default 1e-3)");
    c->add_option("--epochs", t_epochs, "max epochs (default 60)");
    c->add_option("--batch", t_batch, "batch size (default 8)");
    c->add_option("--channels", t_channels, "base channels (default 8)");
    c->add_option("--depth", t_depth, "encoder depth (default 3)");
    c->add_option("--pos-dim", t_pos, "positional channels (default 16)");
    c->add_option("--dropout", t_dropout, "dropout rate (default 0.25)");
    c->add_option("--noise", t_noise, "input noise sigma (default 0.01)");
    c->add_option("--patience", t_patience, "early-stop patience (default 10)");
    c->add_option("--seed", t_seed, "training seed")->capture_default_str();
  };
  auto* tr = app.add_subcommand("train", "Train the surrogate on a dataset");
  add_train_flags(tr, true);
  auto* ab = app.add_subcommand("ablate", "Run the four-config ablation grid");
  std::string a_out = "ablation";
  add_train_flags(ab, false);
  ab->add_option("--out", a_out, "output directory")->capture_default_str();

  // --- infer ---------------------------------------------------------------
  auto* inf = app.add_subcommand("infer", "Free-running rollout from a sequence");
  std::string i_model, i_input, i_cond, i_out, i_render;
  int i_steps = 100;
  bool i_png = false;
  inf->add_option("--model", i_model, "checkpoint path")->required();
  inf->add_option("--input", i_input, "query sequence (.thm)")->required();
  inf->add_option("--cond", i_cond, "conditioning sequence (default: input)");
  inf->add_option("--steps", i_steps, "rollout steps")->capture_default_str();
  inf->add_option("--out", i_out, "predicted sequence output path");
  inf->add_option("--render", i_render, "directory for stage heatmaps");
  inf->add_flag("--png", i_png, "emit PNGs next to the PGMs");

  // --- eval ----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Evaluate a model against a dataset");
  std::string e_model, e_data, e_report = "report.json", e_split = "val";
  int e_steps = 0, e_runs = 0;
  bool e_bench = false;
  uint64_t e_seed = 0;
  ev->add_option("--model", e_model, "checkpoint path")->required();
  ev->add_option("--data", e_data, "dataset directory")->required();
  ev->add_option("--report", e_report, "report json path")->capture_default_str();
  ev->add_option("--split", e_split, "train | val")->capture_default_str();
  ev->add_option("--steps", e_steps, "rollout steps (default 100)");
  ev->add_flag("--bench", e_bench, "add single-threaded timing comparison");
  ev->add_option("--runs", e_runs, "benchmark repetitions (default 5)");
  ev->add_option("--seed", e_seed, "partner-selection seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 1 : 0;
  }

  if (gen->parsed()) {
    thermal_gen_opts o{};
    o.layouts = g_layouts;
    o.seed = g_seed;
    o.profile = g_profile.c_str();
    o.width = g_w;
    o.height = g_h;
    o.frames = g_frames;
    o.frame_dt = g_dt;
    o.threads = g_threads;
    o.mix_basic = g_basic;
    o.mix_sequential = g_seq;
    o.mix_combinational = g_comb;
    int rc = finish(thermal_gen(&o, g_out.c_str()), "gen");
    if (rc == 0) std::printf("dataset written to %s\n", g_out.c_str());
    return rc;
  }

  if (tr->parsed() || ab->parsed()) {
    thermal_train_opts o{};
    o.data_dir = t_data.c_str();
    o.out_model = t_out.c_str();
    o.out_history = t_history.empty() ? nullptr : t_history.c_str();
    o.ablate = t_ablate.empty() ? nullptr : t_ablate.c_str();
    o.lambda = t_lambda;
    o.lr = t_lr;
    o.epochs = t_epochs;
    o.batch = t_batch;
    o.base_channels = t_channels;
    o.depth = t_depth;
    o.pos_dim = t_pos;
    o.dropout = t_dropout;
    o.noise_sigma = t_noise;
    o.early_stop_patience = t_patience;
    o.seed = t_seed;
    if (ab->parsed()) {
      int rc = finish(thermal_ablate(&o, a_out.c_str()), "ablate");
      if (rc == 0) std::printf("ablation table written to %s/ablation.txt\n", a_out.c_str());
      return rc;
    }
    int rc = finish(thermal_train(&o), "train");
    if (rc == 0) std::printf("checkpoint written to %s\n", t_out.c_str());
    return rc;
  }

  if (inf->parsed()) {
    thermal_infer_opts o{};
    o.model = i_model.c_str();
    o.input_seq = i_input.c_str();
    o.cond_seq = i_cond.empty() ? nullptr : i_cond.c_str();
    o.steps = i_steps;
    o.out_seq = i_out.empty() ? nullptr : i_out.c_str();
    o.render_dir = i_render.empty() ? nullptr : i_render.c_str();
    o.png = i_png ? 1 : 0;
    int rc = finish(thermal_infer(&o), "infer");
    if (rc == 0 && !i_out.empty()) std::printf("prediction written to %s\n", i_out.c_str());
    return rc;
  }

  if (ev->parsed()) {
    thermal_eval_opts o{};
    o.model = e_model.c_str();
    o.data_dir = e_data.c_str();
    o.out_report = e_report.c_str();
    o.split = e_split.c_str();
    o.steps = e_steps;
    o.bench = e_bench ? 1 : 0;
    o.bench_runs = e_runs;
    o.seed = e_seed;
    int rc = finish(thermal_eval(&o), "eval");
    if (rc == 0) std::printf("report written to %s\n", e_report.c_str());
    return rc;
  }

  return 1;
}

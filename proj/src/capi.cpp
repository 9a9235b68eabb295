#include "thermal/capi.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include <json.hpp>

#include "dataset.hpp"
#include "evalrep.hpp"
#include "field.hpp"
#include "hash.hpp"
#include "model.hpp"
#include "render.hpp"
#include "rng.hpp"
#include "solver.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace thermal;

struct thermal_sequence {
  FieldSequence seq;
};
struct thermal_model {
  SurrogateModel model;
};

namespace {

thread_local std::string g_last_error = "no error";

thermal_status fail(thermal_status st, const char* msg) {
  g_last_error = msg;
  return st;
}

template <typename Fn>
thermal_status wrap(Fn&& fn) {
  try {
    fn();
    return THERMAL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return e.kind == Error::Kind::InvalidArgument ? THERMAL_EINVAL : THERMAL_ERUNTIME;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return THERMAL_ERUNTIME;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return THERMAL_ERUNTIME;
  }
}

ordered_json arch_to_json(const ArchConfig& a) {
  ordered_json j;
  j["base_channels"] = a.base_channels;
  j["depth"] = a.depth;
  j["dilation_rates"] = a.dilation_rates;
  j["pos_dim"] = a.pos_dim;
  j["concat_mode"] = a.concat_mode == ConcatMode::PixelLevel ? "PixelLevel" : "FeatureLevel";
  j["use_pair_conditioning"] = a.use_pair_conditioning;
  j["shared_encoders"] = a.shared_encoders;
  j["bilinear_decoder"] = a.bilinear_decoder;
  j["dropout_rate"] = a.dropout_rate;
  return j;
}

struct TrainSetup {
  DatasetManifest man;
  std::vector<NormRecord> train_recs, val_recs;
  ArchConfig arch;
  TrainConfig cfg;
  std::vector<std::string> warnings;
};

TrainSetup prepare_training(const thermal_train_opts& o) {
  if (!o.data_dir || !*o.data_dir) fail_arg("train: data_dir is required");
  TrainSetup s;
  s.man = load_manifest((fs::path(o.data_dir) / "manifest.json").string());

  std::string warn;
  auto pairs_t = make_pairs(s.man, "train", derive_seed(o.seed, 0x7121), &warn);
  if (!warn.empty()) s.warnings.push_back(warn);
  warn.clear();
  std::vector<PairRecord> pairs_v;
  if (!s.man.val_ids.empty()) {
    pairs_v = make_pairs(s.man, "val", derive_seed(o.seed, 0x7122), &warn);
    if (!warn.empty()) s.warnings.push_back(warn);
  }
  for (const auto& p : pairs_t) s.train_recs.push_back(to_norm_record(p, s.man.normalization));
  for (const auto& p : pairs_v) s.val_recs.push_back(to_norm_record(p, s.man.normalization));

  s.arch.base_channels = o.base_channels > 0 ? o.base_channels : 8;
  s.arch.depth = o.depth > 0 ? o.depth : 3;
  s.arch.dilation_rates.clear();
  for (int l = 0; l < s.arch.depth; ++l) s.arch.dilation_rates.push_back(std::min(1 << l, 8));
  s.arch.pos_dim = o.pos_dim >= 0 ? o.pos_dim : 16;
  s.arch.dropout_rate = o.dropout >= 0 ? o.dropout : 0.25;

  s.cfg.lambda = o.lambda >= 0 ? o.lambda : 0.1;
  s.cfg.lr = o.lr > 0 ? o.lr : 1e-3;
  s.cfg.epochs = o.epochs > 0 ? o.epochs : 60;
  s.cfg.batch = o.batch > 0 ? o.batch : 8;
  s.cfg.dropout = s.arch.dropout_rate;
  s.cfg.noise_sigma = o.noise_sigma >= 0 ? o.noise_sigma : 0.01;
  s.cfg.early_stop_patience = o.early_stop_patience > 0 ? o.early_stop_patience : 10;
  s.cfg.seed = o.seed;

  std::string ab = o.ablate ? o.ablate : "";
  if (ab == "pair") s.arch.use_pair_conditioning = false;
  else if (ab == "physics") s.cfg.lambda = 0.0;
  else if (ab == "concat") s.arch.concat_mode = ConcatMode::PixelLevel;
  else if (!ab.empty()) fail_arg("train: unknown ablation \"" + ab + "\"");
  return s;
}

void write_history(const std::string& path, const TrainSetup& s, const TrainResult& res) {
  ordered_json j;
  j["schema"] = 1;
  j["arch"] = arch_to_json(s.arch);
  j["train"] = {{"lambda", s.cfg.lambda},   {"lr", s.cfg.lr},
                {"beta1", s.cfg.beta1},     {"beta2", s.cfg.beta2},
                {"batch", s.cfg.batch},     {"epochs", s.cfg.epochs},
                {"dropout", s.cfg.dropout}, {"noise_sigma", s.cfg.noise_sigma},
                {"early_stop_patience", s.cfg.early_stop_patience},
                {"lr_decay", s.cfg.lr_decay}, {"lr_decay_every", s.cfg.lr_decay_every},
                {"seed", s.cfg.seed}};
  j["dataset_hash"] = s.man.sim_hash();
  j["n_train_records"] = s.train_recs.size();
  j["n_val_records"] = s.val_recs.size();
  ordered_json rows = ordered_json::array();
  for (const auto& e : res.history)
    rows.push_back({{"epoch", e.epoch},
                    {"lr", e.lr},
                    {"train_total", e.train_total},
                    {"train_rmse", e.train_rmse},
                    {"train_physics", e.train_physics},
                    {"val_total", e.val_total},
                    {"val_rmse", e.val_rmse},
                    {"val_physics", e.val_physics}});
  j["epochs"] = rows;
  j["best_epoch"] = res.best_epoch;
  j["diverged"] = res.diverged;
  j["message"] = res.message;
  j["warnings"] = s.warnings;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_run("cannot write history: " + path);
  out << j.dump(2) << "\n";
  if (!out) fail_run("write failed for history: " + path);
}

TrainResult run_training(const TrainSetup& s) {
  return train(s.train_recs, s.val_recs, s.arch, profile_normalization(s.man.profile),
               s.man.frame_dt, s.cfg, s.man.sim.alpha);
}

}  // namespace

extern "C" {

const char* thermal_last_error(void) { return g_last_error.c_str(); }

int thermal_api_version(void) { return 1; }

int thermal_png_supported(void) { return png_supported() ? 1 : 0; }

/* ------------------------------------------------------------------ */

thermal_status thermal_sequence_read(const char* path, thermal_sequence** out) {
  if (!path || !out) return fail(THERMAL_EINVAL, "sequence_read: null argument");
  *out = nullptr;
  return wrap([&] { *out = new thermal_sequence{read_sequence(path)}; });
}

thermal_status thermal_sequence_create(uint32_t width, uint32_t height, uint32_t frames,
                                       double frame_dt, double pitch, const double* data,
                                       thermal_sequence** out) {
  if (!data || !out) return fail(THERMAL_EINVAL, "sequence_create: null argument");
  *out = nullptr;
  return wrap([&] {
    GridSpec g;
    g.width = (int)width;
    g.height = (int)height;
    g.pitch = pitch;
    g.validate();
    if (frames == 0) fail_arg("sequence_create: need at least one frame");
    FieldSequence seq;
    seq.dt = frame_dt;
    for (uint32_t k = 0; k < frames; ++k) {
      ScalarField f(g, FieldKind::TemperatureC);
      std::memcpy(f.data(), data + (size_t)k * g.pixels(), (size_t)g.pixels() * sizeof(double));
      seq.frames.push_back(std::move(f));
    }
    seq.validate();
    *out = new thermal_sequence{std::move(seq)};
  });
}

thermal_status thermal_sequence_write(const thermal_sequence* seq, const char* path) {
  if (!seq || !path) return fail(THERMAL_EINVAL, "sequence_write: null argument");
  return wrap([&] { write_sequence(path, seq->seq); });
}

thermal_status thermal_sequence_info(const thermal_sequence* seq, uint32_t* width,
                                     uint32_t* height, uint32_t* frames, double* frame_dt,
                                     double* pitch) {
  if (!seq) return fail(THERMAL_EINVAL, "sequence_info: null sequence");
  const GridSpec& g = seq->seq.spec();
  if (width) *width = (uint32_t)g.width;
  if (height) *height = (uint32_t)g.height;
  if (frames) *frames = (uint32_t)seq->seq.frames.size();
  if (frame_dt) *frame_dt = seq->seq.dt;
  if (pitch) *pitch = g.pitch;
  return THERMAL_OK;
}

thermal_status thermal_sequence_frame(const thermal_sequence* seq, uint32_t index,
                                      double* buf) {
  if (!seq || !buf) return fail(THERMAL_EINVAL, "sequence_frame: null argument");
  if (index >= seq->seq.frames.size())
    return fail(THERMAL_EINVAL, "sequence_frame: frame index out of range");
  const ScalarField& f = seq->seq.frames[index];
  std::memcpy(buf, f.data(), (size_t)f.spec().pixels() * sizeof(double));
  return THERMAL_OK;
}

void thermal_sequence_free(thermal_sequence* seq) { delete seq; }

thermal_status thermal_stable_dt(double alpha, double pitch, double* out) {
  if (!out) return fail(THERMAL_EINVAL, "stable_dt: null output");
  return wrap([&] {
    SimConfig cfg;
    cfg.alpha = alpha;
    GridSpec g;
    g.width = g.height = 4;  // the bound depends on pitch only
    g.pitch = pitch;
    g.validate();
    cfg.validate();
    *out = stable_dt(cfg, g);
  });
}

/* ------------------------------------------------------------------ */

thermal_status thermal_model_load(const char* path, thermal_model** out) {
  if (!path || !out) return fail(THERMAL_EINVAL, "model_load: null argument");
  *out = nullptr;
  return wrap([&] { *out = new thermal_model{SurrogateModel::load(path)}; });
}

thermal_status thermal_model_save(const thermal_model* model, const char* path) {
  if (!model || !path) return fail(THERMAL_EINVAL, "model_save: null argument");
  return wrap([&] { model->model.save(path); });
}

thermal_status thermal_model_param_count(const thermal_model* model, uint64_t* out) {
  if (!model || !out) return fail(THERMAL_EINVAL, "model_param_count: null argument");
  *out = model->model.param_count();
  return THERMAL_OK;
}

thermal_status thermal_model_rollout(const thermal_model* model,
                                     const thermal_sequence* query,
                                     const thermal_sequence* cond, int n_steps,
                                     thermal_sequence** out) {
  if (!model || !query || !out) return fail(THERMAL_EINVAL, "model_rollout: null argument");
  *out = nullptr;
  const thermal_sequence* c = cond ? cond : query;
  return wrap([&] {
    if (c->seq.frames.size() < 2)
      fail_arg("model_rollout: conditioning sequence needs at least 2 frames");
    FieldSequence pred = model->model.rollout(query->seq.frames[0], c->seq.frames[0],
                                              c->seq.frames[1], n_steps);
    *out = new thermal_sequence{std::move(pred)};
  });
}

void thermal_model_free(thermal_model* model) { delete model; }

/* ------------------------------------------------------------------ */

thermal_status thermal_render_frame(const thermal_sequence* seq, uint32_t index, double lo,
                                    double hi, const char* pgm_path, int png) {
  if (!seq || !pgm_path) return fail(THERMAL_EINVAL, "render_frame: null argument");
  if (index >= seq->seq.frames.size())
    return fail(THERMAL_EINVAL, "render_frame: frame index out of range");
  return wrap([&] {
    RenderRange r{lo, hi};
    write_pgm(seq->seq.frames[index], r, pgm_path);
    if (png) {
      fs::path p(pgm_path);
      p.replace_extension(".png");
      write_png(seq->seq.frames[index], r, p.string());
    }
  });
}

/* ------------------------------------------------------------------ */

thermal_status thermal_gen(const thermal_gen_opts* opts, const char* out_dir) {
  if (!opts || !out_dir) return fail(THERMAL_EINVAL, "gen: null argument");
  return wrap([&] {
    BuildConfig cfg;
    cfg.n_layouts = opts->layouts;
    cfg.seed = opts->seed;
    std::string prof = opts->profile ? opts->profile : "nominal";
    if (prof == "nominal") cfg.profile = RangeProfile::Nominal25to55;
    else if (prof == "extended") cfg.profile = RangeProfile::Extended25to95;
    else fail_arg("gen: profile must be \"nominal\" or \"extended\"");
    cfg.grid.width = opts->width > 0 ? opts->width : 64;
    cfg.grid.height = opts->height > 0 ? opts->height : 64;
    cfg.n_frames = opts->frames > 0 ? opts->frames : 100;
    cfg.frame_dt = opts->frame_dt > 0 ? opts->frame_dt : 1e-3;
    cfg.threads = opts->threads;
    if (opts->mix_basic || opts->mix_sequential || opts->mix_combinational) {
      cfg.mix = ClassMix{opts->mix_basic, opts->mix_sequential, opts->mix_combinational};
    } else {
      // default 12/6/4 at 64x64, scaled with grid area, at least one each
      double scale = (double)(cfg.grid.width * cfg.grid.height) / (64.0 * 64.0);
      cfg.mix.basic = std::max(1, (int)std::lround(12 * scale));
      cfg.mix.sequential = std::max(1, (int)std::lround(6 * scale));
      cfg.mix.combinational = std::max(1, (int)std::lround(4 * scale));
    }
    build_dataset(cfg, out_dir);
  });
}

thermal_status thermal_train(const thermal_train_opts* opts) {
  if (!opts) return fail(THERMAL_EINVAL, "train: null options");
  if (!opts->out_model || !*opts->out_model)
    return fail(THERMAL_EINVAL, "train: out_model is required");
  thermal_status st = THERMAL_OK;
  thermal_status wst = wrap([&] {
    TrainSetup s = prepare_training(*opts);
    TrainResult res = run_training(s);
    res.model.save(opts->out_model);
    if (opts->out_history && *opts->out_history)
      write_history(opts->out_history, s, res);
    if (res.diverged) {
      g_last_error = res.message + "; best checkpoint retained at " + opts->out_model;
      st = THERMAL_ERUNTIME;
    }
  });
  return wst != THERMAL_OK ? wst : st;
}

thermal_status thermal_ablate(const thermal_train_opts* base, const char* out_dir) {
  if (!base || !out_dir) return fail(THERMAL_EINVAL, "ablate: null argument");
  return wrap([&] {
    fs::create_directories(out_dir);
    struct Run {
      const char* name;
      const char* ablate;
    };
    const Run runs[] = {{"baseline", ""},
                        {"no_pair", "pair"},
                        {"no_physics", "physics"},
                        {"pixel_concat", "concat"}};
    struct Row {
      std::string name;
      size_t params;
      double val_rmse_c, val_physics;
      int best_epoch, epochs_run;
      bool diverged;
    };
    std::vector<Row> rows;
    for (const Run& r : runs) {
      thermal_train_opts o = *base;
      o.ablate = r.ablate;
      TrainSetup s = prepare_training(o);
      TrainResult res = run_training(s);
      std::string stem = std::string(r.name);
      res.model.save((fs::path(out_dir) / (stem + ".thmw")).string());
      write_history((fs::path(out_dir) / (stem + "_history.json")).string(), s, res);
      Row row;
      row.name = r.name;
      row.params = res.model.param_count();
      const EpochStats* best = nullptr;
      for (const auto& e : res.history)
        if (e.epoch == res.best_epoch) best = &e;
      double range = profile_normalization(s.man.profile).range();
      row.val_rmse_c = best ? best->val_rmse * range : std::nan("");
      row.val_physics = best ? best->val_physics : std::nan("");
      row.best_epoch = res.best_epoch;
      row.epochs_run = (int)res.history.size();
      row.diverged = res.diverged;
      rows.push_back(row);
    }
    std::string path = (fs::path(out_dir) / "ablation.txt").string();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail_run("cannot write ablation table: " + path);
    char line[256];
    std::snprintf(line, sizeof(line), "%-14s %10s %14s %14s %6s %7s %s\n", "config", "params",
                  "val_rmse_degC", "val_physics", "best", "epochs", "status");
    out << line;
    for (const Row& r : rows) {
      std::snprintf(line, sizeof(line), "%-14s %10zu %14.6g %14.6g %6d %7d %s\n",
                    r.name.c_str(), r.params, r.val_rmse_c, r.val_physics, r.best_epoch,
                    r.epochs_run, r.diverged ? "diverged" : "ok");
      out << line;
    }
    if (!out) fail_run("write failed for ablation table: " + path);
  });
}

thermal_status thermal_infer(const thermal_infer_opts* opts) {
  if (!opts) return fail(THERMAL_EINVAL, "infer: null options");
  if (!opts->model || !opts->input_seq)
    return fail(THERMAL_EINVAL, "infer: model and input_seq are required");
  if (opts->steps < 1) return fail(THERMAL_EINVAL, "infer: steps must be >= 1");
  return wrap([&] {
    SurrogateModel model = SurrogateModel::load(opts->model);
    FieldSequence input = read_sequence(opts->input_seq);
    FieldSequence cond =
        opts->cond_seq && *opts->cond_seq ? read_sequence(opts->cond_seq) : input;
    if (cond.frames.size() < 2)
      fail_arg("infer: conditioning sequence needs at least 2 frames");

    FieldSequence pred =
        model.rollout(input.frames[0], cond.frames[0], cond.frames[1], opts->steps);
    if (opts->out_seq && *opts->out_seq) write_sequence(opts->out_seq, pred);

    if (opts->render_dir && *opts->render_dir) {
      fs::create_directories(opts->render_dir);
      RenderRange r{model.norm().t_floor, model.norm().max_i};
      const int stages[] = {1, 5, 10, 20, 50, 100};
      for (int k : stages) {
        if (k > opts->steps) break;
        char name[48];
        std::snprintf(name, sizeof(name), "stage_%04d.pgm", k);
        std::string pgm = (fs::path(opts->render_dir) / name).string();
        write_pgm(pred.frames[(size_t)k], r, pgm);
        if (opts->png) {
          fs::path p(pgm);
          p.replace_extension(".png");
          write_png(pred.frames[(size_t)k], r, p.string());
        }
        // error map against the input sequence when it reaches this stage
        if ((size_t)k < input.frames.size()) {
          const ScalarField& truth = input.frames[(size_t)k];
          ScalarField err(truth.spec(), FieldKind::Dimensionless);
          double peak = 0;
          for (int i = 0; i < truth.spec().pixels(); ++i) {
            double d = std::abs(pred.frames[(size_t)k].data()[i] - truth.data()[i]);
            err.data()[i] = d;
            peak = std::max(peak, d);
          }
          std::snprintf(name, sizeof(name), "stage_%04d_err.pgm", k);
          std::string epath = (fs::path(opts->render_dir) / name).string();
          RenderRange er{0.0, peak > 0 ? peak : 1e-12};
          write_pgm(err, er, epath);
          if (opts->png) {
            fs::path p(epath);
            p.replace_extension(".png");
            write_png(err, er, p.string());
          }
        }
      }
    }
  });
}

thermal_status thermal_eval(const thermal_eval_opts* opts) {
  if (!opts) return fail(THERMAL_EINVAL, "eval: null options");
  if (!opts->model || !opts->data_dir || !opts->out_report)
    return fail(THERMAL_EINVAL, "eval: model, data_dir and out_report are required");
  return wrap([&] {
    SurrogateModel model = SurrogateModel::load(opts->model);
    DatasetManifest man = load_manifest((fs::path(opts->data_dir) / "manifest.json").string());
    std::string split = opts->split && *opts->split ? opts->split : "val";
    int steps = opts->steps > 0 ? opts->steps : 100;
    EvalReport rep = evaluate_model(model, man, split, steps, opts->seed);
    if (opts->bench) {
      int runs = opts->bench_runs > 0 ? opts->bench_runs : 5;
      rep.timing = benchmark_speed(model, man, steps, runs, opts->seed);
    }
    write_report(rep, opts->out_report);
  });
}

} /* extern "C" */

/* C interface to the thermal pipeline shared library.
 *
 * All functions return thermal_status; THERMAL_OK is 0. On failure the
 * thread-local message from thermal_last_error() describes the problem.
 * Objects returned through out-parameters are owned by the caller and must
 * be released with the matching _free function.
 */
#ifndef THERMAL_CAPI_H
#define THERMAL_CAPI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum thermal_status {
  THERMAL_OK = 0,
  THERMAL_EINVAL = 1,  /* bad arguments / malformed input */
  THERMAL_ERUNTIME = 2 /* execution failure (io, divergence, no convergence) */
} thermal_status;

/* Message for the most recent failure on this thread; never NULL. */
const char* thermal_last_error(void);

int thermal_api_version(void);

/* 1 when the library was built with PNG (zlib) support. */
int thermal_png_supported(void);

/* ------------------------------------------------------------------ */
/* frame sequences (.thm files)                                        */

typedef struct thermal_sequence thermal_sequence;

thermal_status thermal_sequence_read(const char* path, thermal_sequence** out);
/* data is frame-major row-major degC, frames*width*height doubles. */
thermal_status thermal_sequence_create(uint32_t width, uint32_t height, uint32_t frames,
                                       double frame_dt, double pitch, const double* data,
                                       thermal_sequence** out);
thermal_status thermal_sequence_write(const thermal_sequence* seq, const char* path);
thermal_status thermal_sequence_info(const thermal_sequence* seq, uint32_t* width,
                                     uint32_t* height, uint32_t* frames, double* frame_dt,
                                     double* pitch);
/* Copies frame `index` into buf (width*height doubles, row-major degC). */
thermal_status thermal_sequence_frame(const thermal_sequence* seq, uint32_t index,
                                      double* buf);
void thermal_sequence_free(thermal_sequence* seq);

/* Largest stable explicit step for diffusivity alpha on pixel pitch. */
thermal_status thermal_stable_dt(double alpha, double pitch, double* out);

/* ------------------------------------------------------------------ */
/* surrogate models (.thmw checkpoints)                                */

typedef struct thermal_model thermal_model;

thermal_status thermal_model_load(const char* path, thermal_model** out);
thermal_status thermal_model_save(const thermal_model* model, const char* path);
thermal_status thermal_model_param_count(const thermal_model* model, uint64_t* out);
/* Free-running rollout: query frame 0 of `query`, conditioning frames 0 and 1
 * of `cond`; returns n_steps+1 frames. */
thermal_status thermal_model_rollout(const thermal_model* model,
                                     const thermal_sequence* query,
                                     const thermal_sequence* cond, int n_steps,
                                     thermal_sequence** out);
void thermal_model_free(thermal_model* model);

/* ------------------------------------------------------------------ */
/* rendering                                                           */

/* Writes frame `index` as binary PGM (and PNG alongside when `png` != 0 and
 * supported; the PNG path swaps the extension). Values are mapped linearly
 * from [lo, hi]; clamped pixels are noted in a "<path>.note" sidecar. */
thermal_status thermal_render_frame(const thermal_sequence* seq, uint32_t index, double lo,
                                    double hi, const char* pgm_path, int png);

/* ------------------------------------------------------------------ */
/* pipeline commands                                                   */

typedef struct thermal_gen_opts {
  int layouts;                 /* >= 4 */
  uint64_t seed;
  const char* profile;         /* "nominal" | "extended" */
  int width, height;           /* 0 -> 64 */
  int frames;                  /* 0 -> 100 */
  double frame_dt;             /* 0 -> 1e-3 s */
  int threads;                 /* 0 -> hardware, capped by THERMAL_THREADS */
  int mix_basic, mix_sequential, mix_combinational; /* all 0 -> scaled default mix */
} thermal_gen_opts;

thermal_status thermal_gen(const thermal_gen_opts* opts, const char* out_dir);

typedef struct thermal_train_opts {
  const char* data_dir;        /* dataset directory with manifest.json */
  const char* out_model;       /* checkpoint path */
  const char* out_history;     /* per-epoch history json; NULL -> skip */
  const char* ablate;          /* NULL/"" | "pair" | "physics" | "concat" */
  double lambda;               /* < 0 -> default 0.1 */
  double lr;                   /* <= 0 -> default 1e-3 */
  int epochs;                  /* <= 0 -> default 60 */
  int batch;                   /* <= 0 -> default 8 */
  int base_channels;           /* <= 0 -> default 8 */
  int depth;                   /* <= 0 -> default 3 */
  int pos_dim;                 /* < 0 -> default 16 */
  double dropout;              /* < 0 -> default 0.25 */
  double noise_sigma;          /* < 0 -> default 0.01 */
  int early_stop_patience;     /* <= 0 -> default 10 */
  uint64_t seed;
} thermal_train_opts;

thermal_status thermal_train(const thermal_train_opts* opts);

/* Four-run ablation grid (baseline, no pair, no physics, pixel concat) from
 * one dataset; writes one comparison table (text) plus per-run history files
 * into out_dir. */
thermal_status thermal_ablate(const thermal_train_opts* base, const char* out_dir);

typedef struct thermal_infer_opts {
  const char* model;
  const char* input_seq;       /* query sequence; frame 0 seeds the rollout */
  const char* cond_seq;        /* NULL -> condition on input_seq */
  int steps;                   /* >= 1 */
  const char* out_seq;         /* predicted sequence path; NULL -> skip */
  const char* render_dir;      /* NULL -> no images */
  int png;                     /* also emit PNGs when rendering */
} thermal_infer_opts;

thermal_status thermal_infer(const thermal_infer_opts* opts);

typedef struct thermal_eval_opts {
  const char* model;
  const char* data_dir;
  const char* out_report;      /* report json path */
  const char* split;           /* NULL -> "val" */
  int steps;                   /* <= 0 -> 100 */
  int bench;                   /* nonzero: add single-threaded timing section */
  int bench_runs;              /* <= 0 -> 5 */
  uint64_t seed;
} thermal_eval_opts;

thermal_status thermal_eval(const thermal_eval_opts* opts);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* THERMAL_CAPI_H */

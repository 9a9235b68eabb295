#include "model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <random>

#include "rng.hpp"

namespace thermal {

void ArchConfig::validate() const {
  if (base_channels < 1 || base_channels > 1024) fail_arg("base_channels out of range");
  if (depth < 1 || depth > 8) fail_arg("depth out of range (1..8)");
  if ((int)dilation_rates.size() != depth)
    fail_arg("dilation_rates must list one rate per encoder level");
  for (int d : dilation_rates)
    if (d < 1 || d > 64) fail_arg("dilation rate out of range");
  if (pos_dim < 0 || pos_dim > 1024 || pos_dim % 4 != 0)
    fail_arg("pos_dim must be a non-negative multiple of 4");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail_arg("dropout_rate must be in [0,1)");
}

void TrainConfig::validate() const {
  if (!(lambda >= 0)) fail_arg("lambda must be >= 0");
  if (!(lr > 0)) fail_arg("lr must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    fail_arg("Adam betas must be in [0,1)");
  if (batch < 1) fail_arg("batch must be >= 1");
  if (epochs < 1) fail_arg("epochs must be >= 1");
  if (!(dropout >= 0 && dropout < 1)) fail_arg("dropout must be in [0,1)");
  if (early_stop_patience < 1) fail_arg("early_stop_patience must be >= 1");
  if (!(lr_decay > 0 && lr_decay <= 1)) fail_arg("lr_decay must be in (0,1]");
  if (lr_decay_every < 1) fail_arg("lr_decay_every must be >= 1");
  if (!(noise_sigma >= 0)) fail_arg("noise_sigma must be >= 0");
}

namespace {

bool mode_pair_feature(const ArchConfig& a) {
  return a.use_pair_conditioning && a.concat_mode == ConcatMode::FeatureLevel;
}
bool mode_pixel3(const ArchConfig& a) {
  return a.use_pair_conditioning && a.concat_mode == ConcatMode::PixelLevel;
}

std::string lvl(const std::string& pfx, int l, const char* leaf) {
  return pfx + ".l" + std::to_string(l) + "." + leaf;
}

}  // namespace

void SurrogateModel::build_registry() {
  slices_.clear();
  size_t off = 0;
  auto add = [&](std::string name, size_t len, int fan_in) {
    slices_.push_back(ParamSlice{std::move(name), off, len, fan_in});
    off += len;
  };
  const int D = arch_.depth;
  const int in_c = arch_.input_channels();

  std::vector<std::string> encs;
  if (mode_pair_feature(arch_) && !arch_.shared_encoders)
    encs = {"encq", "ence", "encep"};
  else
    encs = {"enc"};
  for (const auto& e : encs)
    for (int l = 0; l < D; ++l) {
      int ci = arch_.level_in_channels(l, in_c);
      int co = arch_.channels(l);
      int cn = arch_.channels(l + 1);
      add(lvl(e, l, "dil.w"), 9ull * ci * co, 9 * ci);
      add(lvl(e, l, "dil.b"), (size_t)co, 9 * ci);
      add(lvl(e, l, "down.w"), 9ull * co * cn, 9 * co);
      add(lvl(e, l, "down.b"), (size_t)cn, 9 * co);
    }

  const int chD = arch_.channels(D);
  const int n_src = mode_pair_feature(arch_) ? 3 : 1;
  const int fuse_fan = 9 * (n_src * chD + arch_.pos_dim);
  add("fuse.wq", 9ull * chD * chD, fuse_fan);
  if (mode_pair_feature(arch_)) {
    add("fuse.we", 9ull * chD * chD, fuse_fan);
    add("fuse.wep", 9ull * chD * chD, fuse_fan);
  }
  if (arch_.pos_dim > 0) add("fuse.wpos", 9ull * arch_.pos_dim * chD, fuse_fan);
  add("fuse.b", (size_t)chD, fuse_fan);

  for (int l = D - 1; l >= 0; --l) {
    int ci = arch_.channels(l + 1);
    int co = arch_.channels(l);
    add(lvl("dec", l, "up.w"), 9ull * ci * co, 9 * ci);
    add(lvl("dec", l, "up.b"), (size_t)co, 9 * ci);
    add(lvl("dec", l, "conv.w"), 9ull * (2 * co) * co, 9 * 2 * co);
    add(lvl("dec", l, "conv.b"), (size_t)co, 9 * 2 * co);
  }
  add("head.w", (size_t)arch_.channels(0), arch_.channels(0));
  add("head.b", 1, arch_.channels(0));
  params_.assign(off, 0.0);
}

void SurrogateModel::init_params(uint64_t seed) {
  std::mt19937_64 eng(make_rng(seed));
  std::normal_distribution<double> nd(0.0, 1.0);
  for (const auto& s : slices_) {
    // Biases ("*.b") start at zero; every other slice is a weight matrix.
    // Matching ".w" instead would miss the fuse weights (fuse.wq, fuse.we,
    // ...) and leave the whole fusion stage pinned at the relu kink, where
    // its gradient -- and therefore any hope of training it -- is zero.
    bool is_bias = s.name.size() > 2 && s.name.compare(s.name.size() - 2, 2, ".b") == 0;
    if (is_bias) continue;
    // He for relu-followed layers, Xavier-ish for the linear head
    double std_dev = s.name == "head.w" ? std::sqrt(1.0 / s.fan_in) : std::sqrt(2.0 / s.fan_in);
    for (size_t i = 0; i < s.len; ++i) params_[s.offset + i] = std_dev * nd(eng);
  }
}

SurrogateModel::SurrogateModel(const ArchConfig& arch, const Normalization& norm,
                               double frame_dt, uint64_t init_seed)
    : arch_(arch), norm_(norm), frame_dt_(frame_dt) {
  arch_.validate();
  norm_.validate();
  if (!(frame_dt > 0)) fail_arg("frame_dt must be positive");
  build_registry();
  init_params(init_seed);
}

const ParamSlice& SurrogateModel::slice(const std::string& name) const {
  for (const auto& s : slices_)
    if (s.name == name) return s;
  fail_arg("unknown parameter slice: " + name);
}

Tensor normalize_field(const ScalarField& f, const Normalization& norm) {
  Tensor t = field_to_tensor(f);
  const double inv = 1.0 / norm.range();
  for (double& v : t.v) v = (v - norm.t_floor) * inv;
  return t;
}

Tensor SurrogateModel::normalize(const ScalarField& f) const {
  return normalize_field(f, norm_);
}

ScalarField SurrogateModel::denormalize(const Tensor& u, const GridSpec& spec) const {
  if (u.c != 1 || u.h != spec.height || u.w != spec.width)
    fail_arg("denormalize: tensor shape does not match the grid");
  ScalarField f(spec, FieldKind::TemperatureC);
  const double r = norm_.range();
  for (int y = 0; y < u.h; ++y)
    for (int x = 0; x < u.w; ++x) f.at(y, x) = norm_.t_floor + r * u.v[(size_t)(y * u.w + x)];
  return f;
}

// ---------------------------------------------------------------------------
// forward/backward machinery

namespace {

struct EncStash {
  std::vector<Tensor> x;       // x[0] = input, x[l+1] = post-relu downsample
  std::vector<Tensor> z_dil, a_dil, z_down;
};

struct DecStash {
  Tensor up_pre;   // bilinear variant: upsampled input, pre-conv
  Tensor up_z, up_a, cat, conv_z, conv_a, out;
  std::vector<double> mask;
};

struct Stash {
  EncStash eq, ee, eep;
  Tensor in3;  // pixel-level stacked input
  Tensor pos;
  Tensor partial;  // fusion sum of everything except the query term
  Tensor fuse_z, fuse_a, fuse_out;
  std::vector<double> fuse_mask;
  std::vector<DecStash> dec;
  Tensor pred;
};

struct ModelOps {
  const SurrogateModel& m;
  const double* P;
  bool training = false;
  double rate = 0.0;
  uint64_t mask_seed = 0;

  const ArchConfig& a() const { return m.arch(); }
  const double* w(const std::string& n) const { return P + m.slice(n).offset; }

  std::string enc_prefix(int role) const {
    if (mode_pair_feature(a()) && !a().shared_encoders)
      return role == 0 ? "encq" : role == 1 ? "ence" : "encep";
    return "enc";
  }

  void check_input(const Tensor& t, int want_c) const {
    if (t.c != want_c) fail_arg("model input has wrong channel count");
    int div = 1 << a().depth;
    if (t.h < div || t.w < div || t.h % div != 0 || t.w % div != 0)
      fail_arg("model input size must be a multiple of 2^depth");
  }

  void encode(const std::string& pfx, const Tensor& in, EncStash& st) const {
    const int D = a().depth;
    st.x.resize(D + 1);
    st.z_dil.resize(D);
    st.a_dil.resize(D);
    st.z_down.resize(D);
    st.x[0] = in;
    for (int l = 0; l < D; ++l) {
      conv3_fwd(st.x[l], w(lvl(pfx, l, "dil.w")), w(lvl(pfx, l, "dil.b")), a().channels(l),
                a().dilation_rates[l], st.z_dil[l]);
      relu_fwd(st.z_dil[l], st.a_dil[l]);
      conv3s2_fwd(st.a_dil[l], w(lvl(pfx, l, "down.w")), w(lvl(pfx, l, "down.b")),
                  a().channels(l + 1), st.z_down[l]);
      relu_fwd(st.z_down[l], st.x[l + 1]);
    }
  }

  void encode_bwd(const std::string& pfx, const EncStash& st, Tensor g_x,
                  const std::vector<Tensor>* skip_grads, double* G) const {
    const int D = a().depth;
    Tensor g_zdown, g_a, g_zdil;
    auto gsl = [&](const std::string& n) { return G + m.slice(n).offset; };
    for (int l = D - 1; l >= 0; --l) {
      relu_bwd(st.z_down[l], g_x, g_zdown);
      conv3s2_bwd(st.a_dil[l], w(lvl(pfx, l, "down.w")), a().channels(l + 1), g_zdown, &g_a,
                  gsl(lvl(pfx, l, "down.w")), gsl(lvl(pfx, l, "down.b")));
      if (skip_grads) {
        const Tensor& sg = (*skip_grads)[l];
        for (size_t i = 0; i < g_a.v.size(); ++i) g_a.v[i] += sg.v[i];
      }
      relu_bwd(st.z_dil[l], g_a, g_zdil);
      conv3_bwd(st.x[l], w(lvl(pfx, l, "dil.w")), a().channels(l), a().dilation_rates[l],
                g_zdil, l > 0 ? &g_x : nullptr, gsl(lvl(pfx, l, "dil.w")),
                gsl(lvl(pfx, l, "dil.b")));
    }
  }

  // Everything in the fusion input except the query encoding; cached across
  // rollout steps since the conditioning pair does not change.
  void fuse_partial(const Stash& st, Tensor& partial) const {
    const int D = a().depth, chD = a().channels(D);
    if (mode_pair_feature(a())) {
      conv3_fwd(st.ee.x[D], w("fuse.we"), w("fuse.b"), chD, 1, partial);
      conv3_fwd(st.eep.x[D], w("fuse.wep"), nullptr, chD, 1, partial, true);
      if (a().pos_dim > 0) conv3_fwd(st.pos, w("fuse.wpos"), nullptr, chD, 1, partial, true);
    } else if (a().pos_dim > 0) {
      conv3_fwd(st.pos, w("fuse.wpos"), w("fuse.b"), chD, 1, partial);
    } else {
      const Tensor& zq = st.eq.x[D];
      partial.h = zq.h;
      partial.w = zq.w;
      partial.c = chD;
      partial.v.resize((size_t)zq.h * zq.w * chD);
      const double* b = w("fuse.b");
      for (int p = 0; p < zq.h * zq.w; ++p)
        std::memcpy(partial.v.data() + (size_t)p * chD, b, chD * sizeof(double));
    }
  }

  void fuse_apply(const Tensor& zq, const Tensor& partial, Tensor& fuse_z) const {
    fuse_z = partial;
    conv3_fwd(zq, w("fuse.wq"), nullptr, a().channels(a().depth), 1, fuse_z, true);
  }

  void apply_dropout(const Tensor& in, int site, Tensor& out, std::vector<double>& mask) const {
    if (training && rate > 0) {
      dropout_fwd(in, rate, derive_seed(mask_seed, (uint64_t)site), out, mask);
    } else {
      out = in;
      mask.clear();
    }
  }

  void decode(Stash& st) const {
    const int D = a().depth;
    st.dec.resize(D);
    const Tensor* y = &st.fuse_out;
    for (int l = D - 1; l >= 0; --l) {
      DecStash& d = st.dec[l];
      if (a().bilinear_decoder) {
        upsample2_fwd(*y, d.up_pre);
        conv3_fwd(d.up_pre, w(lvl("dec", l, "up.w")), w(lvl("dec", l, "up.b")),
                  a().channels(l), 1, d.up_z);
      } else {
        tconv3s2_fwd(*y, w(lvl("dec", l, "up.w")), w(lvl("dec", l, "up.b")), a().channels(l),
                     d.up_z);
      }
      relu_fwd(d.up_z, d.up_a);
      concat_fwd(d.up_a, st.eq.a_dil[l], d.cat);
      conv3_fwd(d.cat, w(lvl("dec", l, "conv.w")), w(lvl("dec", l, "conv.b")), a().channels(l),
                1, d.conv_z);
      relu_fwd(d.conv_z, d.conv_a);
      apply_dropout(d.conv_a, 1 + l, d.out, d.mask);
      y = &d.out;
    }
    conv1x1_fwd(*y, w("head.w"), w("head.b"), 1, st.pred);
  }

  void forward(const Tensor& I, const Tensor& E, const Tensor& Ep, Stash& st) const {
    const int D = a().depth;
    if (mode_pixel3(a())) {
      check_input(I, 1);
      if (E.h != I.h || E.w != I.w || Ep.h != I.h || Ep.w != I.w)
        fail_arg("conditioning frames must match the query shape");
      Tensor tmp;
      concat_fwd(I, E, tmp);
      concat_fwd(tmp, Ep, st.in3);
      encode(enc_prefix(0), st.in3, st.eq);
    } else {
      check_input(I, 1);
      encode(enc_prefix(0), I, st.eq);
      if (mode_pair_feature(a())) {
        if (E.h != I.h || E.w != I.w || Ep.h != I.h || Ep.w != I.w)
          fail_arg("conditioning frames must match the query shape");
        encode(enc_prefix(1), E, st.ee);
        encode(enc_prefix(2), Ep, st.eep);
      }
    }
    const Tensor& zq = st.eq.x[D];
    if (a().pos_dim > 0) st.pos = positional_encoding(zq.h, zq.w, a().pos_dim);
    fuse_partial(st, st.partial);
    fuse_apply(zq, st.partial, st.fuse_z);
    relu_fwd(st.fuse_z, st.fuse_a);
    apply_dropout(st.fuse_a, 0, st.fuse_out, st.fuse_mask);
    decode(st);
  }

  void backward(const Stash& st, const Tensor& gpred, std::vector<double>& grad) const {
    double* G = grad.data();
    auto gsl = [&](const std::string& n) { return G + m.slice(n).offset; };
    const int D = a().depth, chD = a().channels(D);

    const Tensor& last = st.dec[0].out;
    Tensor g_y;
    conv1x1_bwd(last, w("head.w"), 1, gpred, &g_y, gsl("head.w"), gsl("head.b"));

    std::vector<Tensor> skip_g(D);
    Tensor g1, g2, g3, g_cat, g_upa;
    for (int l = 0; l < D; ++l) {
      const DecStash& d = st.dec[l];
      const Tensor* g = &g_y;
      if (!d.mask.empty()) {
        dropout_bwd(d.mask, *g, g1);
        g = &g1;
      }
      relu_bwd(d.conv_z, *g, g2);
      conv3_bwd(d.cat, w(lvl("dec", l, "conv.w")), a().channels(l), 1, g2, &g_cat,
                gsl(lvl("dec", l, "conv.w")), gsl(lvl("dec", l, "conv.b")));
      g_upa.h = d.up_a.h; g_upa.w = d.up_a.w; g_upa.c = d.up_a.c;
      g_upa.v.resize(d.up_a.v.size());
      Tensor& sk = skip_g[l];
      sk.h = st.eq.a_dil[l].h; sk.w = st.eq.a_dil[l].w; sk.c = st.eq.a_dil[l].c;
      sk.v.resize(st.eq.a_dil[l].v.size());
      concat_bwd(g_cat, g_upa, sk);
      relu_bwd(d.up_z, g_upa, g3);
      const Tensor& up_in = (l == D - 1) ? st.fuse_out : st.dec[l + 1].out;
      if (a().bilinear_decoder) {
        Tensor g_pre;
        conv3_bwd(d.up_pre, w(lvl("dec", l, "up.w")), a().channels(l), 1, g3, &g_pre,
                  gsl(lvl("dec", l, "up.w")), gsl(lvl("dec", l, "up.b")));
        upsample2_bwd(g_pre, up_in.h, up_in.w, g_y);
      } else {
        tconv3s2_bwd(up_in, w(lvl("dec", l, "up.w")), a().channels(l), g3, &g_y,
                     gsl(lvl("dec", l, "up.w")), gsl(lvl("dec", l, "up.b")));
      }
    }

    const Tensor* g = &g_y;
    if (!st.fuse_mask.empty()) {
      dropout_bwd(st.fuse_mask, *g, g1);
      g = &g1;
    }
    Tensor g_fz;
    relu_bwd(st.fuse_z, *g, g_fz);

    Tensor g_zq, g_ze, g_zep;
    conv3_bwd(st.eq.x[D], w("fuse.wq"), chD, 1, g_fz, &g_zq, gsl("fuse.wq"), nullptr);
    if (mode_pair_feature(a())) {
      conv3_bwd(st.ee.x[D], w("fuse.we"), chD, 1, g_fz, &g_ze, gsl("fuse.we"), gsl("fuse.b"));
      conv3_bwd(st.eep.x[D], w("fuse.wep"), chD, 1, g_fz, &g_zep, gsl("fuse.wep"), nullptr);
      if (a().pos_dim > 0)
        conv3_bwd(st.pos, w("fuse.wpos"), chD, 1, g_fz, nullptr, gsl("fuse.wpos"), nullptr);
    } else if (a().pos_dim > 0) {
      conv3_bwd(st.pos, w("fuse.wpos"), chD, 1, g_fz, nullptr, gsl("fuse.wpos"),
                gsl("fuse.b"));
    } else {
      double* gb = gsl("fuse.b");
      for (int p = 0; p < g_fz.h * g_fz.w; ++p)
        for (int c = 0; c < chD; ++c) gb[c] += g_fz.v[(size_t)p * chD + c];
    }

    encode_bwd(enc_prefix(0), st.eq, std::move(g_zq), &skip_g, G);
    if (mode_pair_feature(a())) {
      encode_bwd(enc_prefix(1), st.ee, std::move(g_ze), nullptr, G);
      encode_bwd(enc_prefix(2), st.eep, std::move(g_zep), nullptr, G);
    }
  }
};

// Five-point laplacian with zero-flux mirror cells, matching the simulator
// stencil, on a 1-channel tensor.
void lap1(const Tensor& u, double inv_h2, Tensor& out) {
  const int H = u.h, W = u.w;
  out.h = H; out.w = W; out.c = 1;
  out.v.resize((size_t)H * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      size_t i = (size_t)y * W + x;
      double c = u.v[i];
      double n = y > 0 ? u.v[i - W] : c;
      double s = y < H - 1 ? u.v[i + W] : c;
      double ww = x > 0 ? u.v[i - 1] : c;
      double e = x < W - 1 ? u.v[i + 1] : c;
      out.v[i] = (n + s + ww + e - 4.0 * c) * inv_h2;
    }
}

struct RecordLoss {
  double rmse = 0, phys = 0;
};

RecordLoss record_loss(const Tensor& pred, const NormRecord& rec, const LossContext& ctx,
                       Tensor& resid, Tensor& scratch) {
  for (double v : pred.v)
    if (!std::isfinite(v)) fail_run("non-finite activation at the model output head");
  const size_t N = pred.v.size();
  double se = 0;
  for (size_t i = 0; i < N; ++i) {
    double d = pred.v[i] - rec.target.v[i];
    se += d * d;
  }
  RecordLoss out;
  out.rmse = std::sqrt(se / (double)N);
  const double adt = ctx.alpha * ctx.frame_dt;
  lap1(pred, 1.0 / (rec.spec.pitch * rec.spec.pitch), scratch);
  resid.h = pred.h; resid.w = pred.w; resid.c = 1;
  resid.v.resize(N);
  double sq = 0;
  for (size_t i = 0; i < N; ++i) {
    double r = (pred.v[i] - rec.I.v[i]) - adt * scratch.v[i];
    resid.v[i] = r;
    sq += r * r;
  }
  out.phys = sq / (double)N;
  return out;
}

void check_record(const NormRecord& rec) {
  if (rec.I.c != 1 || rec.E.c != 1 || rec.Ep.c != 1 || rec.target.c != 1)
    fail_arg("training records must be single-channel");
  if (!rec.I.same_shape(rec.target) || !rec.I.same_shape(rec.E) || !rec.I.same_shape(rec.Ep))
    fail_arg("training record frames must share one shape");
  if (rec.spec.width != rec.I.w || rec.spec.height != rec.I.h)
    fail_arg("training record grid spec does not match its frames");
}

}  // namespace

ScalarField SurrogateModel::forward(const ScalarField& I, const ScalarField& E,
                                    const ScalarField& Ep) const {
  if (arch_.use_pair_conditioning && (E.spec() != I.spec() || Ep.spec() != I.spec()))
    fail_arg("conditioning pair must share the query grid");
  ModelOps ops{*this, params_.data(), false, 0.0, 0};
  Stash st;
  ops.forward(normalize(I), normalize(E), normalize(Ep), st);
  return denormalize(st.pred, I.spec());
}

FieldSequence SurrogateModel::rollout(const ScalarField& I0, const ScalarField& E,
                                      const ScalarField& Ep, int n_steps) const {
  if (n_steps < 0) fail_arg("rollout steps must be >= 0");
  if (arch_.use_pair_conditioning && (E.spec() != I0.spec() || Ep.spec() != I0.spec()))
    fail_arg("conditioning pair must share the query grid");
  FieldSequence seq;
  seq.dt = frame_dt_;
  seq.frames.reserve((size_t)n_steps + 1);
  seq.frames.push_back(I0);

  ModelOps ops{*this, params_.data(), false, 0.0, 0};
  Stash st;
  Tensor uq = normalize(I0), ue = normalize(E), uep = normalize(Ep);
  const int D = arch_.depth;

  auto check_step = [&](int k) {
    for (double v : st.pred.v)
      if (!std::isfinite(v))
        fail_run("non-finite prediction at rollout step " + std::to_string(k));
  };

  if (mode_pixel3(arch_)) {
    // The query is stacked into the encoder input, so nothing can be cached.
    for (int k = 1; k <= n_steps; ++k) {
      ops.forward(uq, ue, uep, st);
      check_step(k);
      seq.frames.push_back(denormalize(st.pred, I0.spec()));
      uq = st.pred;
    }
    return seq;
  }

  // Feature-level path: the conditioning encodings and their fusion partial
  // are step-invariant, so compute them once.
  if (mode_pair_feature(arch_)) {
    ops.encode(ops.enc_prefix(1), ue, st.ee);
    ops.encode(ops.enc_prefix(2), uep, st.eep);
  }
  ops.check_input(uq, 1);
  if (arch_.pos_dim > 0)
    st.pos = positional_encoding(uq.h >> D, uq.w >> D, arch_.pos_dim);
  if (!mode_pair_feature(arch_) && arch_.pos_dim == 0) {
    // fuse_partial reads eq for its shape in this mode
    ops.encode(ops.enc_prefix(0), uq, st.eq);
  }
  ops.fuse_partial(st, st.partial);

  for (int k = 1; k <= n_steps; ++k) {
    ops.encode(ops.enc_prefix(0), uq, st.eq);
    ops.fuse_apply(st.eq.x[D], st.partial, st.fuse_z);
    relu_fwd(st.fuse_z, st.fuse_a);
    st.fuse_out = st.fuse_a;
    st.fuse_mask.clear();
    ops.decode(st);
    check_step(k);
    seq.frames.push_back(denormalize(st.pred, I0.spec()));
    uq = st.pred;
  }
  return seq;
}

LossValue SurrogateModel::loss(const std::vector<NormRecord>& batch,
                               const LossContext& ctx) const {
  if (batch.empty()) fail_arg("loss needs a non-empty batch");
  ModelOps ops{*this, params_.data(), false, 0.0, 0};
  Stash st;
  Tensor resid, scratch;
  LossValue lv;
  for (const auto& rec : batch) {
    check_record(rec);
    ops.forward(rec.I, rec.E, rec.Ep, st);
    RecordLoss rl = record_loss(st.pred, rec, ctx, resid, scratch);
    lv.l_rmse += rl.rmse;
    lv.l_physics += rl.phys;
  }
  lv.l_rmse /= (double)batch.size();
  lv.l_physics /= (double)batch.size();
  lv.total = lv.l_rmse + ctx.lambda * lv.l_physics;
  return lv;
}

LossValue SurrogateModel::loss_and_gradients(const std::vector<NormRecord>& batch,
                                             const LossContext& ctx, double dropout_rate,
                                             uint64_t mask_seed,
                                             std::vector<double>& grad) const {
  if (batch.empty()) fail_arg("loss needs a non-empty batch");
  grad.assign(params_.size(), 0.0);
  Stash st;
  Tensor resid, scratch, lap_r, gpred;
  LossValue lv;
  const double B = (double)batch.size();
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto& rec = batch[i];
    check_record(rec);
    ModelOps ops{*this, params_.data(), dropout_rate > 0, dropout_rate,
                 derive_seed(mask_seed, i)};
    ops.forward(rec.I, rec.E, rec.Ep, st);
    RecordLoss rl = record_loss(st.pred, rec, ctx, resid, scratch);
    lv.l_rmse += rl.rmse;
    lv.l_physics += rl.phys;

    const size_t N = st.pred.v.size();
    lap1(resid, 1.0 / (rec.spec.pitch * rec.spec.pitch), lap_r);
    gpred.h = st.pred.h; gpred.w = st.pred.w; gpred.c = 1;
    gpred.v.resize(N);
    const double adt = ctx.alpha * ctx.frame_dt;
    const double rmse_scale = rl.rmse > 0 ? 1.0 / ((double)N * rl.rmse) : 0.0;
    const double phys_scale = ctx.lambda * 2.0 / (double)N;
    for (size_t j = 0; j < N; ++j) {
      double g_rmse = (st.pred.v[j] - rec.target.v[j]) * rmse_scale;
      double g_phys = phys_scale * (resid.v[j] - adt * lap_r.v[j]);
      gpred.v[j] = (g_rmse + g_phys) / B;
    }
    ops.backward(st, gpred, grad);
  }
  lv.l_rmse /= B;
  lv.l_physics /= B;
  lv.total = lv.l_rmse + ctx.lambda * lv.l_physics;
  return lv;
}

NormRecord augment(const NormRecord& rec, double sigma, uint64_t seed) {
  NormRecord out = rec;
  if (sigma <= 0) return out;
  std::mt19937_64 eng(make_rng(seed));
  std::normal_distribution<double> nd(0.0, sigma);
  for (Tensor* t : {&out.I, &out.E, &out.Ep})
    for (double& v : t->v) v = std::clamp(v + nd(eng), 0.0, 1.0);
  return out;
}

TrainResult train(const std::vector<NormRecord>& train_recs,
                  const std::vector<NormRecord>& val_recs, const ArchConfig& arch,
                  const Normalization& norm, double frame_dt, const TrainConfig& cfg,
                  double alpha) {
  cfg.validate();
  if (train_recs.empty()) fail_arg("training needs at least one record");

  TrainResult res;
  res.model = SurrogateModel(arch, norm, frame_dt, derive_seed(cfg.seed, 0xA11));
  SurrogateModel& model = res.model;
  LossContext ctx{cfg.lambda, alpha, frame_dt};

  const size_t n = train_recs.size();
  const size_t np = model.param_count();
  std::vector<double> grad, m_t(np, 0.0), v_t(np, 0.0);
  std::vector<double> best_params = model.params();
  double best_val = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  long step = 0;

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr_e = cfg.lr * std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
    std::mt19937_64 shuffle_eng(make_rng(derive_seed(cfg.seed, 1000 + (uint64_t)epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_eng);

    double tr_total = 0, tr_rmse = 0, tr_phys = 0;
    size_t seen = 0;
    bool blew_up = false;
    for (size_t b0 = 0; b0 < n; b0 += (size_t)cfg.batch) {
      size_t b1 = std::min(n, b0 + (size_t)cfg.batch);
      std::vector<NormRecord> batch;
      batch.reserve(b1 - b0);
      for (size_t k = b0; k < b1; ++k) {
        uint64_t noise_seed =
            derive_seed(derive_seed(cfg.seed, 2000 + (uint64_t)epoch), order[k]);
        batch.push_back(augment(train_recs[order[k]], cfg.noise_sigma, noise_seed));
      }
      uint64_t mask_seed =
          derive_seed(derive_seed(cfg.seed, 3000 + (uint64_t)epoch), b0 / cfg.batch);
      LossValue lv;
      try {
        lv = model.loss_and_gradients(batch, ctx, cfg.dropout, mask_seed, grad);
      } catch (const Error& e) {
        // Exploding parameters surface as the non-finite activation guard
        // before the loss itself can go non-finite; both mean divergence.
        if (e.kind == Error::Kind::Runtime &&
            std::string(e.what()).find("non-finite") != std::string::npos) {
          blew_up = true;
          break;
        }
        throw;
      }
      if (!std::isfinite(lv.total)) {
        blew_up = true;
        break;
      }
      double bs = (double)(b1 - b0);
      tr_total += lv.total * bs;
      tr_rmse += lv.l_rmse * bs;
      tr_phys += lv.l_physics * bs;
      seen += b1 - b0;

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, (double)step);
      const double c2 = 1.0 - std::pow(cfg.beta2, (double)step);
      double* p = model.params().data();
      for (size_t j = 0; j < np; ++j) {
        m_t[j] = cfg.beta1 * m_t[j] + (1.0 - cfg.beta1) * grad[j];
        v_t[j] = cfg.beta2 * v_t[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
        p[j] -= lr_e * (m_t[j] / c1) / (std::sqrt(v_t[j] / c2) + 1e-8);
      }
    }

    if (blew_up) {
      res.diverged = true;
      res.message = "training diverged (non-finite loss) at epoch " + std::to_string(epoch + 1);
      break;
    }

    EpochStats es;
    es.epoch = epoch + 1;  // 1-based for reporting
    es.lr = lr_e;
    es.train_total = tr_total / (double)seen;
    es.train_rmse = tr_rmse / (double)seen;
    es.train_physics = tr_phys / (double)seen;
    const std::vector<NormRecord>& vr = val_recs.empty() ? train_recs : val_recs;
    LossValue vlv;
    bool val_blew_up = false;
    try {
      vlv = model.loss(vr, ctx);
    } catch (const Error& e) {
      if (e.kind == Error::Kind::Runtime &&
          std::string(e.what()).find("non-finite") != std::string::npos) {
        val_blew_up = true;
        vlv.total = std::numeric_limits<double>::quiet_NaN();
      } else {
        throw;
      }
    }
    es.val_total = vlv.total;
    es.val_rmse = vlv.l_rmse;
    es.val_physics = vlv.l_physics;
    res.history.push_back(es);

    if (val_blew_up || !std::isfinite(vlv.total)) {
      res.diverged = true;
      res.message = "training diverged (non-finite validation loss) at epoch " +
                    std::to_string(epoch + 1);
      break;
    }
    if (vlv.total < best_val) {
      best_val = vlv.total;
      best_params = model.params();
      res.best_epoch = epoch + 1;
      bad_epochs = 0;
    } else if (++bad_epochs >= cfg.early_stop_patience) {
      res.message = "early stop at epoch " + std::to_string(epoch + 1) + " (best " +
                    std::to_string(res.best_epoch) + ")";
      break;
    }
  }
  if (res.message.empty() && !res.diverged)
    res.message = "completed " + std::to_string((int)res.history.size()) + " epochs (best " +
                  std::to_string(res.best_epoch) + ")";
  model.params() = best_params;
  return res;
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back((char)((v >> (8 * i)) & 0xFF));
}
void put_u64(std::string& s, uint64_t v) {
  for (int i = 0; i < 8; ++i) s.push_back((char)((v >> (8 * i)) & 0xFF));
}
void put_f64(std::string& s, double d) { put_u64(s, std::bit_cast<uint64_t>(d)); }

struct ByteReader {
  const std::string& s;
  size_t off = 0;
  void need(size_t n, const char* what) const {
    if (off + n > s.size())
      fail_run(std::string("checkpoint truncated reading ") + what + ": need " +
               std::to_string(off + n) + " bytes, file has " + std::to_string(s.size()));
  }
  uint8_t u8(const char* what) {
    need(1, what);
    return (uint8_t)s[off++];
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (uint32_t)(uint8_t)s[off + i] << (8 * i);
    off += 4;
    return v;
  }
  uint64_t u64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (uint64_t)(uint8_t)s[off + i] << (8 * i);
    off += 8;
    return v;
  }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
};

constexpr uint32_t kCheckpointVersion = 1;

}  // namespace

void SurrogateModel::save(const std::string& path) const {
  std::string buf;
  buf.reserve(64 + params_.size() * 8);
  buf += "THMW";
  put_u32(buf, kCheckpointVersion);
  put_u32(buf, (uint32_t)arch_.base_channels);
  put_u32(buf, (uint32_t)arch_.depth);
  put_u32(buf, (uint32_t)arch_.dilation_rates.size());
  for (int d : arch_.dilation_rates) put_u32(buf, (uint32_t)d);
  put_u32(buf, (uint32_t)arch_.pos_dim);
  buf.push_back(arch_.concat_mode == ConcatMode::PixelLevel ? 1 : 0);
  buf.push_back(arch_.use_pair_conditioning ? 1 : 0);
  buf.push_back(arch_.shared_encoders ? 1 : 0);
  buf.push_back(arch_.bilinear_decoder ? 1 : 0);
  put_f64(buf, arch_.dropout_rate);
  put_f64(buf, norm_.t_floor);
  put_f64(buf, norm_.max_i);
  put_f64(buf, frame_dt_);
  put_u64(buf, (uint64_t)params_.size());
  for (double p : params_) put_f64(buf, p);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_run("cannot open checkpoint for writing: " + path);
  out.write(buf.data(), (std::streamsize)buf.size());
  if (!out) fail_run("write failed for checkpoint: " + path);
}

SurrogateModel SurrogateModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_run("cannot open checkpoint: " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  ByteReader r{buf};
  r.need(4, "magic");
  if (buf.compare(0, 4, "THMW") != 0) fail_run("not a checkpoint file (bad magic): " + path);
  r.off = 4;
  uint32_t ver = r.u32("version");
  if (ver != kCheckpointVersion)
    fail_run("unsupported checkpoint version " + std::to_string(ver));

  SurrogateModel m;
  m.arch_.base_channels = (int)r.u32("base_channels");
  m.arch_.depth = (int)r.u32("depth");
  uint32_t nd = r.u32("dilation count");
  if (nd > 64) fail_run("corrupt checkpoint: implausible dilation count");
  m.arch_.dilation_rates.clear();
  for (uint32_t i = 0; i < nd; ++i) m.arch_.dilation_rates.push_back((int)r.u32("dilation"));
  m.arch_.pos_dim = (int)r.u32("pos_dim");
  m.arch_.concat_mode = r.u8("concat_mode") ? ConcatMode::PixelLevel : ConcatMode::FeatureLevel;
  m.arch_.use_pair_conditioning = r.u8("use_pair_conditioning") != 0;
  m.arch_.shared_encoders = r.u8("shared_encoders") != 0;
  m.arch_.bilinear_decoder = r.u8("bilinear_decoder") != 0;
  m.arch_.dropout_rate = r.f64("dropout_rate");
  m.norm_.t_floor = r.f64("t_floor");
  m.norm_.max_i = r.f64("max_i");
  m.frame_dt_ = r.f64("frame_dt");
  m.arch_.validate();
  m.norm_.validate();
  if (!(m.frame_dt_ > 0)) fail_run("corrupt checkpoint: non-positive frame_dt");

  m.build_registry();
  uint64_t count = r.u64("param count");
  if (count != m.params_.size())
    fail_run("checkpoint parameter count " + std::to_string(count) +
             " does not match the architecture (expected " +
             std::to_string(m.params_.size()) + ")");
  r.need(count * 8, "parameters");
  for (uint64_t i = 0; i < count; ++i) m.params_[i] = r.f64("parameter");
  if (r.off != buf.size())
    fail_run("checkpoint has " + std::to_string(buf.size() - r.off) + " trailing bytes");
  return m;
}

}  // namespace thermal

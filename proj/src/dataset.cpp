#include "dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "hash.hpp"
#include "rng.hpp"
#include "threads.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace thermal {

// ---------------------------------------------------------------------------
// sequence files

namespace {

void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back((char)((v >> (8 * i)) & 0xFF));
}
void put_f64(std::string& s, double d) {
  uint64_t v = std::bit_cast<uint64_t>(d);
  for (int i = 0; i < 8; ++i) s.push_back((char)((v >> (8 * i)) & 0xFF));
}
void put_f32(std::string& s, float f) {
  uint32_t v = std::bit_cast<uint32_t>(f);
  for (int i = 0; i < 4; ++i) s.push_back((char)((v >> (8 * i)) & 0xFF));
}

struct ByteReader {
  const std::string& s;
  const std::string& path;
  size_t off = 0;
  void need(size_t n, const char* what) const {
    if (off + n > s.size())
      fail_run("sequence file truncated reading " + std::string(what) + ": need " +
               std::to_string(off + n) + " bytes, " + path + " has " +
               std::to_string(s.size()));
  }
  uint32_t u32(const char* what) {
    need(4, what);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= (uint32_t)(uint8_t)s[off + i] << (8 * i);
    off += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= (uint64_t)(uint8_t)s[off + i] << (8 * i);
    off += 8;
    return std::bit_cast<double>(v);
  }
  float f32(const char* what) {
    uint32_t v = u32(what);
    return std::bit_cast<float>(v);
  }
};

constexpr uint32_t kSequenceVersion = 1;

std::string read_file(const std::string& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_run(std::string("cannot open ") + what + ": " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& buf, const char* what) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail_run(std::string("cannot open ") + what + " for writing: " + path);
  out.write(buf.data(), (std::streamsize)buf.size());
  if (!out) fail_run(std::string("write failed for ") + what + ": " + path);
}

}  // namespace

void write_sequence(const std::string& path, const FieldSequence& seq) {
  seq.validate();
  const GridSpec& g = seq.spec();
  std::string buf;
  buf.reserve(36 + seq.frames.size() * (size_t)g.pixels() * 4);
  buf += "THM1";
  put_u32(buf, kSequenceVersion);
  put_u32(buf, (uint32_t)g.width);
  put_u32(buf, (uint32_t)g.height);
  put_u32(buf, (uint32_t)seq.frames.size());
  put_f64(buf, seq.dt);
  put_f64(buf, g.pitch);
  for (const auto& f : seq.frames)
    for (int i = 0; i < g.pixels(); ++i) put_f32(buf, (float)f.data()[i]);
  write_file(path, buf, "sequence file");
}

FieldSequence read_sequence(const std::string& path) {
  std::string buf = read_file(path, "sequence file");
  ByteReader r{buf, path};
  r.need(4, "magic");
  if (buf.compare(0, 4, "THM1") != 0)
    fail_run("not a sequence file (bad magic): " + path);
  r.off = 4;
  uint32_t ver = r.u32("version");
  if (ver != kSequenceVersion)
    fail_run("unsupported sequence version " + std::to_string(ver) + " in " + path);
  GridSpec g;
  g.width = (int)r.u32("width");
  g.height = (int)r.u32("height");
  uint32_t n = r.u32("frame count");
  FieldSequence seq;
  seq.dt = r.f64("frame_dt");
  g.pitch = r.f64("pitch");
  g.validate();
  if (n == 0) fail_run("sequence file has zero frames: " + path);
  size_t want = 36 + (size_t)n * g.pixels() * 4;
  if (buf.size() != want)
    fail_run("sequence file size mismatch: expected " + std::to_string(want) +
             " bytes, got " + std::to_string(buf.size()) + " in " + path);
  seq.frames.reserve(n);
  for (uint32_t k = 0; k < n; ++k) {
    ScalarField f(g, FieldKind::TemperatureC);
    for (int i = 0; i < g.pixels(); ++i) f.data()[i] = (double)r.f32("frame data");
    seq.frames.push_back(std::move(f));
  }
  seq.validate();
  return seq;
}

// ---------------------------------------------------------------------------
// profiles

const char* range_profile_name(RangeProfile p) {
  return p == RangeProfile::Nominal25to55 ? "Nominal25to55" : "Extended25to95";
}

RangeProfile range_profile_from_name(const std::string& name) {
  if (name == "Nominal25to55") return RangeProfile::Nominal25to55;
  if (name == "Extended25to95") return RangeProfile::Extended25to95;
  fail_arg("unknown range profile: " + name);
}

Normalization profile_normalization(RangeProfile p) {
  Normalization n;
  n.t_floor = 25.0;
  n.max_i = p == RangeProfile::Nominal25to55 ? 55.0 : 95.0;
  return n;
}

void profile_budget_band(RangeProfile p, double& lo, double& hi) {
  // Lumped rise = budget * r_th (1e4 K/W): nominal tops out ~29 K above
  // ambient, extended ~68 K, keeping every frame inside the declared range
  // with headroom for lateral contrast.
  if (p == RangeProfile::Nominal25to55) {
    lo = 1.0e-3;
    hi = 2.9e-3;
  } else {
    lo = 3.0e-3;
    hi = 6.8e-3;
  }
}

// ---------------------------------------------------------------------------
// manifest json

namespace {

const char* class_name(CellClass c) {
  switch (c) {
    case CellClass::BasicGate: return "BasicGate";
    case CellClass::Sequential: return "Sequential";
    default: return "CombinationalBlock";
  }
}
CellClass class_from_name(const std::string& s) {
  if (s == "BasicGate") return CellClass::BasicGate;
  if (s == "Sequential") return CellClass::Sequential;
  if (s == "CombinationalBlock") return CellClass::CombinationalBlock;
  fail_arg("unknown cell class: " + s);
}

const char* kind_name(ActivityKind k) {
  switch (k) {
    case ActivityKind::Constant: return "Constant";
    case ActivityKind::Square: return "Square";
    default: return "Burst";
  }
}
ActivityKind kind_from_name(const std::string& s) {
  if (s == "Constant") return ActivityKind::Constant;
  if (s == "Square") return ActivityKind::Square;
  if (s == "Burst") return ActivityKind::Burst;
  fail_arg("unknown activity kind: " + s);
}

ordered_json sim_to_json(const SimConfig& c) {
  ordered_json j;
  j["alpha"] = c.alpha;
  j["tau"] = c.tau;
  j["rho_c"] = c.rho_c;
  j["die_thickness"] = c.die_thickness;
  j["r_th"] = c.r_th;
  j["t_ambient"] = c.t_ambient;
  j["boundary"] =
      c.boundary == Boundary::AdiabaticOnly ? "AdiabaticOnly" : "AdiabaticPlusAmbient";
  j["scheme"] =
      c.scheme == Scheme::ExplicitFTCS ? "ExplicitFTCS" : "ImplicitBackwardEuler";
  j["substeps_per_frame"] = c.substeps_per_frame;
  return j;
}

SimConfig sim_from_json(const ordered_json& j) {
  SimConfig c;
  c.alpha = j.at("alpha").get<double>();
  c.tau = j.at("tau").get<double>();
  c.rho_c = j.at("rho_c").get<double>();
  c.die_thickness = j.at("die_thickness").get<double>();
  c.r_th = j.at("r_th").get<double>();
  c.t_ambient = j.at("t_ambient").get<double>();
  std::string b = j.at("boundary").get<std::string>();
  if (b == "AdiabaticOnly") c.boundary = Boundary::AdiabaticOnly;
  else if (b == "AdiabaticPlusAmbient") c.boundary = Boundary::AdiabaticPlusAmbient;
  else fail_arg("unknown boundary: " + b);
  std::string s = j.at("scheme").get<std::string>();
  if (s == "ExplicitFTCS") c.scheme = Scheme::ExplicitFTCS;
  else if (s == "ImplicitBackwardEuler") c.scheme = Scheme::ImplicitBackwardEuler;
  else fail_arg("unknown scheme: " + s);
  c.substeps_per_frame = j.at("substeps_per_frame").get<int>();
  return c;
}

ordered_json layout_to_json(const Layout& l) {
  ordered_json cells = ordered_json::array();
  for (const auto& c : l.cells) {
    ordered_json jc;
    jc["class"] = class_name(c.cell_class);
    jc["x"] = c.rect.x0;
    jc["y"] = c.rect.y0;
    jc["w"] = c.rect.w;
    jc["h"] = c.rect.h;
    jc["peak_power_w"] = c.peak_power;
    ordered_json ja;
    ja["kind"] = kind_name(c.activity.kind);
    ja["duty"] = c.activity.duty;
    ja["period"] = c.activity.period;
    ja["phase"] = c.activity.phase;
    jc["activity"] = ja;
    cells.push_back(jc);
  }
  ordered_json j;
  j["total_power_budget_w"] = l.total_power_budget;
  j["cells"] = cells;
  return j;
}

Layout layout_from_json(const ordered_json& j, const GridSpec& spec) {
  Layout l;
  l.spec = spec;
  l.total_power_budget = j.at("total_power_budget_w").get<double>();
  for (const auto& jc : j.at("cells")) {
    CellPlacement c;
    c.cell_class = class_from_name(jc.at("class").get<std::string>());
    c.rect.x0 = jc.at("x").get<int>();
    c.rect.y0 = jc.at("y").get<int>();
    c.rect.w = jc.at("w").get<int>();
    c.rect.h = jc.at("h").get<int>();
    c.peak_power = jc.at("peak_power_w").get<double>();
    const auto& ja = jc.at("activity");
    c.activity.kind = kind_from_name(ja.at("kind").get<std::string>());
    c.activity.duty = ja.at("duty").get<double>();
    c.activity.period = ja.at("period").get<double>();
    c.activity.phase = ja.at("phase").get<double>();
    l.cells.push_back(c);
  }
  return l;
}

}  // namespace

std::string DatasetManifest::sim_hash() const {
  ordered_json j;
  j["grid"] = {{"width", grid.width}, {"height", grid.height}, {"pitch", grid.pitch}};
  j["sim"] = sim_to_json(sim);
  j["frames"] = {{"count", n_frames}, {"dt", frame_dt}};
  return hash_hex(fnv1a64(j.dump()));
}

const SampleRecord& DatasetManifest::sample(int id) const {
  for (const auto& s : samples)
    if (s.id == id) return s;
  fail_arg("manifest has no sample with id " + std::to_string(id));
}

void DatasetManifest::validate() const {
  normalization.validate();
  grid.validate();
  if (samples.empty()) fail_run("manifest lists no samples");
  std::vector<int> all = train_ids;
  all.insert(all.end(), val_ids.begin(), val_ids.end());
  std::sort(all.begin(), all.end());
  if (std::adjacent_find(all.begin(), all.end()) != all.end())
    fail_run("manifest split is not disjoint");
  if (all.size() != samples.size()) fail_run("manifest split does not cover all samples");
  for (const auto& s : samples) {
    if (!std::binary_search(all.begin(), all.end(), s.id))
      fail_run("sample id missing from split: " + std::to_string(s.id));
    if (s.n_frames < 1) fail_run("sample with no frames: " + std::to_string(s.id));
  }
}

void write_manifest(const DatasetManifest& man, const std::string& path) {
  ordered_json j;
  j["format_version"] = man.format_version;
  j["range_profile"] = range_profile_name(man.profile);
  j["normalization"] = {{"t_floor", man.normalization.t_floor},
                        {"max_i", man.normalization.max_i}};
  j["grid"] = {{"width", man.grid.width},
               {"height", man.grid.height},
               {"pitch", man.grid.pitch}};
  j["sim"] = sim_to_json(man.sim);
  j["sim_config_hash"] = man.sim_hash();
  j["frames"] = {{"count", man.n_frames}, {"dt", man.frame_dt}};
  j["seed"] = man.seed;
  ordered_json samples = ordered_json::array();
  for (const auto& s : man.samples) {
    ordered_json js;
    js["id"] = s.id;
    js["seed"] = s.seed;
    js["file"] = s.file;
    js["n_frames"] = s.n_frames;
    js["frame_dt"] = s.frame_dt;
    js["budget_w"] = s.budget_w;
    js["dominant_class"] = class_name(s.dominant);
    js["min_c"] = s.min_c;
    js["peak_c"] = s.peak_c;
    js["layout"] = layout_to_json(s.layout);
    samples.push_back(js);
  }
  j["samples"] = samples;
  j["split"] = {{"train", man.train_ids}, {"val", man.val_ids}};
  ordered_json skipped = ordered_json::array();
  for (const auto& s : man.skipped)
    skipped.push_back({{"index", s.index}, {"reason", s.reason}});
  j["skipped"] = skipped;
  write_file(path, j.dump(2) + "\n", "manifest");
}

DatasetManifest load_manifest(const std::string& path) {
  std::string text = read_file(path, "manifest");
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    fail_run("manifest parse error in " + path + ": " + e.what());
  }
  DatasetManifest man;
  try {
    man.format_version = j.at("format_version").get<int>();
    if (man.format_version != 1)
      fail_run("unsupported manifest format_version " + std::to_string(man.format_version));
    man.profile = range_profile_from_name(j.at("range_profile").get<std::string>());
    man.normalization.t_floor = j.at("normalization").at("t_floor").get<double>();
    man.normalization.max_i = j.at("normalization").at("max_i").get<double>();
    man.grid.width = j.at("grid").at("width").get<int>();
    man.grid.height = j.at("grid").at("height").get<int>();
    man.grid.pitch = j.at("grid").at("pitch").get<double>();
    man.sim = sim_from_json(j.at("sim"));
    man.n_frames = j.at("frames").at("count").get<int>();
    man.frame_dt = j.at("frames").at("dt").get<double>();
    man.seed = j.at("seed").get<uint64_t>();
    for (const auto& js : j.at("samples")) {
      SampleRecord s;
      s.id = js.at("id").get<int>();
      s.seed = js.at("seed").get<uint64_t>();
      s.file = js.at("file").get<std::string>();
      s.n_frames = js.at("n_frames").get<int>();
      s.frame_dt = js.at("frame_dt").get<double>();
      s.budget_w = js.at("budget_w").get<double>();
      s.dominant = class_from_name(js.at("dominant_class").get<std::string>());
      s.min_c = js.at("min_c").get<double>();
      s.peak_c = js.at("peak_c").get<double>();
      s.layout = layout_from_json(js.at("layout"), man.grid);
      man.samples.push_back(std::move(s));
    }
    man.train_ids = j.at("split").at("train").get<std::vector<int>>();
    man.val_ids = j.at("split").at("val").get<std::vector<int>>();
    for (const auto& js : j.at("skipped"))
      man.skipped.push_back(
          SkipRecord{js.at("index").get<int>(), js.at("reason").get<std::string>()});
  } catch (const ordered_json::exception& e) {
    fail_run("manifest field error in " + path + ": " + e.what());
  }
  man.dir = fs::path(path).parent_path().string();
  man.validate();
  // Spot-check the referenced files without loading the frame payloads.
  for (const auto& s : man.samples) {
    fs::path p = fs::path(man.dir) / s.file;
    std::error_code ec;
    uintmax_t sz = fs::file_size(p, ec);
    if (ec) fail_run("manifest references a missing sequence file: " + p.string());
    uintmax_t want = 36 + (uintmax_t)s.n_frames * man.grid.pixels() * 4;
    if (sz != want)
      fail_run("sequence file size does not match the manifest for id " +
               std::to_string(s.id) + ": expected " + std::to_string(want) + ", got " +
               std::to_string(sz));
  }
  return man;
}

// ---------------------------------------------------------------------------
// build

DatasetManifest build_dataset(const BuildConfig& cfg, const std::string& out_dir) {
  if (cfg.n_layouts < 4) fail_arg("need at least 4 layouts for a 75/25 split");
  if (cfg.n_frames < 2) fail_arg("need at least 2 frames per sequence");
  if (!(cfg.frame_dt > 0)) fail_arg("frame_dt must be positive");
  cfg.grid.validate();
  cfg.sim.validate();

  fs::create_directories(out_dir);

  DatasetManifest man;
  man.profile = cfg.profile;
  man.normalization = profile_normalization(cfg.profile);
  man.grid = cfg.grid;
  man.sim = cfg.sim;
  man.n_frames = cfg.n_frames;
  man.frame_dt = cfg.frame_dt;
  man.seed = cfg.seed;
  man.dir = out_dir;

  double blo, bhi;
  profile_budget_band(cfg.profile, blo, bhi);

  struct Slot {
    bool ok = false;
    SampleRecord rec;
    std::string reason;
  };
  std::vector<Slot> slots(cfg.n_layouts);

  parallel_for((size_t)cfg.n_layouts, cfg.threads, [&](size_t i) {
    Slot& slot = slots[i];
    uint64_t sample_seed = derive_seed(cfg.seed, i);
    try {
      std::mt19937_64 beng(make_rng(derive_seed(sample_seed, 1)));
      double budget = std::uniform_real_distribution<double>(blo, bhi)(beng);
      Layout layout = generate_layout(derive_seed(sample_seed, 2), cfg.grid, cfg.mix, budget);

      ScalarField T0(cfg.grid, FieldKind::TemperatureC, cfg.sim.t_ambient);
      FieldSequence seq = simulate(layout, cfg.sim, T0, cfg.frame_dt, cfg.n_frames);

      double lo = seq.frames[0].at(0, 0), hi = lo;
      for (const auto& f : seq.frames) {
        FieldStats st = field_stats(f);
        lo = std::min(lo, st.min);
        hi = std::max(hi, st.max);
      }
      if (lo < man.normalization.t_floor - 1e-9 || hi > man.normalization.max_i + 1e-9)
        fail_run("frames leave the declared range [" +
                 std::to_string(man.normalization.t_floor) + ", " +
                 std::to_string(man.normalization.max_i) + "]: observed [" +
                 std::to_string(lo) + ", " + std::to_string(hi) + "]");

      char name[32];
      std::snprintf(name, sizeof(name), "seq_%04zu.thm", i);
      write_sequence((fs::path(out_dir) / name).string(), seq);

      SampleRecord& r = slot.rec;
      r.id = (int)i;
      r.seed = sample_seed;
      r.file = name;
      r.n_frames = cfg.n_frames;
      r.frame_dt = cfg.frame_dt;
      r.budget_w = budget;
      r.dominant = layout.dominant_class();
      r.min_c = lo;
      r.peak_c = hi;
      r.layout = std::move(layout);
      slot.ok = true;
    } catch (const Error& e) {
      slot.reason = e.what();
    }
  });

  int skips = 0;
  for (int i = 0; i < cfg.n_layouts; ++i) {
    if (slots[i].ok)
      man.samples.push_back(std::move(slots[i].rec));
    else {
      man.skipped.push_back(SkipRecord{i, slots[i].reason});
      ++skips;
    }
  }
  if (skips * 10 > cfg.n_layouts)
    fail_run("dataset build failed: " + std::to_string(skips) + " of " +
             std::to_string(cfg.n_layouts) + " samples skipped (>10%)");
  if (man.samples.empty()) fail_run("dataset build produced no samples");

  std::vector<int> ids;
  for (const auto& s : man.samples) ids.push_back(s.id);
  std::mt19937_64 seng(make_rng(derive_seed(cfg.seed, 0x5197)));
  std::shuffle(ids.begin(), ids.end(), seng);
  int n = (int)ids.size();
  int n_train = (int)std::lround(0.75 * n);
  n_train = std::clamp(n_train, 1, n - 1);
  man.train_ids.assign(ids.begin(), ids.begin() + n_train);
  man.val_ids.assign(ids.begin() + n_train, ids.end());
  std::sort(man.train_ids.begin(), man.train_ids.end());
  std::sort(man.val_ids.begin(), man.val_ids.end());

  write_manifest(man, (fs::path(out_dir) / "manifest.json").string());
  return man;
}

// ---------------------------------------------------------------------------
// pairing

std::vector<PairRecord> make_pairs(const DatasetManifest& man, const std::string& split,
                                   uint64_t seed, std::string* warning) {
  const std::vector<int>* ids = nullptr;
  if (split == "train") ids = &man.train_ids;
  else if (split == "val") ids = &man.val_ids;
  else fail_arg("split must be \"train\" or \"val\"");
  if (ids->empty()) fail_arg("split \"" + split + "\" is empty");

  // Partner choice: same split, different sample; prefer matching dominant
  // class, then the closest power budget; remaining ties broken by seed.
  auto pick_partner = [&](int qid) -> int {
    const SampleRecord& q = man.sample(qid);
    std::vector<int> cand;
    for (int id : *ids)
      if (id != qid) cand.push_back(id);
    if (cand.empty()) return qid;
    std::vector<int> matched;
    for (int id : cand)
      if (man.sample(id).dominant == q.dominant) matched.push_back(id);
    if (!matched.empty()) cand = matched;
    double best = std::numeric_limits<double>::infinity();
    for (int id : cand) best = std::min(best, std::abs(man.sample(id).budget_w - q.budget_w));
    std::vector<int> tied;
    for (int id : cand)
      if (std::abs(man.sample(id).budget_w - q.budget_w) <= best) tied.push_back(id);
    if (tied.size() == 1) return tied[0];
    std::mt19937_64 eng(make_rng(derive_seed(seed, (uint64_t)qid)));
    return tied[std::uniform_int_distribution<size_t>(0, tied.size() - 1)(eng)];
  };

  std::vector<PairRecord> out;
  bool self_paired = false;
  for (int qid : *ids) {
    const SampleRecord& q = man.sample(qid);
    if (q.n_frames < 2) fail_run("sample " + std::to_string(qid) + " has fewer than 2 frames");
    int cid = pick_partner(qid);
    if (cid == qid) self_paired = true;
    FieldSequence qs = read_sequence((fs::path(man.dir) / q.file).string());
    FieldSequence cs = cid == qid
                           ? qs
                           : read_sequence((fs::path(man.dir) / man.sample(cid).file).string());
    int n = std::min((int)qs.frames.size(), (int)cs.frames.size());
    for (int k = 0; k + 1 < n; ++k) {
      PairRecord r;
      r.sample_id = qid;
      r.cond_id = cid;
      r.frame_index = k;
      r.I = qs.frames[k];
      r.target = qs.frames[k + 1];
      r.E = cs.frames[k];
      r.Ep = cs.frames[k + 1];
      out.push_back(std::move(r));
    }
  }
  if (self_paired && warning)
    *warning = "split \"" + split + "\" has a single sample; conditioning fell back to self-pairing";
  return out;
}

NormRecord to_norm_record(const PairRecord& rec, const Normalization& norm) {
  NormRecord nr;
  nr.spec = rec.I.spec();
  nr.I = normalize_field(rec.I, norm);
  nr.E = normalize_field(rec.E, norm);
  nr.Ep = normalize_field(rec.Ep, norm);
  nr.target = normalize_field(rec.target, norm);
  return nr;
}

}  // namespace thermal

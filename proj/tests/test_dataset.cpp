#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dataset.hpp"
#include "oracles.hpp"
#include "rng.hpp"

using namespace thermal;
namespace fs = std::filesystem;

namespace {

FieldSequence tiny_sequence() {
  GridSpec g{5, 4};
  FieldSequence seq;
  seq.dt = 2.5e-3;
  for (int k = 0; k < 3; ++k) {
    ScalarField f(g, FieldKind::TemperatureC, 25.0);
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x)
        f.at(y, x) = 25.0 + 0.125 * (k * 20 + y * 5 + x);  // exactly representable in f32
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

void write_bytes(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(data.data(), (std::streamsize)data.size());
}

BuildConfig small_build(uint64_t seed) {
  BuildConfig cfg;
  cfg.n_layouts = 8;
  // 32x32 leaves ample area headroom for the 8-24 px combinational class;
  // on smaller grids placement congestion would skip samples.
  cfg.mix = ClassMix{4, 2, 1};
  cfg.grid = GridSpec{32, 32};
  cfg.sim.substeps_per_frame = 4;
  cfg.n_frames = 6;
  cfg.frame_dt = 1e-3;
  cfg.seed = seed;
  cfg.threads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("sequence files: byte layout, exact round trip, determinism") {
  oracle::TmpDir tmp("ds_seq");
  FieldSequence seq = tiny_sequence();
  std::string p = tmp.file("a.thm");
  write_sequence(p, seq);

  std::string bytes = oracle::slurp(p);
  const GridSpec& g = seq.spec();
  CHECK(bytes.size() == 36 + (size_t)3 * g.pixels() * 4);
  CHECK(bytes.compare(0, 4, "THM1") == 0);

  FieldSequence back = read_sequence(p);
  REQUIRE(back.frames.size() == 3);
  CHECK(back.dt == seq.dt);
  CHECK(back.spec() == g);
  CHECK(back.spec().pitch == g.pitch);
  for (int k = 0; k < 3; ++k)
    for (size_t i = 0; i < seq.frames[k].size(); ++i)
      CHECK(back.frames[k].data()[i] == seq.frames[k].data()[i]);

  std::string p2 = tmp.file("b.thm");
  write_sequence(p2, seq);
  CHECK(oracle::slurp(p2) == bytes);

  // Values that are not single-precision representable land exactly on the
  // nearest f32.
  FieldSequence q = seq;
  q.frames[0].at(0, 0) = 30.0 + 1e-9;
  write_sequence(tmp.file("q.thm"), q);
  FieldSequence qb = read_sequence(tmp.file("q.thm"));
  CHECK(qb.frames[0].at(0, 0) == (double)(float)(30.0 + 1e-9));
}

TEST_CASE("sequence files: corruption is reported precisely") {
  oracle::TmpDir tmp("ds_bad");
  FieldSequence seq = tiny_sequence();
  std::string p = tmp.file("good.thm");
  write_sequence(p, seq);
  std::string bytes = oracle::slurp(p);

  std::string bad = bytes;
  bad[3] = '9';
  write_bytes(tmp.file("magic.thm"), bad);
  CHECK_THROWS_WITH_AS(read_sequence(tmp.file("magic.thm")), doctest::Contains("magic"),
                       Error);

  bad = bytes;
  bad[4] = 2;  // version little-endian low byte
  write_bytes(tmp.file("ver.thm"), bad);
  CHECK_THROWS_WITH_AS(read_sequence(tmp.file("ver.thm")),
                       doctest::Contains("unsupported sequence version"), Error);

  bad = bytes;
  bad[16] = 0;  // frame count -> 0
  write_bytes(tmp.file("zero.thm"), bad);
  CHECK_THROWS_WITH_AS(read_sequence(tmp.file("zero.thm")),
                       doctest::Contains("zero frames"), Error);

  for (size_t cut : {size_t(2), size_t(20), size_t(35), bytes.size() - 1}) {
    write_bytes(tmp.file("cut.thm"), bytes.substr(0, cut));
    CHECK_THROWS_AS(read_sequence(tmp.file("cut.thm")), Error);
  }

  write_bytes(tmp.file("extra.thm"), bytes + "x");
  CHECK_THROWS_WITH_AS(read_sequence(tmp.file("extra.thm")),
                       doctest::Contains("size mismatch"), Error);

  CHECK_THROWS_AS(read_sequence(tmp.file("missing.thm")), Error);
}

TEST_CASE("range profiles: names, bands, and the steady-state headroom rule") {
  CHECK(range_profile_from_name(range_profile_name(RangeProfile::Nominal25to55)) ==
        RangeProfile::Nominal25to55);
  CHECK(range_profile_from_name(range_profile_name(RangeProfile::Extended25to95)) ==
        RangeProfile::Extended25to95);
  CHECK_THROWS_AS(range_profile_from_name("hot"), Error);

  Normalization nn = profile_normalization(RangeProfile::Nominal25to55);
  CHECK(nn.t_floor == 25.0);
  CHECK(nn.max_i == 55.0);
  Normalization ne = profile_normalization(RangeProfile::Extended25to95);
  CHECK(ne.max_i == 95.0);

  SimConfig sim;
  for (RangeProfile p : {RangeProfile::Nominal25to55, RangeProfile::Extended25to95}) {
    double lo = 0, hi = 0;
    profile_budget_band(p, lo, hi);
    CHECK(lo > 0);
    CHECK(hi > lo);
    // The band must keep even the uniform steady state inside the profile:
    // a total budget P settles at t_ambient + P * r_th.
    Normalization n = profile_normalization(p);
    CHECK(sim.t_ambient + hi * sim.r_th <= n.max_i + 1e-12);
  }
}

TEST_CASE("dataset build: deterministic, self-consistent, split 75/25") {
  oracle::TmpDir tmp("ds_build");
  BuildConfig cfg = small_build(404);
  DatasetManifest man = build_dataset(cfg, tmp.file("out"));

  REQUIRE(man.samples.size() == 8);
  CHECK(man.skipped.empty());
  CHECK(man.train_ids.size() == 6);
  CHECK(man.val_ids.size() == 2);
  CHECK_NOTHROW(man.validate());

  std::set<int> seen;
  for (const auto& s : man.samples) seen.insert(s.id);
  CHECK(seen.size() == 8);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 7);

  double blo = 0, bhi = 0;
  profile_budget_band(cfg.profile, blo, bhi);
  std::set<uint64_t> sample_seeds;
  for (const auto& s : man.samples) {
    CHECK(s.n_frames == 6);
    CHECK(s.frame_dt == 1e-3);
    CHECK(s.budget_w >= blo);
    CHECK(s.budget_w <= bhi);
    CHECK(s.seed == derive_seed(cfg.seed, (uint64_t)s.id));
    sample_seeds.insert(s.seed);
    CHECK(!s.layout.cells.empty());
    CHECK(s.layout.dominant_class() == s.dominant);

    // Re-scan the stored frames: the recorded range must hold up to f32
    // quantization, and stay inside the declared normalization band.
    FieldSequence seq = read_sequence((fs::path(man.dir) / s.file).string());
    CHECK((int)seq.frames.size() == s.n_frames);
    CHECK(seq.dt == s.frame_dt);
    double lo = seq.frames[0].at(0, 0), hi = lo;
    for (const auto& f : seq.frames) {
      FieldStats st = field_stats(f);
      lo = std::min(lo, st.min);
      hi = std::max(hi, st.max);
    }
    CHECK(std::fabs(lo - s.min_c) < 1e-4);
    CHECK(std::fabs(hi - s.peak_c) < 1e-4);
    CHECK(s.min_c >= man.normalization.t_floor - 1e-9);
    CHECK(s.peak_c <= man.normalization.max_i + 1e-9);
  }
  CHECK(sample_seeds.size() == 8);

  SUBCASE("repeat build is byte-identical; a new seed is not") {
    DatasetManifest again = build_dataset(cfg, tmp.file("out2"));
    CHECK(oracle::slurp(tmp.file("out/manifest.json")) ==
          oracle::slurp(tmp.file("out2/manifest.json")));
    for (const auto& s : man.samples)
      CHECK(oracle::slurp((fs::path(man.dir) / s.file).string()) ==
            oracle::slurp((fs::path(again.dir) / s.file).string()));

    BuildConfig other = small_build(405);
    DatasetManifest diff = build_dataset(other, tmp.file("out3"));
    bool any_diff = false;
    for (size_t i = 0; i < diff.samples.size() && i < man.samples.size(); ++i)
      any_diff |= diff.samples[i].budget_w != man.samples[i].budget_w;
    CHECK(any_diff);
  }

  SUBCASE("manifest round trip preserves everything load needs") {
    DatasetManifest back = load_manifest(tmp.file("out/manifest.json"));
    CHECK(back.profile == man.profile);
    CHECK(back.normalization.t_floor == man.normalization.t_floor);
    CHECK(back.normalization.max_i == man.normalization.max_i);
    CHECK(back.grid == man.grid);
    CHECK(back.grid.pitch == man.grid.pitch);
    CHECK(back.n_frames == man.n_frames);
    CHECK(back.frame_dt == man.frame_dt);
    CHECK(back.seed == man.seed);
    CHECK(back.train_ids == man.train_ids);
    CHECK(back.val_ids == man.val_ids);
    CHECK(back.sim_hash() == man.sim_hash());
    REQUIRE(back.samples.size() == man.samples.size());
    for (size_t i = 0; i < back.samples.size(); ++i) {
      const SampleRecord& a = back.samples[i];
      const SampleRecord& b = man.samples[i];
      CHECK(a.id == b.id);
      CHECK(a.seed == b.seed);
      CHECK(a.file == b.file);
      CHECK(a.budget_w == b.budget_w);
      CHECK(a.dominant == b.dominant);
      CHECK(a.min_c == b.min_c);
      CHECK(a.peak_c == b.peak_c);
      REQUIRE(a.layout.cells.size() == b.layout.cells.size());
      for (size_t c = 0; c < a.layout.cells.size(); ++c) {
        CHECK(a.layout.cells[c].rect.x0 == b.layout.cells[c].rect.x0);
        CHECK(a.layout.cells[c].peak_power == b.layout.cells[c].peak_power);
        CHECK(a.layout.cells[c].activity.period == b.layout.cells[c].activity.period);
      }
    }
    // Re-writing the loaded manifest reproduces the original bytes.
    write_manifest(back, tmp.file("out/rewrite.json"));
    CHECK(oracle::slurp(tmp.file("out/rewrite.json")) ==
          oracle::slurp(tmp.file("out/manifest.json")));
  }

  SUBCASE("sim hash tracks the physics configuration, not the seed") {
    DatasetManifest m2 = man;
    m2.seed = man.seed + 1;
    CHECK(m2.sim_hash() == man.sim_hash());
    m2 = man;
    m2.frame_dt = 2e-3;
    CHECK(m2.sim_hash() != man.sim_hash());
    m2 = man;
    m2.grid.pitch *= 2;
    CHECK(m2.sim_hash() != man.sim_hash());
    m2 = man;
    m2.sim.alpha *= 1.5;
    CHECK(m2.sim_hash() != man.sim_hash());
    m2 = man;
    m2.n_frames += 1;
    CHECK(m2.sim_hash() != man.sim_hash());
  }

  SUBCASE("manifest and sequence integrity checks fire on load") {
    CHECK_THROWS_AS(man.sample(99), Error);

    DatasetManifest broken = man;
    broken.val_ids.push_back(man.train_ids[0]);
    CHECK_THROWS_WITH_AS(broken.validate(), doctest::Contains("disjoint"), Error);
    broken = man;
    broken.val_ids.pop_back();
    CHECK_THROWS_WITH_AS(broken.validate(), doctest::Contains("cover"), Error);

    std::string text = oracle::slurp(tmp.file("out/manifest.json"));
    std::string patched = text;
    patched.replace(patched.find("\"format_version\": 1"),
                    std::string("\"format_version\": 1").size(), "\"format_version\": 9");
    write_bytes(tmp.file("out/bad_ver.json"), patched);
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("out/bad_ver.json")),
                         doctest::Contains("format_version"), Error);

    write_bytes(tmp.file("out/garbage.json"), "{not json");
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("out/garbage.json")),
                         doctest::Contains("parse error"), Error);

    // Appending a byte to a referenced sequence breaks the size check.
    std::string seqp = (fs::path(man.dir) / man.samples[0].file).string();
    std::string seq_bytes = oracle::slurp(seqp);
    write_bytes(seqp, seq_bytes + "x");
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("out/manifest.json")),
                         doctest::Contains("does not match the manifest"), Error);
    write_bytes(seqp, seq_bytes);  // restore

    fs::rename(seqp, seqp + ".gone");
    CHECK_THROWS_WITH_AS(load_manifest(tmp.file("out/manifest.json")),
                         doctest::Contains("missing sequence file"), Error);
    fs::rename(seqp + ".gone", seqp);
  }

  SUBCASE("teacher-forcing pairs cover every consecutive stage") {
    std::string warn;
    std::vector<PairRecord> pairs = make_pairs(man, "train", 17, &warn);
    CHECK(warn.empty());
    CHECK(pairs.size() == 6 * 5);

    std::set<int> train(man.train_ids.begin(), man.train_ids.end());
    // Cache the sequences once for bitwise frame checks.
    auto frames_of = [&](int id) {
      return read_sequence((fs::path(man.dir) / man.sample(id).file).string());
    };
    for (const PairRecord& r : pairs) {
      CHECK(train.count(r.sample_id) == 1);
      CHECK(train.count(r.cond_id) == 1);
      CHECK(r.cond_id != r.sample_id);
      CHECK(r.frame_index >= 0);
      CHECK(r.frame_index + 1 < man.n_frames);
      CHECK(r.I.spec() == man.grid);
    }
    // Spot-check one query sample completely.
    int qid = man.train_ids[0];
    FieldSequence qs = frames_of(qid);
    int cid = -1;
    int count_q = 0;
    for (const PairRecord& r : pairs) {
      if (r.sample_id != qid) continue;
      ++count_q;
      if (cid < 0) cid = r.cond_id;
      CHECK(r.cond_id == cid);  // one partner per sample
      FieldSequence cs = frames_of(cid);
      int k = r.frame_index;
      for (size_t i = 0; i < r.I.size(); ++i) {
        CHECK(r.I.data()[i] == qs.frames[k].data()[i]);
        CHECK(r.target.data()[i] == qs.frames[k + 1].data()[i]);
        CHECK(r.E.data()[i] == cs.frames[k].data()[i]);
        CHECK(r.Ep.data()[i] == cs.frames[k + 1].data()[i]);
      }
    }
    CHECK(count_q == 5);

    // The partner respects the dominant-class preference when available.
    for (const PairRecord& r : pairs) {
      const SampleRecord& q = man.sample(r.sample_id);
      bool match_exists = false;
      for (int id : man.train_ids)
        if (id != r.sample_id && man.sample(id).dominant == q.dominant) match_exists = true;
      if (match_exists) CHECK(man.sample(r.cond_id).dominant == q.dominant);
    }

    // Deterministic in the seed.
    std::vector<PairRecord> again = make_pairs(man, "train", 17);
    REQUIRE(again.size() == pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
      CHECK(again[i].sample_id == pairs[i].sample_id);
      CHECK(again[i].cond_id == pairs[i].cond_id);
      CHECK(again[i].frame_index == pairs[i].frame_index);
    }

    std::vector<PairRecord> val_pairs = make_pairs(man, "val", 17);
    CHECK(val_pairs.size() == 2 * 5);
    for (const PairRecord& r : val_pairs) CHECK(r.cond_id != r.sample_id);

    CHECK_THROWS_AS(make_pairs(man, "test", 17), Error);
  }

  SUBCASE("single-sample splits self-pair with a warning") {
    DatasetManifest solo = man;
    solo.train_ids.clear();
    solo.val_ids.clear();
    for (const auto& s : man.samples)
      (s.id == 0 ? solo.val_ids : solo.train_ids).push_back(s.id);
    std::string warn;
    std::vector<PairRecord> pairs = make_pairs(solo, "val", 3, &warn);
    CHECK(pairs.size() == 5);
    for (const PairRecord& r : pairs) {
      CHECK(r.sample_id == 0);
      CHECK(r.cond_id == 0);
      for (size_t i = 0; i < r.I.size(); ++i) CHECK(r.E.data()[i] == r.I.data()[i]);
    }
    CHECK(warn.find("single sample") != std::string::npos);
    CHECK_NOTHROW(make_pairs(solo, "val", 3));  // null warning pointer is fine

    DatasetManifest empty = man;
    empty.val_ids.clear();
    CHECK_THROWS_WITH_AS(make_pairs(empty, "val", 3), doctest::Contains("empty"), Error);
  }

  SUBCASE("normalized records map the band linearly and keep the spec") {
    std::vector<PairRecord> pairs = make_pairs(man, "val", 17);
    const PairRecord& r = pairs[0];
    NormRecord nr = to_norm_record(r, man.normalization);
    CHECK(nr.spec == man.grid);
    double range = man.normalization.range();
    for (size_t i = 0; i < r.I.size(); ++i) {
      CHECK(nr.I.v[i] == doctest::Approx((r.I.data()[i] - 25.0) / range).epsilon(1e-12));
      CHECK(nr.target.v[i] ==
            doctest::Approx((r.target.data()[i] - 25.0) / range).epsilon(1e-12));
    }
  }
}

TEST_CASE("dataset build: argument and failure guards") {
  oracle::TmpDir tmp("ds_guard");
  BuildConfig cfg = small_build(7);
  cfg.n_layouts = 3;
  CHECK_THROWS_WITH_AS(build_dataset(cfg, tmp.file("o1")), doctest::Contains("at least 4"),
                       Error);
  cfg = small_build(7);
  cfg.n_frames = 1;
  CHECK_THROWS_AS(build_dataset(cfg, tmp.file("o2")), Error);
  cfg = small_build(7);
  cfg.frame_dt = 0;
  CHECK_THROWS_AS(build_dataset(cfg, tmp.file("o3")), Error);

  // An unconditionally unstable explicit configuration skips every sample,
  // which trips the 10% budget with the reasons recorded in the message.
  cfg = small_build(7);
  cfg.sim.scheme = Scheme::ExplicitFTCS;
  cfg.sim.substeps_per_frame = 1;  // 1 ms step vs ~38 ns stability limit
  CHECK_THROWS_WITH_AS(build_dataset(cfg, tmp.file("o4")), doctest::Contains("skipped"),
                       Error);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "meshsmile/checkpoint.hpp"
#include "meshsmile/config.hpp"
#include "meshsmile/errors.hpp"
#include "meshsmile/layers.hpp"
#include "meshsmile/rng.hpp"

using namespace meshsmile;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "meshsmile_tests";
  fs::create_directories(dir);
  return dir / name;
}

void build_store(ParamStore& store, Rng& rng) {
  store.weight("enc.w", 3, 4, rng);
  store.zeros("enc.b", 3);
  store.ones("norm.gamma", 3);
  store.weight("head.w", 1, 3, rng);
}

std::string slurp_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spill_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  REQUIRE(out.good());
}

}  // namespace

TEST_CASE("checkpoint round-trip restores every value") {
  Rng rng(7);
  ParamStore a;
  build_store(a, rng);
  const fs::path path = temp_file("weights.mswt");
  save_checkpoint(a, path.string());

  Rng rng2(99);  // different init, must be overwritten on load
  ParamStore b;
  build_store(b, rng2);
  load_checkpoint(b, path.string());

  auto pa = a.all();
  auto pb = b.all();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    REQUIRE(pa[i]->value.shape() == pb[i]->value.shape());
    for (std::size_t v = 0; v < pa[i]->value.size(); ++v) {
      // Values pass through 32-bit storage; the originals were produced from
      // floats upcast or exact small constants, so compare at f32 precision.
      CHECK(pb[i]->value[v] ==
            doctest::Approx(static_cast<double>(static_cast<float>(pa[i]->value[v])))
                .epsilon(1e-12));
    }
  }

  SUBCASE("saving the loaded store reproduces the bytes") {
    const fs::path again = temp_file("weights2.mswt");
    save_checkpoint(b, again.string());
    CHECK(slurp_bytes(path) == slurp_bytes(again));
  }
}

TEST_CASE("checkpoint rejects mismatched stores and corrupt files") {
  Rng rng(7);
  ParamStore a;
  build_store(a, rng);
  const fs::path path = temp_file("guard.mswt");
  save_checkpoint(a, path.string());
  const std::string bytes = slurp_bytes(path);
  const fs::path bad = temp_file("guard_bad.mswt");

  SUBCASE("store with a different parameter set") {
    ParamStore c;
    Rng rng2(1);
    c.weight("other.w", 3, 4, rng2);
    try {
      load_checkpoint(c, path.string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
  }
  SUBCASE("store with a different shape for a shared name") {
    ParamStore c;
    Rng rng2(1);
    c.weight("enc.w", 4, 4, rng2);
    c.zeros("enc.b", 4);
    c.ones("norm.gamma", 4);
    c.weight("head.w", 1, 4, rng2);
    try {
      load_checkpoint(c, path.string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ShapeMismatch);
    }
  }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[1] = '?';
    spill_bytes(bad, b);
    ParamStore c;
    Rng rng2(7);
    build_store(c, rng2);
    try {
      load_checkpoint(c, bad.string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::MalformedHeader);
    }
  }
  SUBCASE("truncated file") {
    spill_bytes(bad, bytes.substr(0, bytes.size() - 3));
    ParamStore c;
    Rng rng2(7);
    build_store(c, rng2);
    try {
      load_checkpoint(c, bad.string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::TruncatedPayload);
    }
  }
  SUBCASE("missing file") {
    ParamStore c;
    Rng rng2(7);
    build_store(c, rng2);
    try {
      load_checkpoint(c, temp_file("nope.mswt").string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::IoFailure);
    }
  }
}

TEST_CASE("run configuration defaults") {
  RunConfig cfg;
  CHECK(cfg.count("model.d") == 64);
  CHECK(cfg.count("model.tokens") == 32);
  CHECK(cfg.count("model.heads") == 4);
  CHECK(cfg.count("model.blocks_spatial") == 6);
  CHECK(cfg.count("model.blocks_temporal") == 3);
  CHECK(cfg.text("model.block_order") == "stacked");
  CHECK(cfg.count("model.curves") == 8);
  CHECK(cfg.count("model.curve_len") == 16);
  CHECK(cfg.count("model.knn") == 8);
  CHECK(cfg.number("model.tau") == 1.0);
  CHECK(cfg.flag("model.use_curvenet"));
  CHECK(cfg.text("model.pool") == "mean");
  CHECK(cfg.text("model.normalize") == "frame");
  CHECK(cfg.count("train.batch_size") == 16);
  CHECK(cfg.count("train.epochs") == 300);
  CHECK(cfg.number("train.lr") == 5e-4);
  CHECK(cfg.number("train.weight_decay") == 0.01);
  CHECK(cfg.count("train.clip_len") == 16);
  CHECK(cfg.count("train.eval_clips") == 5);
  CHECK(cfg.count("train.folds") == 10);
  CHECK(cfg.number("data.fps") == 0.0);
  CHECK(cfg.count("synth.landmarks") == 68);
  CHECK_FALSE(cfg.flag("synth.null_mode"));
}

TEST_CASE("run configuration overrides") {
  const fs::path path = temp_file("config.json");

  SUBCASE("file values override defaults, overrides beat the file") {
    std::ofstream(path) << "{\"model.d\": 32, \"train.lr\": 0.001, "
                           "\"model.use_curvenet\": false, \"model.pool\": \"max\"}\n";
    RunConfig cfg;
    cfg.load_file(path.string());
    CHECK(cfg.count("model.d") == 32);
    CHECK(cfg.number("train.lr") == 0.001);
    CHECK_FALSE(cfg.flag("model.use_curvenet"));
    CHECK(cfg.text("model.pool") == "max");
    CHECK(cfg.count("model.tokens") == 32);  // untouched default

    cfg.set("model.d", "16");
    cfg.set("model.use_curvenet", "true");
    CHECK(cfg.count("model.d") == 16);
    CHECK(cfg.flag("model.use_curvenet"));
  }
  SUBCASE("unknown key in file rejected") {
    std::ofstream(path) << "{\"model.dd\": 32}\n";
    RunConfig cfg;
    try {
      cfg.load_file(path.string());
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::ConfigInvalid);
      CHECK(std::string(e.what()).find("model.dd") != std::string::npos);
    }
  }
  SUBCASE("unknown key in override rejected") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("train.speed", "3"), Error);
  }
  SUBCASE("type mismatches rejected") {
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.set("model.d", "eight"), Error);
    CHECK_THROWS_AS(cfg.set("model.d", "-4"), Error);
    CHECK_THROWS_AS(cfg.set("model.tau", "warm"), Error);
    CHECK_THROWS_AS(cfg.set("model.use_curvenet", "maybe"), Error);
    CHECK_THROWS_AS(cfg.set("model.d", "8x"), Error);

    std::ofstream(path) << "{\"model.d\": \"many\"}\n";
    CHECK_THROWS_AS(cfg.load_file(path.string()), Error);
    std::ofstream(path) << "{\"model.use_curvenet\": 1}\n";
    CHECK_THROWS_AS(cfg.load_file(path.string()), Error);
  }
  SUBCASE("non-object file rejected") {
    std::ofstream(path) << "[1,2,3]\n";
    RunConfig cfg;
    CHECK_THROWS_AS(cfg.load_file(path.string()), Error);
  }
  SUBCASE("numeric text parses fractions and exponents") {
    RunConfig cfg;
    cfg.set("train.lr", "2.5e-3");
    CHECK(cfg.number("train.lr") == 2.5e-3);
    cfg.set("model.tau", "0.25");
    CHECK(cfg.number("model.tau") == 0.25);
  }
}

TEST_CASE("run configuration serializes to a loadable flat object") {
  RunConfig cfg;
  cfg.set("model.d", "24");
  cfg.set("model.normalize", "video");
  cfg.set("train.reseed_folds", "true");
  const fs::path path = temp_file("sidecar.json");
  std::ofstream(path) << cfg.to_json_text();

  RunConfig back;
  back.load_file(path.string());
  CHECK(back.count("model.d") == 24);
  CHECK(back.text("model.normalize") == "video");
  CHECK(back.flag("train.reseed_folds"));
  CHECK(back.number("train.lr") == 5e-4);

  SUBCASE("defaults listing covers every namespace") {
    auto defaults = RunConfig::describe_defaults();
    CHECK(defaults.size() >= 40);
    bool has_model = false, has_train = false, has_data = false, has_synth = false;
    for (const auto& [key, value] : defaults) {
      has_model |= key.rfind("model.", 0) == 0;
      has_train |= key.rfind("train.", 0) == 0;
      has_data |= key.rfind("data.", 0) == 0;
      has_synth |= key.rfind("synth.", 0) == 0;
      CHECK_FALSE(value.empty());
    }
    CHECK(has_model);
    CHECK(has_train);
    CHECK(has_data);
    CHECK(has_synth);
  }
}

#include <cstdio>
#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "armaid/persist.hpp"
#include "doctest.h"

using namespace armaid;

namespace {

Checkpoint trained_checkpoint(OptimizerKind kind) {
  NetworkConfig c;
  c.variant = Variant::FullPreActivation;
  c.depth = 4;
  c.filter_width = 3;
  c.features = 3;
  c.num_classes = 3;
  c.input_length = 40;
  TrainOptions o;
  o.window = 1;
  o.max_batches = 2;
  o.optimizer.kind = kind;
  const std::vector<int> opposite{0, 1};
  return train(c, Target::MA, NoiseKind::StudentT2, opposite, o, 99);
}

PersistErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const PersistError& e) {
    return e.code();
  }
  FAIL("no PersistError thrown");
  return PersistErrorCode::Io;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const PersistError& e) {
    return e.what();
  }
  return "";
}

struct TempDir {
  std::filesystem::path path;
  TempDir() : path(std::filesystem::temp_directory_path() / ("armaid_persist_" + std::to_string(::getpid()))) {
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("checkpoint round-trips byte-exactly") {
  for (OptimizerKind kind : {OptimizerKind::NAG, OptimizerKind::Adam}) {
    const Checkpoint ck = trained_checkpoint(kind);
    const std::string a = encode_checkpoint(ck);
    const Checkpoint back = decode_checkpoint(a);
    CHECK(encode_checkpoint(back) == a);
    CHECK(back.params.values == ck.params.values);
    CHECK(back.params.running_mean == ck.params.running_mean);
    CHECK(back.params.running_var == ck.params.running_var);
    CHECK(back.trace.window_means == ck.trace.window_means);
    CHECK(back.trace.window_lr == ck.trace.window_lr);
    CHECK(back.mean_error() == ck.mean_error());
    CHECK(back.target == Target::MA);
    CHECK(back.noise == NoiseKind::StudentT2);
    CHECK(back.constraint_history == ck.constraint_history);
    CHECK(back.seed == 99);
    CHECK(back.optimizer.first == ck.optimizer.first);
    CHECK(back.optimizer.second == ck.optimizer.second);
    CHECK(back.optimizer.step == ck.optimizer.step);
    CHECK(back.config.variant == Variant::FullPreActivation);
  }
}

TEST_CASE("checkpoint files on disk") {
  TempDir dir;
  const Checkpoint ck = trained_checkpoint(OptimizerKind::NAG);
  const std::string p1 = (dir.path / "a.arid").string();
  const std::string p2 = (dir.path / "b.arid").string();
  save_checkpoint(ck, p1);
  save_checkpoint(load_checkpoint(p1), p2);
  CHECK(read_file(p1) == read_file(p2));
  CHECK(code_of([&] { load_checkpoint((dir.path / "missing").string()); }) == PersistErrorCode::Io);
}

TEST_CASE("damaged checkpoint files are rejected with distinct codes") {
  const Checkpoint ck = trained_checkpoint(OptimizerKind::NAG);
  const std::string good = encode_checkpoint(ck);

  for (std::size_t cut : {std::size_t{2}, std::size_t{10}, good.size() / 2, good.size() - 1}) {
    const std::string truncated = good.substr(0, cut);
    const auto code = code_of([&] { decode_checkpoint(truncated); });
    CHECK((cut < 4 ? code == PersistErrorCode::BadMagic : code == PersistErrorCode::Checksum));
  }

  std::string flipped = good;
  flipped[good.size() - 20] ^= 0x10;
  CHECK(code_of([&] { decode_checkpoint(flipped); }) == PersistErrorCode::Checksum);

  std::string magic = good;
  magic[0] = 'X';
  CHECK(code_of([&] { decode_checkpoint(magic); }) == PersistErrorCode::BadMagic);

  std::string version = good;
  version[4] = 2;
  CHECK(code_of([&] { decode_checkpoint(version); }) == PersistErrorCode::VersionMismatch);

  std::string key = good;
  const std::size_t at = key.find("features=");
  REQUIRE(at != std::string::npos);
  key[at + 1] = 'X';
  const std::string msg = message_of([&] { decode_checkpoint(key); });
  CHECK(msg.find("header-parse") == 0);
  CHECK(msg.find("fXatures") != std::string::npos);

  std::string value = good;
  const std::size_t dat = value.find("depth=4");
  value[dat + 6] = 'x';
  const std::string vmsg = message_of([&] { decode_checkpoint(value); });
  CHECK(vmsg.find("'depth'") != std::string::npos);

  // A header that disagrees with the stored tensors.
  std::string shape = good;
  const std::size_t fat = shape.find("features=3");
  shape[fat + 9] = '4';
  CHECK(code_of([&] { decode_checkpoint(shape); }) == PersistErrorCode::ShapeMismatch);
}

TEST_CASE("suite round trip and size") {
  const TestSuite suite = gen_test_suite(NoiseKind::Normal01, 2, 5, 9, 50);
  const std::string bytes = encode_suite(suite);
  const TestSuite back = decode_suite(bytes);
  REQUIRE(back.series.size() == 200);
  for (std::size_t i = 0; i < suite.series.size(); ++i) {
    CHECK(back.series[i].values == suite.series[i].values);
    CHECK(back.series[i].label.value() == suite.series[i].label.value());
  }
  CHECK(back.noise == suite.noise);
  CHECK(back.batches == 2);
  CHECK(back.seed == 5);
  CHECK(encode_suite(back) == bytes);
  // 8 bytes per value plus labels and a small header.
  const std::size_t data = 200 * 50 * 8 + 200 * 2 * 4;
  CHECK(bytes.size() > data);
  CHECK(bytes.size() < data + 512);
}

TEST_CASE("a checkpoint is not a suite") {
  const std::string ck = encode_checkpoint(trained_checkpoint(OptimizerKind::NAG));
  CHECK(code_of([&] { decode_suite(ck); }) == PersistErrorCode::BadMagic);
  const std::string suite = encode_suite(gen_test_suite(NoiseKind::Normal01, 1, 1, 1, 20));
  CHECK(code_of([&] { decode_checkpoint(suite); }) == PersistErrorCode::BadMagic);
}

TEST_CASE("trace CSV") {
  TrainTrace t;
  t.window_means = {2.3, 2.1};
  t.window_lr = {0.1, 0.05};
  t.window_wall_seconds = {1.0, 2.5};
  std::ostringstream out;
  write_trace_csv(out, t);
  CHECK(out.str() == "window_index,mean_error,lr,wall_seconds\n0,2.2999999999999998,0.10000000000000001,1\n"
                     "1,2.1000000000000001,0.050000000000000003,2.5\n");
}

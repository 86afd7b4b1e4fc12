#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "monoattn/io.hpp"

using namespace monoattn;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("corpus round-trip") {
  SyntheticTaskSpec spec;
  spec.task = SyntheticTask::local_reorder;
  spec.reorder_window = 3;
  spec.seed = 5;
  auto corpus = generate_corpus(spec, 25);
  TempFile f("io_corpus_test.txt");
  write_corpus(corpus, f.path);
  auto back = read_corpus(f.path);
  REQUIRE(back.size() == corpus.size());
  for (size_t i = 0; i < corpus.size(); ++i) {
    CHECK(back[i].source == corpus[i].source);
    CHECK(back[i].target == corpus[i].target);
    CHECK(back[i].permutation == corpus[i].permutation);
    CHECK(back[i].cross_count == corpus[i].cross_count);
  }
}

TEST_CASE("corpus parse errors carry line numbers") {
  TempFile f("io_corpus_bad.txt");
  {
    std::ofstream os(f.path);
    os << "1 2 3\t4 5\n";  // missing alignment field
  }
  CHECK_THROWS_WITH_AS(read_corpus(f.path),
                       doctest::Contains(":1:"), std::runtime_error);
}

TEST_CASE("key-value round-trip with comments and sections ignored") {
  TempFile f("io_kv_test.txt");
  {
    std::ofstream os(f.path);
    os << "# comment\n[section]\nalpha = 1\n beta=two \n\n";
  }
  auto kv = read_kv(f.path);
  CHECK(kv.size() == 2);
  CHECK(kv.at("alpha") == "1");
  CHECK(kv.at("beta") == "two");
}

TEST_CASE("model config persists through key-value form") {
  ModelConfig cfg;
  cfg.vocab_size = 9;
  cfg.src_vocab_size = 9;
  cfg.d_model = 32;
  cfg.heads = 4;
  cfg.chunk_frames = 8;
  cfg.decision_step = 2;
  TempFile f("io_model_cfg.txt");
  write_kv(model_config_kv(cfg), f.path);
  ModelConfig back = model_config_from_kv(read_kv(f.path));
  CHECK(back.vocab_size == 9);
  CHECK(back.d_model == 32);
  CHECK(back.chunk_frames == 8);
  CHECK(back.decision_step == 2);
}

TEST_CASE("decode records round-trip losslessly") {
  std::vector<DecodeRecord> records(2);
  records[0].id = 0;
  records[0].source = {1, 2, 3, 4};
  records[0].reference = {2, 3, 4, 5};
  records[0].hypothesis = {2, 3, 5};
  records[0].g = {2, 2, 4};
  records[0].frames_total = 4;
  records[0].cross_count = 1;
  records[1].id = 1;
  records[1].source = {7};
  records[1].reference = {8};
  records[1].hypothesis = {8};
  records[1].g = {1};
  records[1].frames_total = 1;
  records[1].write_stamps = {0.125};

  TempFile f("io_records_test.jsonl");
  write_records(records, f.path);
  auto back = read_records(f.path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].hypothesis == records[0].hypothesis);
  CHECK(back[0].g == records[0].g);
  CHECK(back[0].cross_count == 1);
  CHECK(back[1].write_stamps == records[1].write_stamps);

  // rebuilt trace validates and reproduces delays
  DecodeTrace tr = record_trace(back[0]);
  tr.check_valid();
  auto d = trace_delays(tr, false);
  CHECK(d == std::vector<double>{2, 2, 4});
}

TEST_CASE("record validation rejects inconsistent g") {
  TempFile f("io_records_bad.jsonl");
  {
    std::ofstream os(f.path);
    os << R"({"id":0,"source":[1],"reference":[1],"hypothesis":[1,2],)"
       << R"("g":[1],"frames_total":1,"cross_count":0})" << "\n";
  }
  CHECK_THROWS_AS(read_records(f.path), std::runtime_error);
}

TEST_CASE("csv writer enforces row width") {
  TempFile f("io_csv_test.csv");
  write_csv({"a", "b"}, {{"1", "2"}, {"3", "4"}}, f.path);
  std::ifstream is(f.path);
  std::string line;
  std::getline(is, line);
  CHECK(line == "a,b");
  CHECK_THROWS_AS(write_csv({"a"}, {{"1", "2"}}, f.path),
                  std::invalid_argument);
}

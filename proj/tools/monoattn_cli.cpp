// Command-line driver: corpus generation, training, streaming decoding,
// evaluation, and self-verification.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "monoattn/io.hpp"
#include "monoattn/selfcheck.hpp"
#include "monoattn/training.hpp"

namespace fs = std::filesystem;
using namespace monoattn;

namespace {

struct CommonOpts {
  std::string out_dir = "out";
  uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--out", o.out_dir, "output directory")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "random seed")->capture_default_str();
}

fs::path ensure_out(const CommonOpts& o) {
  fs::path dir(o.out_dir);
  fs::create_directories(dir);
  return dir;
}

// "--chunk N|inf": inf means a chunk at least as long as any source.
int parse_chunk(const std::string& s, int max_source_len) {
  if (s == "inf") return max_source_len;
  int v = std::stoi(s);
  if (v < 1) throw CLI::ValidationError("--chunk must be >= 1 or 'inf'");
  return v;
}

void echo_config(const fs::path& dir,
                 const std::map<std::string, std::string>& kv) {
  write_kv(kv, (dir / "effective_config.txt").string());
}

// ---------------------------------------------------------------------------

int run_gen(const CommonOpts& common, const SyntheticTaskSpec& spec_in,
            const std::string& task_str, int n_samples) {
  SyntheticTaskSpec spec = spec_in;
  spec.task = task_from_name(task_str);
  spec.seed = common.seed;
  spec.validate();
  fs::path dir = ensure_out(common);
  auto corpus = generate_corpus(spec, n_samples);
  write_corpus(corpus, (dir / "corpus.txt").string());
  write_kv(manifest_for(spec, n_samples), (dir / "manifest.txt").string());
  echo_config(dir, manifest_for(spec, n_samples));
  std::cout << "wrote " << corpus.size() << " samples to "
            << (dir / "corpus.txt").string() << "\n";
  return 0;
}

ModelConfig resolve_model_config(const std::string& config_path,
                                 const std::string& data_path,
                                 const std::string& chunk_str, int decision_step,
                                 int lookahead) {
  ModelConfig cfg;
  if (!config_path.empty()) cfg = model_config_from_kv(read_kv(config_path));
  // vocabulary from the corpus manifest when present
  fs::path manifest = fs::path(data_path).parent_path() / "manifest.txt";
  if (config_path.empty() && fs::exists(manifest)) {
    auto kv = read_kv(manifest.string());
    auto it = kv.find("vocab_size");
    if (it != kv.end()) {
      cfg.src_vocab_size = std::stoi(it->second);
      cfg.vocab_size = cfg.src_vocab_size;
    }
  }
  cfg.chunk_frames = parse_chunk(chunk_str, cfg.max_source_len);
  cfg.decision_step = decision_step;
  if (cfg.chunk_frames % cfg.decision_step != 0)
    cfg.chunk_frames =
        ((cfg.chunk_frames + cfg.decision_step - 1) / cfg.decision_step) *
        cfg.decision_step;
  cfg.lookahead_chunks = lookahead;
  cfg.validate();
  return cfg;
}

int run_train(const CommonOpts& common, const std::string& data_path,
              const std::string& config_path, const std::string& mode_str,
              const std::string& prior_str, const std::string& chunk_str,
              int decision_step, int lookahead, int steps, int batch_size,
              double lr, int warmup, const std::string& init_ckpt,
              bool zero_context) {
  ModelConfig mc = resolve_model_config(config_path, data_path, chunk_str,
                                        decision_step, lookahead);
  auto data = read_corpus(data_path);
  if (data.empty()) throw std::runtime_error("empty corpus: " + data_path);

  TrainConfig tc;
  if (mode_str == "offline")
    tc.mode = TrainMode::offline_pretrain;
  else if (mode_str == "posterior")
    tc.mode = TrainMode::streaming_posterior;
  else if (mode_str == "prior")
    tc.mode = TrainMode::streaming_prior;
  else
    throw CLI::ValidationError("--mode must be offline, posterior, or prior");
  if (prior_str == "uniform")
    tc.prior_kind = AlignKind::uniform_prior;
  else if (prior_str == "diagonal")
    tc.prior_kind = AlignKind::diagonal_prior;
  else
    throw CLI::ValidationError("--prior must be uniform or diagonal");
  tc.steps = steps;
  tc.batch_size = batch_size;
  tc.seed = common.seed;
  tc.adam.peak_lr = lr;
  tc.adam.warmup_steps = warmup;
  tc.zero_context = zero_context;

  // offline pretraining uses full-sentence attention regardless of chunking
  if (tc.mode == TrainMode::offline_pretrain) {
    mc.chunk_frames = ((mc.max_source_len + mc.decision_step - 1) /
                       mc.decision_step) * mc.decision_step;
  }

  Model model(mc, common.seed);
  if (!init_ckpt.empty()) load_checkpoint(model.params(), init_ckpt);

  fs::path dir = ensure_out(common);
  std::ofstream log((dir / "train_log.csv").string());
  log << "step,loss,grad_norm,fallbacks,skipped,wall_ms\n";
  double last = train(model, data, tc, [&](const StepRecord& r) {
    log << r.step << ',' << r.loss << ',' << r.grad_norm << ',' << r.fallbacks
        << ',' << r.skipped << ',' << r.wall_ms << '\n';
    if (r.step % 100 == 0 || r.step == 1)
      std::cout << "step " << r.step << " loss " << r.loss << "\n";
  });

  save_checkpoint(model.params(), (dir / "checkpoint.bin").string());
  auto kv = model_config_kv(model.config());
  kv["mode"] = mode_str;
  kv["prior"] = prior_str;
  kv["steps"] = std::to_string(steps);
  kv["batch_size"] = std::to_string(batch_size);
  kv["seed"] = std::to_string(common.seed);
  kv["zero_context"] = zero_context ? "1" : "0";
  write_kv(model_config_kv(model.config()), (dir / "model_config.txt").string());
  echo_config(dir, kv);
  std::cout << "final loss " << last << "; checkpoint at "
            << (dir / "checkpoint.bin").string() << "\n";
  return 0;
}

int run_decode(const CommonOpts& common, const std::string& ckpt_path,
               const std::string& config_path, const std::string& data_path,
               const std::string& chunk_str, int decision_step, int lookahead,
               bool zero_context, bool stamps, int max_output_len) {
  std::string cfg_file = config_path;
  if (cfg_file.empty()) {
    fs::path sibling = fs::path(ckpt_path).parent_path() / "model_config.txt";
    if (!fs::exists(sibling))
      throw std::runtime_error("no --model-config and no model_config.txt next "
                               "to the checkpoint");
    cfg_file = sibling.string();
  }
  ModelConfig mc = model_config_from_kv(read_kv(cfg_file));
  int chunk = parse_chunk(chunk_str, mc.max_source_len);
  if (decision_step > 0) mc.decision_step = decision_step;
  mc.chunk_frames = ((std::max(chunk, mc.decision_step) + mc.decision_step - 1) /
                     mc.decision_step) * mc.decision_step;
  mc.lookahead_chunks = lookahead;
  mc.validate();

  Model model(mc, common.seed);
  load_checkpoint(model.params(), ckpt_path);
  auto data = read_corpus(data_path);

  DecodePolicyConfig policy;
  policy.chunk_frames = mc.chunk_frames;
  policy.decision_step = mc.decision_step;
  policy.record_stamps = stamps;
  policy.max_output_len = max_output_len;
  CrossMode mode = zero_context ? CrossMode::zeroed : CrossMode::expected;

  std::vector<DecodeRecord> records;
  records.reserve(data.size());
  for (size_t i = 0; i < data.size(); ++i) {
    DecodeResult res = stream_decode(data[i].source, model, policy, mode);
    records.push_back(make_record(static_cast<int>(i), data[i], res));
  }

  fs::path dir = ensure_out(common);
  write_records(records, (dir / "decodes.jsonl").string());
  auto kv = model_config_kv(mc);
  kv["checkpoint"] = ckpt_path;
  kv["data"] = data_path;
  kv["zero_context"] = zero_context ? "1" : "0";
  echo_config(dir, kv);
  std::cout << "decoded " << records.size() << " samples to "
            << (dir / "decodes.jsonl").string() << "\n";
  return 0;
}

struct EvalAccum {
  double acc = 0.0, edit = 0.0, al = 0.0, laal = 0.0, ap = 0.0, dal = 0.0;
  int n = 0, n_latency = 0;
  void add(double a, double e, const LatencyReport& rep) {
    acc += a;
    edit += e;
    ++n;
    if (rep.al) {
      al += *rep.al;
      laal += *rep.laal;
      ap += *rep.ap;
      dal += *rep.dal;
      ++n_latency;
    }
  }
  nlohmann::json summary() const {
    nlohmann::json j{{"samples", n}, {"token_accuracy", n ? acc / n : 0.0},
                     {"edit_distance_normalized", n ? edit / n : 0.0}};
    if (n_latency) {
      j["al"] = al / n_latency;
      j["laal"] = laal / n_latency;
      j["ap"] = ap / n_latency;
      j["dal"] = dal / n_latency;
    }
    return j;
  }
};

int run_eval(const CommonOpts& common, const std::string& decodes_path,
             double frame_duration_s) {
  auto records = read_records(decodes_path);
  if (records.empty()) throw std::runtime_error("no records in " + decodes_path);

  // cross-count terciles over the evaluated set (easy / medium / hard)
  std::vector<int64_t> crosses;
  for (const auto& r : records) crosses.push_back(r.cross_count);
  std::vector<int64_t> sorted = crosses;
  std::sort(sorted.begin(), sorted.end());
  int64_t t1 = sorted[sorted.size() / 3];
  int64_t t2 = sorted[(2 * sorted.size()) / 3];
  auto subset_of = [&](int64_t c) {
    return c <= t1 ? "easy" : (c <= t2 ? "medium" : "hard");
  };

  std::vector<std::vector<std::string>> rows;
  EvalAccum all;
  std::map<std::string, EvalAccum> by_subset;
  std::map<std::string, EvalAccum> by_fixed;  // the reference thresholds
  auto fixed_subset = [](int64_t c) {
    return c <= 1 ? "easy" : (c <= 6 ? "medium" : "hard");
  };
  for (const auto& r : records) {
    double acc = token_accuracy(r.hypothesis, r.reference);
    double ed = edit_distance_normalized(r.hypothesis, r.reference);
    DecodeTrace tr = record_trace(r);
    LatencyReport rep = latency_report(tr, static_cast<int>(r.reference.size()),
                                       frame_duration_s);
    all.add(acc, ed, rep);
    by_subset[subset_of(r.cross_count)].add(acc, ed, rep);
    by_fixed[fixed_subset(r.cross_count)].add(acc, ed, rep);
    auto num = [](const std::optional<double>& v) {
      return v ? std::to_string(*v) : std::string("");
    };
    rows.push_back({std::to_string(r.id), std::to_string(r.cross_count),
                    subset_of(r.cross_count), std::to_string(acc),
                    std::to_string(ed), num(rep.al), num(rep.laal), num(rep.ap),
                    num(rep.dal)});
  }

  fs::path dir = ensure_out(common);
  write_csv({"id", "cross_count", "subset", "token_accuracy",
             "edit_distance_normalized", "al", "laal", "ap", "dal"},
            rows, (dir / "metrics.csv").string());

  nlohmann::json summary{{"overall", all.summary()},
                         {"tercile_thresholds", {t1, t2}}};
  for (const auto& [name, acc] : by_subset)
    summary["by_subset"][name] = acc.summary();
  for (const auto& [name, acc] : by_fixed)
    summary["by_fixed_thresholds"][name] = acc.summary();
  std::ofstream js((dir / "summary.json").string());
  js << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int run_verify() {
  bool all_pass = true;
  for (const CheckResult& r : selfcheck::run_all()) {
    std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << " (" << r.detail
              << ")\n";
    all_pass &= r.pass;
  }
  return all_pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming transducer with monotonic cross-attention"};
  app.require_subcommand(1);
  app.set_config("--config", "", "flat key-value config file");
  app.allow_config_extras(CLI::config_extras_mode::ignore_all);

  CommonOpts common;

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  SyntheticTaskSpec spec;
  std::string task_str = "copy";
  int n_samples = 1000;
  add_common(gen, common);
  gen->add_option("--task", task_str, "copy | local_reorder | block_reverse")
      ->capture_default_str();
  gen->add_option("--n", n_samples, "number of samples")->capture_default_str();
  gen->add_option("--vocab", spec.vocab_size)->capture_default_str();
  gen->add_option("--min-len", spec.min_len)->capture_default_str();
  gen->add_option("--max-len", spec.max_len)->capture_default_str();
  gen->add_option("--window", spec.reorder_window,
                  "max displacement / block size")->capture_default_str();
  gen->add_option("--prob", spec.reorder_prob, "reorder probability")
      ->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string data_path, model_config_path, mode_str = "offline";
  std::string prior_str = "diagonal", chunk_str = "4", init_ckpt;
  int decision_step = 1, lookahead = 0, steps = 1000, batch_size = 8;
  int warmup = 400;
  double lr = 1e-3;
  bool zero_context = false;
  add_common(tr, common);
  tr->add_option("--data", data_path, "corpus file")->required();
  tr->add_option("--model-config", model_config_path,
                 "model dimensions (key-value file)");
  tr->add_option("--mode", mode_str, "offline | posterior | prior")
      ->capture_default_str();
  tr->add_option("--prior", prior_str, "uniform | diagonal")
      ->capture_default_str();
  tr->add_option("--chunk", chunk_str, "chunk size in frames, or 'inf'")
      ->capture_default_str();
  tr->add_option("--decision-step", decision_step)->capture_default_str();
  tr->add_option("--lookahead", lookahead, "lookahead chunks: 0 or 1")
      ->capture_default_str();
  tr->add_option("--steps", steps)->capture_default_str();
  tr->add_option("--batch", batch_size)->capture_default_str();
  tr->add_option("--lr", lr, "peak learning rate")->capture_default_str();
  tr->add_option("--warmup", warmup, "warmup steps")->capture_default_str();
  tr->add_option("--init", init_ckpt, "initialize from a checkpoint");
  tr->add_flag("--zero-context", zero_context,
               "disable cross-attention (Transducer baseline)");

  // decode
  auto* de = app.add_subcommand("decode", "stream-decode a corpus");
  std::string ckpt_path, de_config, de_data, de_chunk = "4";
  int de_step = 0, de_lookahead = 0, de_max_len = 128;
  bool de_zero = false, de_stamps = false;
  add_common(de, common);
  de->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  de->add_option("--model-config", de_config, "model dimensions file");
  de->add_option("--data", de_data, "corpus file")->required();
  de->add_option("--chunk", de_chunk, "chunk size in frames, or 'inf'")
      ->capture_default_str();
  de->add_option("--decision-step", de_step,
                 "override the trained decision step (0 = keep)")
      ->capture_default_str();
  de->add_option("--lookahead", de_lookahead)->capture_default_str();
  de->add_option("--max-output-len", de_max_len)->capture_default_str();
  de->add_flag("--zero-context", de_zero, "decode without cross-attention");
  de->add_flag("--stamps", de_stamps, "record wall-clock event stamps");

  // eval
  auto* ev = app.add_subcommand("eval", "score decode records");
  std::string decodes_path;
  double frame_duration = 0.0;
  add_common(ev, common);
  ev->add_option("--decodes", decodes_path, "decodes.jsonl from `decode`")
      ->required();
  ev->add_option("--frame-duration", frame_duration,
                 "seconds per source frame (enables computation-aware metrics)")
      ->capture_default_str();

  // verify
  auto* ve = app.add_subcommand("verify",
                                "run the oracle and property suites");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return run_gen(common, spec, task_str, n_samples);
    if (tr->parsed())
      return run_train(common, data_path, model_config_path, mode_str,
                       prior_str, chunk_str, decision_step, lookahead, steps,
                       batch_size, lr, warmup, init_ckpt, zero_context);
    if (de->parsed())
      return run_decode(common, ckpt_path, de_config, de_data, de_chunk,
                        de_step, de_lookahead, de_zero, de_stamps, de_max_len);
    if (ev->parsed()) return run_eval(common, decodes_path, frame_duration);
    if (ve->parsed()) return run_verify();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// tools/cli.cpp

// Copyright 2026  The comoe Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "comoe/analysis.hpp"
#include "comoe/checkpoint.hpp"
#include "comoe/errors.hpp"
#include "comoe/gradcheck.hpp"
#include "comoe/synth_data.hpp"
#include "comoe/train.hpp"

namespace comoe {

namespace {

namespace fs = std::filesystem;

// Resolves corpus-dependent model fields and checks the rest.
void bind_corpus(TrainConfig& cfg, const CorpusSpec& spec) {
  if (cfg.d_feat_from_corpus) cfg.model.d_feat = spec.d_feat;
  if (cfg.vocab_from_corpus) cfg.model.vocab_size = spec.vocab_size();
  check_corpus_compatibility(cfg.model, spec);
}

int cmd_gen_data(const std::string& spec_path, const std::string& out_dir, std::ostream& out) {
  const CorpusSpec spec = spec_path.empty() ? CorpusSpec{} : load_corpus_spec(spec_path);
  spec.validate();
  const Corpus corpus = gen_corpus(spec);
  write_corpus(corpus, out_dir);
  out << nlohmann::json{{"corpus", out_dir},
                        {"train", corpus.train.size()},
                        {"dev", corpus.dev.size()},
                        {"test", corpus.test.size()}}
             .dump()
      << '\n';
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume, std::ostream& out) {
  TrainConfig cfg = load_train_config(config_path);
  if (cfg.corpus_path.empty()) throw ValidationError("corpus_path: required for training");
  if (cfg.checkpoint_path.empty()) throw ValidationError("checkpoint_path: required for training");
  if (cfg.log_path.empty()) throw ValidationError("log_path: required for training");
  Corpus corpus = read_corpus(cfg.corpus_path);
  bind_corpus(cfg, corpus.spec);

  Trainer trainer = resume.empty() ? Trainer(cfg, std::move(corpus.train))
                                   : Trainer::resume(cfg, std::move(corpus.train), resume);
  if (fs::path(cfg.log_path).has_parent_path()) fs::create_directories(fs::path(cfg.log_path).parent_path());
  std::ofstream log(cfg.log_path, resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw ValidationError("cannot write training log " + cfg.log_path);
  StepRecord last;
  trainer.run(&log, [&](const StepRecord& r) { last = r; });
  out << nlohmann::json{{"steps", trainer.current_step()},
                        {"final_total", last.loss.total},
                        {"checkpoint", cfg.checkpoint_path},
                        {"log", cfg.log_path}}
             .dump()
      << '\n';
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& corpus_dir, const std::string& split, std::ostream& out) {
  const Checkpoint ckpt = read_checkpoint(ckpt_path);
  const Corpus corpus = read_corpus(corpus_dir);
  check_corpus_compatibility(ckpt.config, corpus.spec);
  EncoderModel<float> model(ckpt.config);
  load_model_params(ckpt, model);
  const EvalReport report = evaluate(model, std::span<const Utterance>(corpus.split(split)));
  nlohmann::json j = report.to_json();
  j["checkpoint"] = ckpt_path;
  j["split"] = split;
  out << j.dump() << '\n';
  out << format_eval_table({{fs::path(ckpt_path).stem().string(), report}});
  return 0;
}

std::string flops_table(const std::vector<FlopsReport>& reports) {
  std::ostringstream ss;
  char line[200];
  std::snprintf(line, sizeof line, "%-16s %14s %18s %18s\n", "variant", "params", "flops_total", "skipped_flops");
  ss << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-16s %14llu %18llu %18llu\n", r.variant.c_str(),
                  static_cast<unsigned long long>(r.params), static_cast<unsigned long long>(r.flops_total),
                  static_cast<unsigned long long>(r.skipped_experts_flops));
    ss << line;
  }
  return ss.str();
}

int cmd_flops(const std::vector<std::string>& configs, bool full_scale, std::uint64_t frames, std::ostream& out) {
  std::vector<FlopsReport> reports;
  if (full_scale) {
    for (Variant v : {Variant::baseline, Variant::switch_sparse, Variant::collaborative, Variant::dense_moe,
                      Variant::bi_encoder}) {
      reports.push_back(count_flops(full_scale_config(v), frames));
    }
  }
  for (const auto& path : configs) reports.push_back(count_flops(load_train_config(path).model, frames));
  if (reports.empty()) throw ValidationError("flops: pass --config or --full-scale");
  for (const auto& r : reports) out << r.to_json().dump() << '\n';
  out << flops_table(reports);
  return 0;
}

int cmd_compare(const std::vector<std::string>& configs, const std::vector<std::uint64_t>& seeds,
                const std::string& corpus_override, const std::string& split, std::uint64_t frames,
                std::ostream& out) {
  if (configs.empty()) throw ValidationError("compare: at least one --config is required");
  std::vector<TrainConfig> cfgs;
  for (const auto& path : configs) cfgs.push_back(load_train_config(path));
  const std::string corpus_dir = corpus_override.empty() ? cfgs.front().corpus_path : corpus_override;
  if (corpus_dir.empty()) throw ValidationError("corpus_path: required (config key or --corpus)");
  if (corpus_override.empty()) {
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
      if (cfgs[i].corpus_path != corpus_dir)
        throw ValidationError("compare: " + configs[i] + " uses a different corpus_path; pass --corpus to share one");
    }
  }
  const Corpus corpus = read_corpus(corpus_dir);
  const auto& eval_split = corpus.split(split);

  std::vector<std::pair<std::string, EvalReport>> rows;
  std::vector<std::string> extra;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    TrainConfig cfg = cfgs[i];
    bind_corpus(cfg, corpus.spec);
    const std::string name = fs::path(configs[i]).stem().string();
    const std::vector<std::uint64_t> run_seeds = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : seeds;
    EvalReport mean;
    std::size_t params = 0;
    for (std::uint64_t seed : run_seeds) {
      TrainConfig run = cfg;
      run.seed = seed;
      run.checkpoint_path.clear();
      Trainer trainer(run, corpus.train);
      trainer.run();
      const EvalReport r = evaluate(trainer.model(), std::span<const Utterance>(eval_split));
      params = trainer.model().encoder_param_count();
      nlohmann::json j = r.to_json();
      j["system"] = name;
      j["seed"] = seed;
      out << j.dump() << '\n';
      for (std::size_t c = 0; c < 3; ++c) {
        mean.per_class[c].utterances = r.per_class[c].utterances;
        mean.per_class[c].error_rate += r.per_class[c].error_rate / static_cast<double>(run_seeds.size());
      }
      mean.average += r.average / static_cast<double>(run_seeds.size());
      if (r.lid_accuracy) mean.lid_accuracy = mean.lid_accuracy.value_or(0.0) + *r.lid_accuracy / run_seeds.size();
      mean.utterances = r.utterances;
    }
    const FlopsReport flops = count_flops(cfg.model, frames);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-24s %10zu %14llu\n", name.c_str(), params,
                  static_cast<unsigned long long>(flops.flops_total));
    extra.emplace_back(buf);
    rows.emplace_back(name, mean);
  }
  out << format_eval_table(rows);
  char head[160];
  std::snprintf(head, sizeof head, "%-24s %10s %14s\n", "system", "params", "flops");
  out << head;
  for (const auto& line : extra) out << line;
  return 0;
}

int cmd_grad_check(const std::string& config_path, bool corrupt, double epsilon, double threshold,
                   std::size_t max_entries, std::ostream& out) {
  ModelConfig cfg = tiny_grad_check_config();
  if (!config_path.empty()) {
    KeyValueFile kv = KeyValueFile::load(config_path);
    apply_model_keys(kv, cfg);
    kv.expect_consumed();
  }
  GradCheckOptions opts;
  opts.epsilon = epsilon;
  opts.max_entries_per_tensor = max_entries;
  const GradReport report = model_grad_check(cfg, opts, corrupt);
  const bool pass = report.max_abs_rel_error < threshold;
  out << nlohmann::json{{"max_abs_rel_error", report.max_abs_rel_error},
                        {"worst_parameter", report.worst_parameter},
                        {"entries_checked", report.entries_checked},
                        {"threshold", threshold},
                        {"pass", pass}}
             .dump()
      << '\n';
  return pass ? 0 : 2;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) seeds.push_back(parse_u64_field("seeds", item));
  }
  return seeds;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Code-switching ASR encoder toolkit: synthetic corpora, MoE encoders, training and analysis", "comoe"};
  app.require_subcommand(1);

  std::string spec_path, out_dir;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic corpus (train/dev/test + manifest)");
  gen->add_option("--spec", spec_path, "Corpus spec file (key = value); defaults when omitted");
  gen->add_option("--out", out_dir, "Output directory")->required();

  std::string train_config, resume;
  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", train_config, "Train config file")->required();
  train->add_option("--resume", resume, "Checkpoint to resume from");

  std::string ckpt, corpus_dir, split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus split");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  eval->add_option("--split", split, "train, dev or test")->check(CLI::IsMember({"train", "dev", "test"}));

  std::vector<std::string> flops_configs;
  bool full_scale = false;
  std::uint64_t frames = 500;
  auto* flops = app.add_subcommand("flops", "Analytic FLOPs and parameter counts");
  flops->add_option("--config", flops_configs, "Model or train config file (repeatable)");
  flops->add_flag("--full-scale", full_scale, "Report the full-size reference encoders");
  flops->add_option("--frames", frames, "Input length in encoder frames");

  std::vector<std::string> compare_configs;
  std::string seed_list, compare_corpus, compare_split = "test";
  std::uint64_t compare_frames = 500;
  auto* compare = app.add_subcommand("compare", "Train and evaluate several configs on one corpus");
  compare->add_option("--config", compare_configs, "Train config file (repeatable)")->required();
  compare->add_option("--seeds", seed_list, "Comma-separated seeds (default: each config's seed)");
  compare->add_option("--corpus", compare_corpus, "Corpus directory shared by all configs");
  compare->add_option("--split", compare_split, "Evaluation split")->check(CLI::IsMember({"train", "dev", "test"}));
  compare->add_option("--frames", compare_frames, "Input length for the FLOPs column");

  std::string gc_config;
  bool corrupt = false;
  double epsilon = 1e-5, threshold = 1e-4;
  std::size_t max_entries = 48;
  auto* grad = app.add_subcommand("grad-check", "Finite-difference check of the full training loss");
  grad->add_option("--config", gc_config, "Model config file (default: tiny collaborative model)");
  grad->add_flag("--corrupt", corrupt, "Tamper with one analytic gradient (the check must fail)");
  grad->add_option("--epsilon", epsilon, "Central-difference step");
  grad->add_option("--threshold", threshold, "Maximum tolerated relative error");
  grad->add_option("--max-entries", max_entries, "Entries checked per tensor");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, out_dir, out);
    if (*train) return cmd_train(train_config, resume, out);
    if (*eval) return cmd_eval(ckpt, corpus_dir, split, out);
    if (*flops) return cmd_flops(flops_configs, full_scale, frames, out);
    if (*compare)
      return cmd_compare(compare_configs, parse_seed_list(seed_list), compare_corpus, compare_split, compare_frames,
                         out);
    if (*grad) return cmd_grad_check(gc_config, corrupt, epsilon, threshold, max_entries, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace comoe

/* Copyright 2026 The Motion Scaling Lab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end for the study: dataset synthesis, sweep planning and
// execution, open- and closed-loop evaluation, fitting, and report bundles.
// Exit codes: 0 success, 2 configuration error, 3 job failure, 4 fit
// degeneracy.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msl/harness.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 2;
constexpr int kJobFailure = 3;
constexpr int kFitDegeneracy = 4;

msl::StudyConfig load_config(const std::string& path) {
  if (path.empty()) return {};
  return msl::StudyConfig::from_json(msl::Json::parse(msl::read_text_file(path)));
}

std::filesystem::path resolve_store(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("MSL_STORE")) {
    if (*env != '\0') return env;
  }
  throw std::invalid_argument("no run store given: pass --store or set MSL_STORE");
}

std::vector<msl::u64> to_budgets(const std::vector<double>& values) {
  std::vector<msl::u64> out;
  for (double v : values) {
    if (!(v >= 1.0)) throw std::invalid_argument("budgets must be >= 1 FLOP");
    out.push_back(static_cast<msl::u64>(std::llround(v)));
  }
  return out;
}

msl::u64 count_jsonl_rows(const std::string& bytes) {
  msl::u64 rows = 0;
  bool in_line = false;
  for (char c : bytes) {
    if (c == '\n') {
      rows += in_line ? 1 : 0;
      in_line = false;
    } else {
      in_line = true;
    }
  }
  return rows + (in_line ? 1 : 0);
}

// ---------------------------------------------------------------------------
// Verb options

struct SynthArgs {
  std::string config;
  std::string out_dir;
  std::optional<msl::u64> seed;
  std::optional<int> segments;
  std::optional<int> eval_segments;
};

struct PlanArgs {
  std::string config;
  std::string out;
  std::string train;
  std::vector<double> budgets;
  std::optional<int> batch;
  std::vector<msl::u64> seeds;
  std::optional<int> rungs;
  std::optional<double> rel_tol;
};

struct SweepArgs {
  std::string config;
  std::string plan;
  std::string train;
  std::string eval;
  std::string store;
  std::string checkpoint_dir;
  std::optional<int> metric_scenes;
  std::optional<int> metric_samples;
  std::optional<int> metric_clusters;
};

struct EvalArgs {
  std::string config;
  std::string checkpoint;
  std::string data;
  std::string out;
  std::optional<int> scenes;
  std::optional<int> samples;
  std::optional<int> clusters;
  std::optional<double> temperature;
  msl::u64 seed = 7;
};

struct InferArgs {
  std::string config;
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string model_id;
  int scenes = 20;
  std::vector<int> counts = {8, 16, 32, 64, 128, 256, 512, 1024};
  std::optional<int> clusters;
  std::optional<double> temperature;
  msl::u64 seed = 7;
};

struct ClosedArgs {
  std::string config;
  std::vector<std::string> checkpoints;
  std::string out_dir;
  std::string store;  // optional, maps run ids to pretraining compute
  std::optional<int> scenarios;
  std::optional<int> rollouts;
  std::optional<double> alpha;
  bool calibrate = false;
  std::optional<double> finetune_flops;
  msl::u64 seed = 11;
};

struct FitArgs {
  std::string store;
  std::optional<double> rel_tol;
};

struct ReportArgs {
  std::string config;
  std::string store;
  std::string out_dir;
  std::string observed_store;
  std::string eta;
  std::vector<std::string> inference;
  std::optional<double> rel_tol;
};

// ---------------------------------------------------------------------------
// Verb implementations

int cmd_synth(const SynthArgs& a) {
  msl::StudyConfig cfg = load_config(a.config);
  if (a.seed) cfg.world.seed = *a.seed;
  if (a.segments) cfg.world.num_segments = *a.segments;
  if (a.eval_segments) cfg.eval_segments = *a.eval_segments;
  cfg.validate();
  const msl::DatasetSplit ds = msl::make_dataset(cfg);
  const std::filesystem::path out(a.out_dir);
  msl::write_segments_jsonl(out / "segments.jsonl", ds.segments);
  msl::write_examples_jsonl((out / "train.jsonl").string(), ds.train);
  msl::write_examples_jsonl((out / "eval.jsonl").string(), ds.eval);
  std::printf("synth: %zu segments, %zu train examples (%.3f mi), %zu eval examples -> %s\n",
              ds.segments.size(), ds.train.size(), msl::modeled_future_miles(ds.train),
              ds.eval.size(), a.out_dir.c_str());
  return kOk;
}

int cmd_plan(const PlanArgs& a) {
  msl::StudyConfig cfg = load_config(a.config);
  if (!a.budgets.empty()) cfg.budgets = to_budgets(a.budgets);
  if (a.batch) cfg.batch = *a.batch;
  if (!a.seeds.empty()) cfg.seeds = a.seeds;
  if (a.rungs) cfg.ladder_rungs = *a.rungs;
  if (a.rel_tol) cfg.rel_tol = *a.rel_tol;
  cfg.validate();

  msl::PlanOptions opt;
  opt.batch = cfg.batch;
  opt.seeds = cfg.seeds;
  opt.rel_tol = cfg.rel_tol;
  opt.vocab = cfg.vocab;
  opt.t_tokens = cfg.t_tokens;
  const auto family = msl::shape_ladder(cfg.ladder_rungs);
  opt.min_shapes = std::min<int>(opt.min_shapes, static_cast<int>(family.size()));
  msl::u64 examples = 0;
  if (!a.train.empty()) {
    const std::string bytes = msl::read_text_file(a.train);
    opt.dataset_ref = msl::hash_hex(bytes);
    examples = count_jsonl_rows(bytes);
  }
  const msl::SweepPlan plan = msl::plan_sweep(cfg.budgets, family, examples, opt);
  msl::write_text_file(a.out, plan.to_json().dump(2) + "\n");
  for (const msl::SweepJob& job : plan.jobs) {
    std::printf("plan: %-28s budget=%llu steps=%lld examples=%llu%s\n", job.run_id.c_str(),
                static_cast<unsigned long long>(job.budget), static_cast<long long>(job.steps),
                static_cast<unsigned long long>(job.examples()),
                job.epoch_reuse ? " (epoch reuse)" : "");
  }
  std::printf("plan: %zu jobs -> %s\n", plan.jobs.size(), a.out.c_str());
  return kOk;
}

int cmd_sweep(const SweepArgs& a) {
  msl::StudyConfig cfg = load_config(a.config);
  if (a.metric_scenes) cfg.metric_scenes = *a.metric_scenes;
  if (a.metric_samples) cfg.metric_samples = *a.metric_samples;
  if (a.metric_clusters) cfg.metric_clusters = *a.metric_clusters;

  const msl::SweepPlan plan =
      msl::SweepPlan::from_json(msl::Json::parse(msl::read_text_file(a.plan)));
  const std::vector<msl::Example> train_set = msl::read_examples_jsonl(a.train);
  const std::vector<msl::Example> eval_set =
      a.eval.empty() ? std::vector<msl::Example>{} : msl::read_examples_jsonl(a.eval);
  const std::filesystem::path store = resolve_store(a.store);

  msl::SweepRunOptions opt;
  opt.metrics.scenes = cfg.metric_scenes;
  opt.metrics.samples = cfg.metric_samples;
  opt.metrics.clusters = cfg.metric_clusters;
  opt.metrics.temperature = cfg.temperature;
  if (!a.checkpoint_dir.empty()) opt.checkpoint_dir = a.checkpoint_dir;

  const msl::SweepOutcome out = msl::run_sweep(plan, train_set, eval_set, store, opt);
  std::printf("sweep: %d executed, %d skipped, %d failed; %zu records in %s\n", out.executed,
              out.skipped, out.failed, out.records.size(), store.string().c_str());
  return out.failed > 0 ? kJobFailure : kOk;
}

int cmd_eval(const EvalArgs& a) {
  msl::StudyConfig cfg = load_config(a.config);
  msl::JointModel model = msl::load_checkpoint(a.checkpoint);
  const std::vector<msl::Example> examples = msl::read_examples_jsonl(a.data);
  msl::MetricOptions opt;
  opt.scenes = a.scenes ? *a.scenes : static_cast<int>(examples.size());
  opt.samples = a.samples ? *a.samples : cfg.metric_samples;
  opt.clusters = a.clusters ? *a.clusters : cfg.metric_clusters;
  opt.temperature = a.temperature ? *a.temperature : cfg.temperature;
  const auto metrics = msl::open_loop_metrics(model, examples, opt, a.seed);
  msl::Json j;
  for (const auto& [k, v] : metrics) j[k] = msl::round6(v);
  std::printf("%s\n", j.dump(2).c_str());
  if (!a.out.empty()) {
    msl::CsvWriter csv({"metric", "value"});
    for (const auto& [k, v] : metrics) csv.append_row({k, msl::format_number(v)});
    csv.save(a.out);
  }
  return kOk;
}

int cmd_inference(const InferArgs& a) {
  msl::StudyConfig cfg = load_config(a.config);
  msl::JointModel model = msl::load_checkpoint(a.checkpoint);
  std::vector<msl::Example> examples = msl::read_examples_jsonl(a.data);
  const size_t scenes = std::min<size_t>(static_cast<size_t>(a.scenes), examples.size());
  if (scenes == 0) throw std::invalid_argument("inference-sweep: no evaluation scenes");
  int max_count = 0;
  for (int c : a.counts) max_count = std::max(max_count, c);
  const double temperature = a.temperature ? *a.temperature : cfg.temperature;
  const auto rollouts = msl::collect_scene_rollouts(
      model, std::span<const msl::Example>(examples).first(scenes), max_count, temperature,
      a.seed);
  const std::string model_id =
      a.model_id.empty() ? std::filesystem::path(a.checkpoint).filename().string() : a.model_id;
  const double horizon_s = model.config().t_tokens * model.config().vocab.token_dt;
  const msl::InferenceSweepTable table = msl::inference_sweep_from_rollouts(
      rollouts, model.config().shape, model_id, a.counts,
      a.clusters ? *a.clusters : cfg.metric_clusters, horizon_s, msl::MissThresholds{});
  msl::write_text_file(a.out, msl::sweep_table_csv(table));
  std::printf("inference-sweep: %zu counts over %zu scenes -> %s\n", table.rows.size(), scenes,
              a.out.c_str());
  return kOk;
}

int cmd_closedloop(const ClosedArgs& a) {
  msl::StudyConfig cfg = load_config(a.config);
  if (a.scenarios) cfg.scenarios = *a.scenarios;
  if (a.rollouts) cfg.rollouts = *a.rollouts;
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.finetune_flops) cfg.finetune_flops = static_cast<msl::u64>(*a.finetune_flops);
  cfg.validate();

  std::map<std::string, msl::u64> compute_by_run;
  if (!a.store.empty()) {
    for (const msl::RunRecord& r : msl::store_records(msl::read_store(a.store))) {
      compute_by_run[r.run_id] = r.C;
    }
  }

  const std::vector<msl::Scenario> scenarios = msl::make_scenarios(cfg.world, cfg.scenarios);
  std::vector<msl::Example> route_dataset;

  const std::filesystem::path out(a.out_dir);
  std::filesystem::create_directories(out);
  std::deque<msl::JointModel> planners;
  std::deque<msl::PlannerPolicy> policies;
  std::vector<msl::EtaRow> rows;
  for (const std::string& stem : a.checkpoints) {
    const std::string model_id = std::filesystem::path(stem).filename().string();
    msl::JointModel base = msl::load_checkpoint(stem);
    msl::u64 compute = 0;
    if (auto it = compute_by_run.find(model_id); it != compute_by_run.end()) {
      compute = it->second;
    }
    if (base.config().num_modeled == 1) {
      planners.push_back(std::move(base));
    } else {
      if (cfg.finetune_flops == 0) {
        throw std::invalid_argument("closedloop: checkpoint " + model_id +
                                    " models several agents; set finetune_flops");
      }
      if (route_dataset.empty()) {
        msl::WindowParams wp;
        wp.include_route = true;
        for (const msl::Segment& seg : msl::generate_world(cfg.world)) {
          auto windows = msl::window_examples(seg, cfg.vocab, 1, wp);
          route_dataset.insert(route_dataset.end(), windows.begin(), windows.end());
        }
      }
      msl::TrainConfig ft;
      ft.batch_examples = cfg.batch;
      ft.seed = a.seed;
      planners.push_back(
          msl::finetune_planner(base, route_dataset, {}, cfg.finetune_flops, ft).planner);
    }
    policies.emplace_back(&planners.back(), cfg.temperature);

    double alpha = cfg.alpha;
    if (a.calibrate) {
      msl::CalibrationOptions copt;
      copt.alpha0 = cfg.alpha;
      const msl::CalibrationResult cal =
          msl::calibrate_alpha(policies.back(), scenarios, cfg.rollouts, a.seed, copt);
      alpha = cal.alpha;
      std::printf("closedloop: %s alpha=%.4f ratio=%.4f %s (%d evals)\n", model_id.c_str(),
                  cal.alpha, cal.ratio, cal.calibrated ? "calibrated" : "uncalibrated",
                  cal.evals);
    }
    const msl::FailureReport rep =
        msl::run_scenarios(policies.back(), scenarios, cfg.rollouts, alpha, a.seed);
    msl::write_outcomes_jsonl(out / (model_id + "_outcomes.jsonl"), model_id, scenarios, rep);
    rows.push_back({model_id, compute, alpha, rep.eta(), rep.ratio()});
    std::printf("closedloop: %s eta=%d/%d ratio=%.3f\n", model_id.c_str(), rep.eta(),
                rep.total(), rep.ratio());
  }
  msl::write_eta_csv(out / "eta.csv", rows);
  std::printf("closedloop: %zu models -> %s\n", rows.size(), a.out_dir.c_str());
  return kOk;
}

int cmd_fit(const FitArgs& a) {
  const std::filesystem::path store = resolve_store(a.store);
  const std::vector<msl::RunRecord> records = msl::store_records(msl::read_store(store));
  if (records.empty()) throw std::invalid_argument("fit: store has no successful runs");
  const double rel_tol = a.rel_tol ? *a.rel_tol : 0.35;
  const std::vector<msl::u64> budgets = msl::detail::derive_budgets(records);
  const msl::BandingResult banding = msl::band_runs(records, budgets, rel_tol);

  msl::Json j;
  int code = kOk;
  try {
    const msl::ScalingSummary sc = msl::optimal_scaling(banding);
    j["optimal_scaling"] = {{"usable_bands", sc.usable_bands},
                            {"model_size_fit", sc.n_opt_fit.to_json()},
                            {"data_size_fit", sc.d_opt_fit.to_json()},
                            {"loss_fit_power", sc.l_opt_fit_power.to_json()},
                            {"loss_fit_power_const", sc.l_opt_fit_power_const.to_json()}};
  } catch (const std::exception& e) {
    j["optimal_scaling"] = {{"error", e.what()}};
    code = kFitDegeneracy;
  }
  try {
    j["surface"] = msl::fit_surface(records).to_json();
  } catch (const std::exception& e) {
    j["surface"] = {{"error", e.what()}};
  }
  std::printf("%s\n", j.dump(2).c_str());
  return code;
}

int cmd_report(const ReportArgs& a) {
  msl::StudyConfig cfg = load_config(a.config);
  msl::ReportInputs in;
  const std::filesystem::path store = resolve_store(a.store);
  in.records = msl::store_records(msl::read_store(store));
  if (in.records.empty()) throw std::invalid_argument("report: store has no successful runs");
  if (a.rel_tol) in.rel_tol = *a.rel_tol;
  if (!a.observed_store.empty()) {
    in.observed_records = msl::store_records(msl::read_store(a.observed_store));
  }
  if (!a.eta.empty()) in.eta_rows = msl::read_eta_csv(a.eta);
  for (const std::string& path : a.inference) {
    for (auto& table : msl::read_inference_csv(path)) in.inference.push_back(std::move(table));
  }
  in.config_hash = cfg.hash();
  const msl::ReportBundle bundle = msl::build_report(in);
  msl::write_report(bundle, a.out_dir);
  std::printf("report: %zu csv files + summary.json -> %s\n", bundle.csv_files.size(),
              a.out_dir.c_str());
  return bundle.scaling_available ? kOk : kFitDegeneracy;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale scaling study for joint motion forecasting"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", synth_args.config, "study config JSON");
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();
  synth->add_option("--seed", synth_args.seed, "world seed override");
  synth->add_option("--segments", synth_args.segments, "segment count override");
  synth->add_option("--eval-segments", synth_args.eval_segments, "held-out segment count");

  PlanArgs plan_args;
  CLI::App* plan = app.add_subcommand("plan", "plan an iso-FLOP training sweep");
  plan->add_option("--config", plan_args.config, "study config JSON");
  plan->add_option("--out", plan_args.out, "plan JSON path")->required();
  plan->add_option("--train", plan_args.train, "training examples JSONL (sizes the dataset)");
  plan->add_option("--budgets", plan_args.budgets, "FLOPs targets (ascending)")->delimiter(',');
  plan->add_option("--batch", plan_args.batch, "examples per step");
  plan->add_option("--seeds", plan_args.seeds, "training seeds")->delimiter(',');
  plan->add_option("--rungs", plan_args.rungs, "shape ladder rungs");
  plan->add_option("--rel-tol", plan_args.rel_tol, "band membership tolerance");

  SweepArgs sweep_args;
  CLI::App* sweep = app.add_subcommand("sweep", "run a planned training sweep");
  sweep->add_option("--config", sweep_args.config, "study config JSON");
  sweep->add_option("--plan", sweep_args.plan, "plan JSON path")->required();
  sweep->add_option("--train", sweep_args.train, "training examples JSONL")->required();
  sweep->add_option("--eval", sweep_args.eval, "evaluation examples JSONL");
  sweep->add_option("--store", sweep_args.store, "run store JSONL (or MSL_STORE)");
  sweep->add_option("--checkpoint-dir", sweep_args.checkpoint_dir, "save model checkpoints here");
  sweep->add_option("--metric-scenes", sweep_args.metric_scenes, "scenes for open-loop metrics");
  sweep->add_option("--metric-samples", sweep_args.metric_samples, "rollouts per metric scene");
  sweep->add_option("--metric-clusters", sweep_args.metric_clusters, "clusters per forecast");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "open-loop metrics for one checkpoint");
  eval->add_option("--config", eval_args.config, "study config JSON");
  eval->add_option("--checkpoint", eval_args.checkpoint, "checkpoint stem")->required();
  eval->add_option("--data", eval_args.data, "examples JSONL")->required();
  eval->add_option("--out", eval_args.out, "metrics CSV path");
  eval->add_option("--scenes", eval_args.scenes, "scene count (default: all)");
  eval->add_option("--samples", eval_args.samples, "rollouts per scene");
  eval->add_option("--clusters", eval_args.clusters, "clusters per forecast");
  eval->add_option("--temperature", eval_args.temperature, "sampling temperature");
  eval->add_option("--seed", eval_args.seed, "sampling seed");

  InferArgs infer_args;
  CLI::App* infer = app.add_subcommand("inference-sweep", "metrics vs sample count");
  infer->add_option("--config", infer_args.config, "study config JSON");
  infer->add_option("--checkpoint", infer_args.checkpoint, "checkpoint stem")->required();
  infer->add_option("--data", infer_args.data, "examples JSONL")->required();
  infer->add_option("--out", infer_args.out, "sweep table CSV path")->required();
  infer->add_option("--model-id", infer_args.model_id, "row label (default: checkpoint name)");
  infer->add_option("--scenes", infer_args.scenes, "scene count");
  infer->add_option("--counts", infer_args.counts, "rollout counts")->delimiter(',');
  infer->add_option("--clusters", infer_args.clusters, "clusters per forecast");
  infer->add_option("--temperature", infer_args.temperature, "sampling temperature");
  infer->add_option("--seed", infer_args.seed, "sampling seed");

  ClosedArgs closed_args;
  CLI::App* closed = app.add_subcommand("closedloop", "closed-loop failure counts");
  closed->add_option("--config", closed_args.config, "study config JSON");
  closed->add_option("--checkpoint", closed_args.checkpoints, "checkpoint stems")
      ->delimiter(',')
      ->required();
  closed->add_option("--out-dir", closed_args.out_dir, "output directory")->required();
  closed->add_option("--store", closed_args.store, "run store for compute lookup");
  closed->add_option("--scenarios", closed_args.scenarios, "scenario count");
  closed->add_option("--rollouts", closed_args.rollouts, "rollouts per replan");
  closed->add_option("--alpha", closed_args.alpha, "progress bias");
  closed->add_flag("--calibrate", closed_args.calibrate, "calibrate alpha per model");
  closed->add_option("--finetune-flops", closed_args.finetune_flops,
                     "budget for planner fine-tuning of joint checkpoints");
  closed->add_option("--seed", closed_args.seed, "simulation seed");

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "print scaling fits for a run store");
  fit->add_option("--store", fit_args.store, "run store JSONL (or MSL_STORE)");
  fit->add_option("--rel-tol", fit_args.rel_tol, "band membership tolerance");

  ReportArgs report_args;
  CLI::App* report = app.add_subcommand("report", "write the full report bundle");
  report->add_option("--config", report_args.config, "study config JSON");
  report->add_option("--store", report_args.store, "run store JSONL (or MSL_STORE)");
  report->add_option("--out", report_args.out_dir, "report directory")->required();
  report->add_option("--observed-store", report_args.observed_store,
                     "store of runs trained without the ego agent");
  report->add_option("--eta", report_args.eta, "closed-loop eta CSV");
  report->add_option("--inference", report_args.inference, "inference sweep CSVs")->delimiter(',');
  report->add_option("--rel-tol", report_args.rel_tol, "band membership tolerance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (plan->parsed()) return cmd_plan(plan_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (infer->parsed()) return cmd_inference(infer_args);
    if (closed->parsed()) return cmd_closedloop(closed_args);
    if (fit->parsed()) return cmd_fit(fit_args);
    if (report->parsed()) return cmd_report(report_args);
  } catch (const msl::Json::exception& e) {
    std::fprintf(stderr, "msl_lab: config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "msl_lab: config error: %s\n", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "msl_lab: job failure: %s\n", e.what());
    return kJobFailure;
  }
  return kConfigError;
}

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

// Study orchestration: iso-FLOP sweep planning, resumable training sweeps over
// an append-only JSONL store, model-level metric evaluation, and the report
// bundle that assembles every fit into fixed-format CSVs plus a JSON summary.

#ifndef MSL_HARNESS_HPP_
#define MSL_HARNESS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "msl/closedloop.hpp"
#include "msl/fit.hpp"
#include "msl/sweep.hpp"
#include "msl/train.hpp"

namespace msl {

// ---------------------------------------------------------------------------
// Shape family

// Ladder of encoder-decoder shapes with equal encoder and decoder depth and a
// width-to-depth ratio of 8 or 16, sorted by parameter count. Widths are
// multiples of 16, so the head count d/16 always divides d.
inline std::vector<ModelShape> shape_ladder(int rungs, i64 E = kSceneTokens, i64 D_q = 176) {
  if (rungs < 1) throw std::invalid_argument("shape_ladder: rungs must be >= 1");
  std::vector<ModelShape> out;
  for (int k = 1; k <= rungs; ++k) {
    for (i64 ratio : {i64{8}, i64{16}}) {
      ModelShape s;
      s.n = k;
      s.m = k;
      s.d = ratio * 2 * k;
      s.E = E;
      s.D_q = D_q;
      s.validate();
      out.push_back(s);
    }
  }
  std::sort(out.begin(), out.end(), [](const ModelShape& a, const ModelShape& b) {
    if (param_count(a) != param_count(b)) return param_count(a) < param_count(b);
    return a.d < b.d;
  });
  return out;
}

inline std::vector<u64> default_budgets() {
  return {100'000'000'000ull, 200'000'000'000ull, 400'000'000'000ull};
}

// ---------------------------------------------------------------------------
// Sweep plan

struct SweepJob {
  i64 budget_index = 0;
  u64 budget = 0;  // FLOPs target for this slot
  ModelShape shape;
  i64 steps = 0;
  int batch = 32;
  u64 seed = 0;
  bool epoch_reuse = false;  // consumed examples exceed the dataset
  std::string run_id;

  u64 examples() const { return u64(steps) * u64(batch); }
  u64 flops() const { return train_flops(shape, examples()); }

  Json to_json() const {
    Json j;
    j["budget_index"] = budget_index;
    j["budget"] = budget;
    j["shape"] = {{"n", shape.n}, {"m", shape.m},   {"d", shape.d},
                  {"E", shape.E}, {"D_q", shape.D_q}};
    j["steps"] = steps;
    j["batch"] = batch;
    j["seed"] = seed;
    j["epoch_reuse"] = epoch_reuse;
    j["run_id"] = run_id;
    return j;
  }

  static SweepJob from_json(const Json& j) {
    SweepJob job;
    job.budget_index = j.at("budget_index").get<i64>();
    job.budget = j.at("budget").get<u64>();
    const Json& s = j.at("shape");
    job.shape.n = s.at("n").get<i64>();
    job.shape.m = s.at("m").get<i64>();
    job.shape.d = s.at("d").get<i64>();
    job.shape.E = s.at("E").get<i64>();
    job.shape.D_q = s.at("D_q").get<i64>();
    job.steps = j.at("steps").get<i64>();
    job.batch = j.at("batch").get<int>();
    job.seed = j.at("seed").get<u64>();
    job.epoch_reuse = j.at("epoch_reuse").get<bool>();
    job.run_id = j.at("run_id").get<std::string>();
    return job;
  }
};

struct SweepPlan {
  std::vector<u64> budgets;  // ascending FLOPs targets
  TokenVocab vocab;
  std::string dataset_ref;  // content hash or label of the training data
  i64 dataset_examples = 0;  // 0 when unknown
  int t_tokens = 22;
  std::vector<u64> seeds;
  double rel_tol = 0.25;
  std::vector<SweepJob> jobs;

  // Band membership must mirror band_runs: each job's realized compute lands
  // within log(1 + rel_tol) of its own budget, and that budget is the nearest.
  void validate() const {
    if (budgets.empty()) throw std::invalid_argument("SweepPlan: no budgets");
    for (size_t i = 1; i < budgets.size(); ++i) {
      if (!(budgets[i - 1] < budgets[i])) {
        throw std::invalid_argument("SweepPlan: budgets must be strictly ascending");
      }
    }
    vocab.validate();
    if (t_tokens < 1) throw std::invalid_argument("SweepPlan: t_tokens must be >= 1");
    if (jobs.empty()) throw std::invalid_argument("SweepPlan: no jobs");
    if (!(rel_tol >= 0.0)) throw std::invalid_argument("SweepPlan: rel_tol must be >= 0");
    const double max_gap = std::log1p(rel_tol);
    for (const SweepJob& job : jobs) {
      job.shape.validate();
      if (job.shape.D_q % t_tokens != 0) {
        throw std::invalid_argument("SweepPlan: D_q must be a multiple of t_tokens");
      }
      if (job.steps < 1) throw std::invalid_argument("SweepPlan: steps must be >= 1");
      if (job.batch < 1) throw std::invalid_argument("SweepPlan: batch must be >= 1");
      if (job.budget_index < 0 || job.budget_index >= i64(budgets.size())) {
        throw std::invalid_argument("SweepPlan: budget_index out of range");
      }
      if (job.budget != budgets[size_t(job.budget_index)]) {
        throw std::invalid_argument("SweepPlan: job budget does not match its slot");
      }
      const double logc = std::log(double(job.flops()));
      const double own_gap = std::abs(logc - std::log(double(job.budget)));
      if (own_gap > max_gap + 1e-12) {
        throw std::invalid_argument("SweepPlan: job outside its iso-FLOP band: " + job.run_id);
      }
      for (u64 b : budgets) {
        if (std::abs(logc - std::log(double(b))) < own_gap - 1e-12) {
          throw std::invalid_argument("SweepPlan: job nearer a foreign budget: " + job.run_id);
        }
      }
    }
  }

  Json to_json() const {
    Json j;
    j["budgets"] = budgets;
    j["vocab"] = {{"bins_per_axis", vocab.bins_per_axis},
                  {"delta_max", vocab.delta_max},
                  {"token_dt", vocab.token_dt}};
    j["dataset_ref"] = dataset_ref;
    j["dataset_examples"] = dataset_examples;
    j["t_tokens"] = t_tokens;
    j["seeds"] = seeds;
    j["rel_tol"] = rel_tol;
    Json rows = Json::array();
    for (const SweepJob& job : jobs) rows.push_back(job.to_json());
    j["jobs"] = rows;
    return j;
  }

  static SweepPlan from_json(const Json& j) {
    SweepPlan plan;
    plan.budgets = j.at("budgets").get<std::vector<u64>>();
    const Json& v = j.at("vocab");
    plan.vocab.bins_per_axis = v.at("bins_per_axis").get<int>();
    plan.vocab.delta_max = v.at("delta_max").get<double>();
    plan.vocab.token_dt = v.at("token_dt").get<double>();
    plan.dataset_ref = j.at("dataset_ref").get<std::string>();
    plan.dataset_examples = j.value("dataset_examples", i64{0});
    plan.t_tokens = j.at("t_tokens").get<int>();
    plan.seeds = j.at("seeds").get<std::vector<u64>>();
    plan.rel_tol = j.at("rel_tol").get<double>();
    for (const Json& row : j.at("jobs")) plan.jobs.push_back(SweepJob::from_json(row));
    plan.validate();
    return plan;
  }
};

struct PlanOptions {
  int batch = 32;
  std::vector<u64> seeds = {1};
  double rel_tol = 0.25;
  int min_shapes = 4;  // shapes that must land inside each band
  TokenVocab vocab;
  int t_tokens = 22;
  std::string dataset_ref = "unspecified";
};

// For each budget, every family shape gets steps = budget / (fpe * batch)
// (integer division keeps realized compute at or below the target). Shapes
// whose rounding falls outside the band are dropped; a budget keeping fewer
// than min_shapes shapes is infeasible. Jobs that would consume more examples
// than the dataset holds are flagged for epoch reuse rather than rejected,
// since desk-scale budgets always revisit the training set.
inline SweepPlan plan_sweep(std::span<const u64> budgets, std::span<const ModelShape> family,
                            u64 dataset_examples, const PlanOptions& opt = {}) {
  if (budgets.empty()) throw std::invalid_argument("plan_sweep: no budgets");
  if (family.empty()) throw std::invalid_argument("plan_sweep: empty shape family");
  if (opt.seeds.empty()) throw std::invalid_argument("plan_sweep: no seeds");
  if (opt.batch < 1) throw std::invalid_argument("plan_sweep: batch must be >= 1");
  SweepPlan plan;
  plan.budgets.assign(budgets.begin(), budgets.end());
  plan.vocab = opt.vocab;
  plan.dataset_ref = opt.dataset_ref;
  plan.dataset_examples = i64(dataset_examples);
  plan.t_tokens = opt.t_tokens;
  plan.seeds = opt.seeds;
  plan.rel_tol = opt.rel_tol;
  const double max_gap = std::log1p(opt.rel_tol);
  for (size_t bi = 0; bi < budgets.size(); ++bi) {
    const u64 budget = budgets[bi];
    int kept = 0;
    for (const ModelShape& shape : family) {
      const u64 per_step = train_flops(shape, u64(opt.batch));
      const i64 steps = i64(budget / per_step);
      if (steps < 1) continue;
      const u64 realized = per_step * u64(steps);
      if (std::abs(std::log(double(realized)) - std::log(double(budget))) > max_gap) continue;
      ++kept;
      for (u64 seed : opt.seeds) {
        SweepJob job;
        job.budget_index = i64(bi);
        job.budget = budget;
        job.shape = shape;
        job.steps = steps;
        job.batch = opt.batch;
        job.seed = seed;
        job.epoch_reuse = dataset_examples == 0 || job.examples() > dataset_examples;
        TrainConfig cfg;
        cfg.shape = shape;
        cfg.batch_examples = opt.batch;
        cfg.total_steps = steps;
        cfg.warmup_steps = 0;  // placeholder, run_id does not encode warmup
        cfg.seed = seed;
        job.run_id = "c" + std::to_string(bi) + "_" + default_run_id(cfg);
        plan.jobs.push_back(std::move(job));
      }
    }
    if (kept < opt.min_shapes) {
      throw std::invalid_argument("plan_sweep: budget " + std::to_string(budget) + " keeps " +
                                  std::to_string(kept) + " shapes, need " +
                                  std::to_string(opt.min_shapes));
    }
  }
  plan.validate();
  return plan;
}

inline ModelConfig job_model_config(const SweepPlan& plan, const SweepJob& job) {
  ModelConfig mc;
  mc.shape = job.shape;
  mc.vocab = plan.vocab;
  mc.t_tokens = plan.t_tokens;
  mc.num_modeled = int(job.shape.D_q / plan.t_tokens);
  mc.with_route = job.shape.E == kSceneTokensWithRoute;
  mc.validate();
  return mc;
}

// ---------------------------------------------------------------------------
// Run store: append-only JSONL, one row per finished or failed job

struct StoreRow {
  std::string job_hash;
  std::string run_id;
  std::optional<RunRecord> record;  // present on success
  std::string error;                // diagnostic on failure
};

// Content identity of a job: everything that determines the trained weights
// and the evaluation, nothing that is mere labeling (slot index, run id).
inline std::string job_hash(const SweepPlan& plan, const SweepJob& job) {
  Json j;
  j["shape"] = {{"n", job.shape.n}, {"m", job.shape.m},   {"d", job.shape.d},
                {"E", job.shape.E}, {"D_q", job.shape.D_q}};
  j["steps"] = job.steps;
  j["batch"] = job.batch;
  j["seed"] = job.seed;
  j["vocab"] = {{"bins_per_axis", plan.vocab.bins_per_axis},
                {"delta_max", plan.vocab.delta_max},
                {"token_dt", plan.vocab.token_dt}};
  j["t_tokens"] = plan.t_tokens;
  j["dataset_ref"] = plan.dataset_ref;
  return hash_hex(j.dump());
}

inline std::vector<StoreRow> read_store(const std::filesystem::path& path) {
  std::vector<StoreRow> rows;
  if (!std::filesystem::exists(path)) return rows;
  for_each_jsonl(path, [&rows](const Json& j) {
    StoreRow row;
    row.job_hash = j.at("job_hash").get<std::string>();
    row.run_id = j.at("run_id").get<std::string>();
    const std::string kind = j.value("kind", std::string("run"));
    if (kind == "run") {
      row.record = RunRecord::from_json(j.at("record"));
    } else if (kind == "error") {
      row.error = j.at("error").get<std::string>();
    } else {
      throw std::runtime_error("store: unknown row kind: " + kind);
    }
    rows.push_back(std::move(row));
  });
  return rows;
}

inline std::vector<RunRecord> store_records(const std::vector<StoreRow>& rows) {
  std::vector<RunRecord> out;
  for (const StoreRow& row : rows) {
    if (row.record) out.push_back(*row.record);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Open-loop metric evaluation on a trained model

struct MetricOptions {
  int scenes = 0;  // evaluation examples to roll out; 0 disables metrics
  int samples = 16;
  int clusters = 6;
  double temperature = 1.0;
  MissThresholds thresholds;
};

// Joint rollouts for each scene; tracks keep future points only so forecast
// and ground-truth horizons match. Scene i uses stream mix_seed(seed, i).
inline std::vector<SceneRollouts> collect_scene_rollouts(JointModel& model,
                                                         std::span<const Example> examples,
                                                         int samples, double temperature,
                                                         u64 seed) {
  if (examples.empty()) throw std::invalid_argument("collect_scene_rollouts: no examples");
  std::vector<SceneRollouts> out;
  out.reserve(examples.size());
  for (size_t i = 0; i < examples.size(); ++i) {
    const Example& ex = examples[i];
    const auto rolls = model.sample_rollouts(ex, samples, temperature, mix_seed(seed, u64(i), 0xE7));
    SceneRollouts sr;
    sr.rollouts.reserve(rolls.size());
    for (const JointRollout& jr : rolls) {
      std::vector<std::vector<Vec2>> agents;
      agents.reserve(jr.decoded.size());
      for (const auto& track : jr.decoded) {
        agents.emplace_back(track.begin() + 2, track.end());
      }
      sr.rollouts.push_back(std::move(agents));
    }
    for (int a : ex.context.modeled) {
      const AgentTarget& tgt = ex.target_for(a);
      sr.gt.emplace_back(tgt.track.begin() + 2, tgt.track.end());
      sr.speeds_mps.push_back(tgt.speed_mps);
    }
    sr.validate();
    out.push_back(std::move(sr));
  }
  return out;
}

inline std::map<std::string, double> open_loop_metrics(JointModel& model,
                                                       std::span<const Example> examples,
                                                       const MetricOptions& opt, u64 seed) {
  const size_t scenes = std::min<size_t>(size_t(opt.scenes), examples.size());
  if (scenes == 0) return {};
  const auto rollouts =
      collect_scene_rollouts(model, examples.first(scenes), opt.samples, opt.temperature, seed);
  const double horizon_s = model.config().t_tokens * model.config().vocab.token_dt;
  const double radius = opt.thresholds.lateral(horizon_s, opt.thresholds.high_speed_mps);
  const InferenceSweepRow row = eval_rollout_prefix(rollouts, opt.samples, opt.clusters,
                                                    horizon_s, opt.thresholds, radius);
  return {{"min_ade", row.min_ade},
          {"w_ade", row.w_ade},
          {"min_fde", row.min_fde},
          {"miss_rate", row.miss_rate},
          {"mean_ap", row.mean_ap}};
}

// ---------------------------------------------------------------------------
// Sweep execution

struct SweepRunOptions {
  MetricOptions metrics;                 // scenes = 0 keeps the sweep loss-only
  std::filesystem::path checkpoint_dir;  // empty skips checkpointing
  u64 metric_seed = 0xE7A1;
};

struct SweepOutcome {
  int executed = 0;  // jobs trained by this invocation
  int skipped = 0;   // jobs already in the store
  int failed = 0;    // jobs that errored in this invocation
  std::vector<RunRecord> records;  // all successful records after the run
};

// Jobs run sequentially in plan order; completed hashes resume for free and
// failures append a diagnostic row without stopping the sweep. Store bytes are
// therefore a pure function of (plan, datasets) on a clean run.
inline SweepOutcome run_sweep(const SweepPlan& plan, const std::vector<Example>& train_set,
                              const std::vector<Example>& eval_set,
                              const std::filesystem::path& store_path,
                              const SweepRunOptions& opt = {}) {
  plan.validate();
  if (train_set.empty()) throw std::invalid_argument("run_sweep: empty training set");
  std::set<std::string> done;
  for (const StoreRow& row : read_store(store_path)) {
    if (row.record) done.insert(row.job_hash);
  }
  SweepOutcome out;
  for (const SweepJob& job : plan.jobs) {
    const std::string hash = job_hash(plan, job);
    if (done.count(hash)) {
      ++out.skipped;
      continue;
    }
    try {
      const ModelConfig mc = job_model_config(plan, job);
      JointModel model(mc, job.seed);
      TrainConfig cfg;
      cfg.shape = job.shape;
      cfg.batch_examples = job.batch;
      cfg.total_steps = job.steps;
      cfg.warmup_steps = std::min<i64>(100, job.steps - 1);
      cfg.seed = job.seed;
      TrainResult tr = train(model, train_set, eval_set, cfg, job.run_id);
      tr.record.budget_index = job.budget_index;
      if (opt.metrics.scenes > 0) {
        const auto& pool = eval_set.empty() ? train_set : eval_set;
        tr.record.metrics = open_loop_metrics(model, pool, opt.metrics,
                                              mix_seed(opt.metric_seed, job.seed, 0x3E));
      }
      tr.record.validate();
      if (!opt.checkpoint_dir.empty()) {
        std::filesystem::create_directories(opt.checkpoint_dir);
        model.save((opt.checkpoint_dir / job.run_id).string(), job.steps, job.seed);
      }
      Json row;
      row["kind"] = "run";
      row["job_hash"] = hash;
      row["run_id"] = job.run_id;
      row["record"] = tr.record.to_json();
      append_jsonl(store_path, row);
      done.insert(hash);
      ++out.executed;
    } catch (const std::exception& e) {
      Json row;
      row["kind"] = "error";
      row["job_hash"] = hash;
      row["run_id"] = job.run_id;
      row["error"] = e.what();
      append_jsonl(store_path, row);
      ++out.failed;
    }
  }
  out.records = store_records(read_store(store_path));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint loading

inline JointModel load_checkpoint(const std::string& stem) {
  const Json manifest = Json::parse(read_text_file(stem + ".json"));
  ModelConfig mc;
  const Json& s = manifest.at("shape");
  mc.shape.n = s.at("n").get<i64>();
  mc.shape.m = s.at("m").get<i64>();
  mc.shape.d = s.at("d").get<i64>();
  mc.shape.E = s.at("E").get<i64>();
  mc.shape.D_q = s.at("D_q").get<i64>();
  const Json& v = manifest.at("vocab");
  mc.vocab.bins_per_axis = v.at("bins_per_axis").get<int>();
  mc.vocab.delta_max = v.at("delta_max").get<double>();
  mc.vocab.token_dt = v.at("token_dt").get<double>();
  mc.num_modeled = manifest.at("num_modeled").get<int>();
  mc.t_tokens = manifest.at("t_tokens").get<int>();
  mc.with_route = manifest.at("with_route").get<bool>();
  JointModel model(mc, manifest.at("seed").get<u64>());
  model.load(stem);
  return model;
}

// ---------------------------------------------------------------------------
// Report bundle

struct ReportInputs {
  std::vector<RunRecord> records;  // main store (demonstrated data, AV modeled)
  std::vector<u64> budgets;        // band targets; empty derives them from slots
  double rel_tol = 0.35;
  std::vector<RunRecord> observed_records;  // optional AV-excluded training runs
  std::vector<EtaRow> eta_rows;             // optional closed-loop results
  std::vector<InferenceSweepTable> inference;  // optional inference sweeps
  std::string config_hash;
};

struct ReportBundle {
  Json summary;
  std::map<std::string, std::string> csv_files;  // file name -> contents
  bool scaling_available = false;
};

namespace detail {

// Budget targets from the records themselves: one per sweep slot (realized
// compute is at most the target, so the slot maximum is the best stand-in),
// falling back to distinct compute values for slotless stores.
inline std::vector<u64> derive_budgets(std::span<const RunRecord> records) {
  std::map<i64, u64> slots;
  std::set<u64> loose;
  for (const RunRecord& r : records) {
    if (r.budget_index >= 0) {
      slots[r.budget_index] = std::max(slots[r.budget_index], r.C);
    } else {
      loose.insert(r.C);
    }
  }
  std::vector<u64> budgets;
  if (!slots.empty()) {
    for (const auto& [idx, c] : slots) budgets.push_back(c);
  } else {
    budgets.assign(loose.begin(), loose.end());
  }
  std::sort(budgets.begin(), budgets.end());
  budgets.erase(std::unique(budgets.begin(), budgets.end()), budgets.end());
  return budgets;
}

// Loss-minimizing run per band, ties broken by run id for stable output.
inline std::vector<RunRecord> frontier_runs(const BandingResult& banding) {
  std::vector<RunRecord> out;
  for (const IsoFlopBand& band : banding.bands) {
    const RunRecord* best = nullptr;
    for (const RunRecord& r : band.runs) {
      if (best == nullptr || r.eval_loss < best->eval_loss ||
          (r.eval_loss == best->eval_loss && r.run_id < best->run_id)) {
        best = &r;
      }
    }
    if (best != nullptr) out.push_back(*best);
  }
  return out;
}

inline std::vector<double> log_grid(double lo, double hi, int points) {
  std::vector<double> xs;
  if (!(lo > 0.0) || !(hi >= lo) || points < 2) return xs;
  xs.reserve(points);
  for (int i = 0; i < points; ++i) {
    xs.push_back(std::exp(std::log(lo) + (std::log(hi) - std::log(lo)) * i / (points - 1)));
  }
  return xs;
}

// Loss-vs-miles power fit over the compute frontier of a record set.
inline FitResult miles_fit(std::span<const RunRecord> records, double rel_tol) {
  const std::vector<u64> budgets = derive_budgets(records);
  const BandingResult banding = band_runs(records, budgets, rel_tol);
  const std::vector<RunRecord> frontier = frontier_runs(banding);
  std::vector<double> xs, ys;
  for (const RunRecord& r : frontier) {
    if (r.miles > 0.0) {
      xs.push_back(r.miles);
      ys.push_back(r.eval_loss);
    }
  }
  if (xs.size() >= 4) return fit_power(xs, ys, true);
  return fit_power(xs, ys, false);  // throws below 3 points
}

}  // namespace detail

// Assembles every fit the study produces. Sections lacking data are marked
// unavailable with a note; everything else is still emitted. Output is a pure
// function of the inputs, so repeated invocations are byte-identical.
inline ReportBundle build_report(const ReportInputs& in) {
  if (in.records.empty()) throw std::invalid_argument("build_report: empty store");
  ReportBundle bundle;
  Json& summary = bundle.summary;
  summary["config_hash"] = in.config_hash;
  summary["reference"] = {
      {"model_size_exponent", 0.63},
      {"data_size_exponent", 0.44},
      {"observed_per_demonstrated_miles_lo", round6(10.0 / 3.0)},
      {"observed_per_demonstrated_miles_hi", 5.0},
  };

  const std::vector<u64> budgets =
      in.budgets.empty() ? detail::derive_budgets(in.records) : in.budgets;
  summary["store"] = {{"runs", in.records.size()}, {"budgets", budgets}};

  const BandingResult banding = band_runs(in.records, budgets, in.rel_tol);
  summary["store"]["unassigned_runs"] = banding.unassigned.size();

  // Iso-FLOP bands: every run, keyed by band.
  {
    CsvWriter csv({"budget_index", "budget", "run_id", "N", "D", "C", "eval_loss", "miles"});
    for (size_t b = 0; b < banding.bands.size(); ++b) {
      std::vector<RunRecord> runs = banding.bands[b].runs;
      std::sort(runs.begin(), runs.end(), [](const RunRecord& x, const RunRecord& y) {
        if (x.N != y.N) return x.N < y.N;
        if (x.D != y.D) return x.D < y.D;
        return x.run_id < y.run_id;
      });
      for (const RunRecord& r : runs) {
        csv.append_row({std::to_string(b), std::to_string(banding.bands[b].budget), r.run_id,
                        std::to_string(r.N), std::to_string(r.D), std::to_string(r.C),
                        format_number(r.eval_loss), format_number(r.miles)});
      }
    }
    bundle.csv_files["isoflop_bands.csv"] = csv.str();
  }

  // Optimal-scaling extraction and the three frontier power laws.
  Json scaling;
  try {
    const ScalingSummary sc = optimal_scaling(banding);
    bundle.scaling_available = true;
    scaling["available"] = true;
    scaling["usable_bands"] = sc.usable_bands;
    scaling["model_size_fit"] = sc.n_opt_fit.to_json();
    scaling["data_size_fit"] = sc.d_opt_fit.to_json();
    scaling["loss_fit_power"] = sc.l_opt_fit_power.to_json();
    scaling["loss_fit_power_const"] = sc.l_opt_fit_power_const.to_json();

    CsvWriter per_band({"budget", "n_opt", "n_opt_sigma", "d_opt", "d_opt_sigma", "l_opt",
                        "l_opt_sigma", "usable"});
    for (const BandExtraction& ex : sc.bands) {
      per_band.append_row({std::to_string(ex.budget), format_number(ex.n_opt),
                           format_number(ex.n_opt_sigma), format_number(ex.d_opt),
                           format_number(ex.d_opt_sigma), format_number(ex.l_opt),
                           format_number(ex.l_opt_sigma), ex.usable ? "1" : "0"});
    }
    bundle.csv_files["optimal_scaling.csv"] = per_band.str();

    try {
      const std::vector<double> grid =
          detail::log_grid(double(budgets.front()), double(budgets.back()), 33);
      CsvWriter curves({"compute", "n_opt_fit", "n_opt_sigma", "d_opt_fit", "d_opt_sigma",
                        "loss_fit", "loss_sigma"});
      const auto n_sig = propagate_band(sc.n_opt_fit, grid);
      const auto d_sig = propagate_band(sc.d_opt_fit, grid);
      const auto l_sig = propagate_band(sc.l_opt_fit_power, grid);
      for (size_t i = 0; i < grid.size(); ++i) {
        curves.append_numeric_row({grid[i], sc.n_opt_fit.eval(grid[i]), n_sig[i],
                                   sc.d_opt_fit.eval(grid[i]), d_sig[i],
                                   sc.l_opt_fit_power.eval(grid[i]), l_sig[i]});
      }
      bundle.csv_files["frontier_curves.csv"] = curves.str();
    } catch (const std::exception& e) {
      scaling["curve_note"] = e.what();
    }
  } catch (const std::exception& e) {
    scaling["available"] = false;
    scaling["note"] = e.what();
  }
  summary["sections"]["optimal_scaling"] = scaling;

  // Joint loss surface and its implied allocation curve.
  Json surface;
  try {
    const FitResult sf = fit_surface(in.records);
    surface["available"] = true;
    surface["fit"] = sf.to_json();
    u64 max_n = 0;
    const RunRecord* widest = nullptr;
    for (const RunRecord& r : in.records) {
      if (r.N > max_n) {
        max_n = r.N;
        widest = &r;
      }
    }
    ShapeFamily fam{widest->shape.n, widest->shape.m, widest->shape.E, widest->shape.D_q};
    surface["allocation_family"] = {
        {"n", fam.n}, {"m", fam.m}, {"E", fam.E}, {"D_q", fam.D_q}};
    u64 min_n = max_n;
    for (const RunRecord& r : in.records) min_n = std::min(min_n, r.N);
    CsvWriter alloc({"compute", "n_opt", "d_opt", "loss"});
    for (double c : detail::log_grid(double(budgets.front()), double(budgets.back()), 17)) {
      const Allocation a = optimal_allocation(
          sf, c, [&fam](double N) { return fam.flops_per_example_of_params(N); },
          double(min_n) / 4.0, double(max_n) * 4.0);
      alloc.append_numeric_row({c, a.N_opt, a.D_opt, a.loss});
    }
    bundle.csv_files["surface_allocation.csv"] = alloc.str();
  } catch (const std::exception& e) {
    surface["available"] = false;
    surface["note"] = e.what();
  }
  summary["sections"]["surface"] = surface;

  // Per-agent-type losses along the compute frontier.
  const std::vector<RunRecord> frontier = detail::frontier_runs(banding);
  {
    Json section;
    CsvWriter csv({"budget", "agent_type", "loss"});
    int rows = 0;
    for (int t = 0; t < kNumAgentTypes; ++t) {
      const std::string type_name = agent_type_name(static_cast<AgentType>(t));
      std::vector<double> xs, ys;
      for (size_t f = 0; f < frontier.size(); ++f) {
        const double loss = frontier[f].per_type_losses[t];
        if (loss <= 0.0) continue;  // zero marks the type absent from eval
        csv.append_row({std::to_string(frontier[f].C), type_name, format_number(loss)});
        xs.push_back(double(frontier[f].C));
        ys.push_back(loss);
        ++rows;
      }
      if (xs.size() >= 3) {
        try {
          section["fits"][type_name] = fit_power(xs, ys, false).to_json();
        } catch (const std::exception& e) {
          section["fits"][type_name] = {{"note", e.what()}};
        }
      }
    }
    section["available"] = rows > 0;
    if (rows > 0) bundle.csv_files["per_type_loss.csv"] = csv.str();
    summary["sections"]["per_type_loss"] = section;
  }

  // Open-loop metric trends along the frontier, with and without a floor.
  {
    Json section;
    std::set<std::string> keys;
    for (const RunRecord& r : frontier) {
      for (const auto& [k, v] : r.metrics) keys.insert(k);
    }
    CsvWriter csv({"metric", "compute", "value"});
    int rows = 0;
    for (const std::string& key : keys) {
      std::vector<double> xs, ys;
      for (const RunRecord& r : frontier) {
        auto it = r.metrics.find(key);
        if (it == r.metrics.end()) continue;
        csv.append_row({key, std::to_string(r.C), format_number(it->second)});
        xs.push_back(double(r.C));
        ys.push_back(it->second);
        ++rows;
      }
      Json entry;
      try {
        entry["power"] = fit_power(xs, ys, false).to_json();
      } catch (const std::exception& e) {
        entry["power"] = {{"note", e.what()}};
      }
      try {
        entry["power_const"] = fit_power(xs, ys, true).to_json();
      } catch (const std::exception& e) {
        entry["power_const"] = {{"note", e.what()}};
      }
      section["fits"][key] = entry;
    }
    section["available"] = rows > 0;
    if (rows > 0) bundle.csv_files["metrics_vs_compute.csv"] = csv.str();
    summary["sections"]["metrics"] = section;
  }

  // Closed-loop failure counts against pretraining compute.
  {
    Json section;
    if (in.eta_rows.empty()) {
      section["available"] = false;
      section["note"] = "no closed-loop results supplied";
    } else {
      section["available"] = true;
      CsvWriter csv({"model", "compute", "alpha", "eta", "ratio"});
      std::vector<double> xs, ys;
      for (const EtaRow& r : in.eta_rows) {
        csv.append_row({r.model_id, std::to_string(r.compute), format_number(r.alpha),
                        std::to_string(r.eta), format_number(r.ratio)});
        xs.push_back(double(r.compute));
        ys.push_back(double(r.eta));
      }
      bundle.csv_files["eta_vs_compute.csv"] = csv.str();
      try {
        // Failure counts approach an irreducible floor, so prefer the +const
        // form whenever there are enough points to identify it.
        section["fit"] = fit_power(xs, ys, xs.size() >= 4).to_json();
      } catch (const std::exception& e) {
        section["note"] = e.what();
      }
    }
    summary["sections"]["closed_loop"] = section;
  }

  // Inference-compute frontier across models.
  {
    Json section;
    if (in.inference.empty()) {
      section["available"] = false;
      section["note"] = "no inference sweeps supplied";
    } else {
      std::vector<std::vector<std::pair<double, double>>> curves;
      Json names = Json::array();
      for (const InferenceSweepTable& table : in.inference) {
        std::vector<std::pair<double, double>> curve;
        for (const InferenceSweepRow& row : table.rows) {
          curve.emplace_back(double(row.flops), row.min_ade);
        }
        curves.push_back(std::move(curve));
        names.push_back(table.model_id);
      }
      try {
        const auto segments = crossover_frontier(curves);
        section["available"] = true;
        section["models"] = names;
        CsvWriter csv({"flops_lo", "flops_hi", "model"});
        for (const FrontierSegment& seg : segments) {
          csv.append_row({format_number(seg.flops_lo), format_number(seg.flops_hi),
                          in.inference[size_t(seg.model_index)].model_id});
        }
        bundle.csv_files["inference_frontier.csv"] = csv.str();
      } catch (const std::exception& e) {
        section["available"] = false;
        section["note"] = e.what();
      }
    }
    summary["sections"]["inference_frontier"] = section;
  }

  // Iso-loss miles equivalence between observed-only and demonstrated data.
  {
    Json section;
    if (in.observed_records.empty()) {
      section["available"] = false;
      section["note"] = "no observed-data store supplied";
    } else {
      try {
        const FitResult fit_obs = detail::miles_fit(in.observed_records, in.rel_tol);
        const FitResult fit_dem = detail::miles_fit(in.records, in.rel_tol);
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (const auto* recs : {&in.observed_records, &in.records}) {
          double mn = std::numeric_limits<double>::infinity(), mx = 0.0;
          for (const RunRecord& r : *recs) {
            mn = std::min(mn, r.eval_loss);
            mx = std::max(mx, r.eval_loss);
          }
          lo = std::max(lo, mn);
          hi = std::min(hi, mx);
        }
        const auto points = iso_loss_equivalence(fit_obs, fit_dem, lo, hi);
        section["available"] = true;
        section["observed_fit"] = fit_obs.to_json();
        section["demonstrated_fit"] = fit_dem.to_json();
        double mean_ratio = 0.0;
        for (const IsoLossPoint& p : points) mean_ratio += p.ratio;
        section["mean_ratio"] = round6(mean_ratio / double(points.size()));
        CsvWriter csv({"loss", "observed_miles", "demonstrated_miles", "ratio", "sigma"});
        for (const IsoLossPoint& p : points) {
          csv.append_numeric_row({p.loss, p.miles_a, p.miles_b, p.ratio, p.sigma});
        }
        bundle.csv_files["iso_loss_miles.csv"] = csv.str();
      } catch (const std::exception& e) {
        section["available"] = false;
        section["note"] = e.what();
      }
    }
    summary["sections"]["iso_loss"] = section;
  }

  return bundle;
}

inline void write_report(const ReportBundle& bundle, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_text_file(out_dir / "summary.json", bundle.summary.dump(2) + "\n");
  for (const auto& [name, body] : bundle.csv_files) {
    write_text_file(out_dir / name, body);
  }
}

// ---------------------------------------------------------------------------
// CSV readers for report inputs

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace detail

inline std::vector<EtaRow> read_eta_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "model,compute,alpha,eta,ratio") {
    throw std::runtime_error("eta csv: unexpected header in " + path.string());
  }
  std::vector<EtaRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 5) throw std::runtime_error("eta csv: bad row: " + line);
    EtaRow row;
    row.model_id = cells[0];
    row.compute = std::stoull(cells[1]);
    row.alpha = std::stod(cells[2]);
    row.eta = std::stoi(cells[3]);
    row.ratio = std::stod(cells[4]);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Parses the inference sweep table format; the shape is not serialized, so
// only model ids, sample counts, flops, and metrics are recovered.
inline std::vector<InferenceSweepTable> read_inference_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  const std::string expected = "model,samples,inference_flops,min_ade,w_ade,min_fde,miss_rate,mean_ap";
  if (!std::getline(in, line) || line != expected) {
    throw std::runtime_error("inference csv: unexpected header in " + path.string());
  }
  std::vector<InferenceSweepTable> tables;
  std::map<std::string, size_t> index;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != 8) throw std::runtime_error("inference csv: bad row: " + line);
    auto [it, fresh] = index.try_emplace(cells[0], tables.size());
    if (fresh) {
      tables.emplace_back();
      tables.back().model_id = cells[0];
    }
    InferenceSweepRow row;
    row.samples = std::stoi(cells[1]);
    row.flops = u64(std::stod(cells[2]));
    row.min_ade = std::stod(cells[3]);
    row.w_ade = std::stod(cells[4]);
    row.min_fde = std::stod(cells[5]);
    row.miss_rate = std::stod(cells[6]);
    row.mean_ap = std::stod(cells[7]);
    tables[it->second].rows.push_back(row);
  }
  return tables;
}

// ---------------------------------------------------------------------------
// Study configuration: one JSON document, CLI flags override fields

struct StudyConfig {
  WorldConfig world;
  int eval_segments = 2;  // trailing segments held out for evaluation
  std::vector<u64> budgets = default_budgets();
  int ladder_rungs = 2;
  int batch = 32;
  std::vector<u64> seeds = {1};
  double rel_tol = 0.25;
  TokenVocab vocab;
  int t_tokens = 22;
  int metric_scenes = 4;
  int metric_samples = 16;
  int metric_clusters = 6;
  int scenarios = 6;
  int rollouts = 8;
  double alpha = 0.5;
  double temperature = 1.0;
  u64 finetune_flops = 0;  // 0 skips planner fine-tuning (checkpoint must be M=1)

  void validate() const {
    world.validate();
    vocab.validate();
    if (eval_segments < 0 || eval_segments >= world.num_segments) {
      throw std::invalid_argument("StudyConfig: eval_segments out of range");
    }
    if (budgets.empty()) throw std::invalid_argument("StudyConfig: no budgets");
    if (ladder_rungs < 1) throw std::invalid_argument("StudyConfig: ladder_rungs must be >= 1");
    if (batch < 1) throw std::invalid_argument("StudyConfig: batch must be >= 1");
    if (seeds.empty()) throw std::invalid_argument("StudyConfig: no seeds");
    if (t_tokens < 1) throw std::invalid_argument("StudyConfig: t_tokens must be >= 1");
    if (scenarios < 1) throw std::invalid_argument("StudyConfig: scenarios must be >= 1");
    if (rollouts < 1) throw std::invalid_argument("StudyConfig: rollouts must be >= 1");
  }

  Json to_json() const {
    Json j;
    j["world"] = {{"seed", world.seed},
                  {"num_segments", world.num_segments},
                  {"num_agents", world.num_agents},
                  {"num_modeled", world.num_modeled},
                  {"noise_scale", world.noise_scale},
                  {"accel_bound", world.accel_bound},
                  {"dt", world.dt},
                  {"duration_s", world.duration_s}};
    j["eval_segments"] = eval_segments;
    j["budgets"] = budgets;
    j["ladder_rungs"] = ladder_rungs;
    j["batch"] = batch;
    j["seeds"] = seeds;
    j["rel_tol"] = rel_tol;
    j["vocab"] = {{"bins_per_axis", vocab.bins_per_axis},
                  {"delta_max", vocab.delta_max},
                  {"token_dt", vocab.token_dt}};
    j["t_tokens"] = t_tokens;
    j["metric_scenes"] = metric_scenes;
    j["metric_samples"] = metric_samples;
    j["metric_clusters"] = metric_clusters;
    j["scenarios"] = scenarios;
    j["rollouts"] = rollouts;
    j["alpha"] = alpha;
    j["temperature"] = temperature;
    j["finetune_flops"] = finetune_flops;
    return j;
  }

  // Present keys override defaults; absent keys keep them.
  static StudyConfig from_json(const Json& j) {
    StudyConfig c;
    if (j.contains("world")) {
      const Json& w = j.at("world");
      c.world.seed = w.value("seed", c.world.seed);
      c.world.num_segments = w.value("num_segments", c.world.num_segments);
      c.world.num_agents = w.value("num_agents", c.world.num_agents);
      c.world.num_modeled = w.value("num_modeled", c.world.num_modeled);
      c.world.noise_scale = w.value("noise_scale", c.world.noise_scale);
      c.world.accel_bound = w.value("accel_bound", c.world.accel_bound);
      c.world.dt = w.value("dt", c.world.dt);
      c.world.duration_s = w.value("duration_s", c.world.duration_s);
    }
    c.eval_segments = j.value("eval_segments", c.eval_segments);
    if (j.contains("budgets")) c.budgets = j.at("budgets").get<std::vector<u64>>();
    c.ladder_rungs = j.value("ladder_rungs", c.ladder_rungs);
    c.batch = j.value("batch", c.batch);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<u64>>();
    c.rel_tol = j.value("rel_tol", c.rel_tol);
    if (j.contains("vocab")) {
      const Json& v = j.at("vocab");
      c.vocab.bins_per_axis = v.value("bins_per_axis", c.vocab.bins_per_axis);
      c.vocab.delta_max = v.value("delta_max", c.vocab.delta_max);
      c.vocab.token_dt = v.value("token_dt", c.vocab.token_dt);
    }
    c.t_tokens = j.value("t_tokens", c.t_tokens);
    c.metric_scenes = j.value("metric_scenes", c.metric_scenes);
    c.metric_samples = j.value("metric_samples", c.metric_samples);
    c.metric_clusters = j.value("metric_clusters", c.metric_clusters);
    c.scenarios = j.value("scenarios", c.scenarios);
    c.rollouts = j.value("rollouts", c.rollouts);
    c.alpha = j.value("alpha", c.alpha);
    c.temperature = j.value("temperature", c.temperature);
    c.finetune_flops = j.value("finetune_flops", c.finetune_flops);
    c.validate();
    return c;
  }

  std::string hash() const { return hash_hex(to_json().dump()); }
};

// Deterministic dataset split: the trailing eval_segments segments (by id) are
// held out; windows are extracted per segment with the default parameters.
struct DatasetSplit {
  std::vector<Segment> segments;
  std::vector<Example> train;
  std::vector<Example> eval;
};

inline DatasetSplit make_dataset(const StudyConfig& cfg) {
  cfg.validate();
  DatasetSplit out;
  out.segments = generate_world(cfg.world);
  const int train_count = cfg.world.num_segments - cfg.eval_segments;
  for (int i = 0; i < int(out.segments.size()); ++i) {
    auto examples = window_examples(out.segments[i], cfg.vocab, cfg.world.num_modeled);
    auto& sink = i < train_count ? out.train : out.eval;
    sink.insert(sink.end(), std::make_move_iterator(examples.begin()),
                std::make_move_iterator(examples.end()));
  }
  return out;
}

}  // namespace msl

#endif  // MSL_HARNESS_HPP_

#include "runner.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "log.hpp"

namespace tail {

namespace {

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::io_failure, "cannot create output directory " + dir + ": " + ec.message());
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io_failure, "cannot open " + path + " for writing");
  out << text;
  if (!out) fail(ErrorCode::io_failure, "short write to " + path);
}

void write_config_snapshot(const RunConfig& cfg) {
  write_text_file(cfg.out_dir + "/config.json", run_config_to_json(cfg).dump(2) + "\n");
}

std::string csv_num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

std::string report_row(const EvalReport& r) {
  std::ostringstream os;
  os << r.ways << "," << r.shots << "," << csv_num(r.accuracy) << "," << csv_num(r.ci95) << ","
     << csv_num(r.wall_ms) << "," << r.forward_passes << "," << r.attn_score_elements << "\n";
  return os.str();
}

constexpr const char* kReportHeader = "k,n_shot,accuracy,ci95,wall_ms,fwd_passes,attn_elems\n";

EvalSettings eval_settings_from(const RunConfig& cfg) {
  EvalSettings settings;
  settings.episodes = cfg.eval.episodes;
  settings.shots = cfg.eval.shots;
  settings.ways = cfg.eval.ways;
  settings.queries_per_class = cfg.eval.queries_per_class;
  settings.threads = cfg.threads;
  return settings;
}

MetaDataset eval_meta_for(const RunConfig& cfg) {
  return build_meta(cfg.eval_tasks ? *cfg.eval_tasks : cfg.tasks, cfg.seed, /*eval_split=*/true);
}

}  // namespace

const ModelConfig& AnyModelState::model_config() const {
  return std::visit([](const auto& s) -> const ModelConfig& { return s.model.config; }, state);
}

uint64_t AnyModelState::episode() const {
  return std::visit([](const auto& s) { return s.episode; }, state);
}

AnyModelState AnyModelState::load(const std::string& path) {
  AnyModelState any;
  if (checkpoint_precision(path) == Precision::f64)
    any.state = load_checkpoint<double>(path);
  else
    any.state = load_checkpoint<float>(path);
  return any;
}

void AnyModelState::save(const std::string& path) const {
  std::visit([&](const auto& s) { save_checkpoint(s, path); }, state);
}

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::diverged_loss:
    case ErrorCode::config_mismatch:
    case ErrorCode::dim_too_large:
    case ErrorCode::too_many_labels:
      return 2;
    default:
      return 1;
  }
}

namespace {

template <typename S>
CommandResult train_impl(const RunConfig& cfg, AnyModelState* out_state) {
  const MetaDataset meta = build_meta(cfg.tasks, cfg.seed, /*eval_split=*/false);
  const MetaDataset val_meta = eval_meta_for(cfg);

  ModelState<S> state;
  if (!cfg.resume.empty()) {
    state = load_checkpoint<S>(cfg.resume);
    if (model_config_to_json(state.model.config) != model_config_to_json(cfg.model))
      log_info("resume: using the checkpoint's model configuration");
    state.trainer.episodes = cfg.trainer.episodes;  // continue to the new target
  } else {
    state = init_state<S>(cfg.model, cfg.trainer, cfg.seed);
  }

  std::vector<TrainLogRow> history;
  const TrainOutcome<S> outcome = train_loop(state, meta, &val_meta, &history);

  std::ostringstream csv;
  csv << "episode,loss,lr,active_count,val_loss\n";
  for (const TrainLogRow& row : history) {
    csv << row.episode << "," << csv_num(row.loss) << "," << csv_num(row.lr) << "," << row.active_count << ",";
    if (row.has_val) csv << csv_num(row.val_loss);
    csv << "\n";
  }
  write_text_file(cfg.out_dir + "/train_loss.csv", csv.str());

  const std::string ck_path = cfg.out_dir + "/model.tailck";
  save_checkpoint(state, ck_path);
  if (out_state) out_state->state = std::move(state);

  CommandResult result;
  if (outcome.diverged) {
    result.exit_code = 2;
    result.summary = "DivergedLoss at episode " + std::to_string(outcome.diverged_at) +
                     "; state preserved in " + ck_path;
  } else {
    std::ostringstream os;
    os << "trained " << cfg.trainer.episodes << " episodes (" << precision_name(cfg.precision) << "), checkpoint "
       << ck_path;
    if (!history.empty()) os << ", last loss " << csv_num(history.back().loss);
    result.summary = os.str();
  }
  return result;
}

}  // namespace

CommandResult run_train_command(const RunConfig& cfg, AnyModelState* out_state) {
  ensure_out_dir(cfg.out_dir);
  write_config_snapshot(cfg);
  if (cfg.precision == Precision::f64) return train_impl<double>(cfg, out_state);
  return train_impl<float>(cfg, out_state);
}

CommandResult run_eval_command(const AnyModelState& model, const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  write_config_snapshot(cfg);
  const MetaDataset meta = eval_meta_for(cfg);

  const EvalReport report = std::visit(
      [&](const auto& s) { return evaluate(s.model, meta, eval_settings_from(cfg), cfg.seed); }, model.state);

  std::ostringstream episodes_csv;
  episodes_csv << "episode,task,accuracy\n";
  for (size_t e = 0; e < report.per_episode_accuracy.size(); ++e)
    episodes_csv << e << "," << report.per_episode_task[e] << "," << csv_num(report.per_episode_accuracy[e]) << "\n";
  write_text_file(cfg.out_dir + "/eval_episodes.csv", episodes_csv.str());
  write_text_file(cfg.out_dir + "/eval_summary.csv", std::string(kReportHeader) + report_row(report));

  std::ostringstream os;
  os << "eval " << report.episodes << " episodes, " << report.ways << "-way " << report.shots
     << "-shot: accuracy " << csv_num(report.accuracy) << " +- " << csv_num(report.ci95) << " (95% CI)";
  return CommandResult{0, os.str()};
}

CommandResult run_extrapolate_command(const AnyModelState& model, const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  write_config_snapshot(cfg);
  const MetaDataset meta = eval_meta_for(cfg);

  EvalSettings settings;
  settings.episodes = cfg.extrapolate.episodes;
  settings.shots = cfg.extrapolate.shots;
  settings.queries_per_class = cfg.extrapolate.queries_per_class;
  settings.threads = cfg.threads;

  const std::vector<EvalReport> reports = std::visit(
      [&](const auto& s) { return extrapolation_sweep(s.model, meta, cfg.extrapolate.ways, settings, cfg.seed); },
      model.state);

  std::string csv = kReportHeader;
  std::ostringstream os;
  os << "extrapolation over K in {";
  for (size_t i = 0; i < reports.size(); ++i) {
    csv += report_row(reports[i]);
    os << (i ? "," : "") << reports[i].ways;
  }
  os << "}: accuracies";
  for (const auto& r : reports) os << " " << csv_num(r.accuracy);
  write_text_file(cfg.out_dir + "/extrapolation.csv", csv);
  return CommandResult{0, os.str()};
}

CommandResult run_bench_command(const AnyModelState& model, const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  write_config_snapshot(cfg);
  const MetaDataset meta = eval_meta_for(cfg);

  std::ostringstream csv;
  csv << "mode,k,n_shot,q,accuracy,wall_ms_per_1000,fwd_passes,attn_elems\n";
  std::ostringstream os;
  os << "bench over K in {";
  bool first = true;
  std::visit(
      [&](const auto& s) {
        for (int k : cfg.bench.ways) {
          for (QueryMode mode : {QueryMode::inline_batch, QueryMode::per_query}) {
            const BenchRow row =
                efficiency_bench(s.model, meta, k, cfg.bench.shots, cfg.bench.queries_per_class,
                                 cfg.bench.episodes, mode, cfg.seed);
            csv << (mode == QueryMode::inline_batch ? "inline" : "per-query") << "," << row.ways << ","
                << row.shots << "," << row.query_size << "," << csv_num(row.accuracy) << ","
                << csv_num(row.wall_ms_per_1000) << "," << row.forward_passes_per_episode << ","
                << row.attn_elements_per_episode << "\n";
          }
          os << (first ? "" : ",") << k;
          first = false;
        }
      },
      model.state);
  os << "}, both query modes; see bench.csv";
  write_text_file(cfg.out_dir + "/bench.csv", csv.str());
  return CommandResult{0, os.str()};
}

CommandResult run_verify_command(const AnyModelState* model_or_null, const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  write_config_snapshot(cfg);

  VerifySettings settings;
  settings.episodes = cfg.verify.episodes;
  settings.permutations = cfg.verify.permutations;
  settings.uniformity_draws = cfg.verify.uniformity_draws;
  settings.coverage_episodes = cfg.verify.coverage_episodes;
  settings.gradcheck = cfg.verify.gradcheck;
  settings.seed = cfg.seed;

  std::vector<PropertyResult> results;
  if (model_or_null) {
    results = std::visit([&](const auto& s) { return run_property_suite(s.model, settings); },
                         model_or_null->state);
  } else {
    results = run_property_suite_fresh(cfg.model, cfg.precision, settings);
  }

  std::ostringstream os;
  int failed = 0;
  for (const PropertyResult& r : results) {
    os << (r.pass ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << "\n";
    if (!r.pass) ++failed;
  }
  os << (failed == 0 ? "all properties passed"
                     : std::to_string(failed) + " propert" + (failed == 1 ? "y" : "ies") + " failed")
     << "\n";
  const std::string text = os.str();
  write_text_file(cfg.out_dir + "/verify.txt", text);

  CommandResult result;
  result.exit_code = failed == 0 ? 0 : 3;
  result.summary = text;
  return result;
}

}  // namespace tail

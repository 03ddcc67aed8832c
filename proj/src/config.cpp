#include "config.hpp"

#include <set>

namespace tail {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::string& where, const std::set<std::string>& known) {
  if (!j.is_object()) fail(ErrorCode::invalid_config, where + ": expected an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) fail(ErrorCode::invalid_config, where + ": unknown key '" + key + "'");
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

ProjectionKind projection_from_string(const std::string& s) {
  if (s == "extended_permutation") return ProjectionKind::extended_permutation;
  if (s == "gaussian") return ProjectionKind::gaussian;
  if (s == "identity") return ProjectionKind::identity;
  fail(ErrorCode::invalid_config, "unknown projection kind '" + s + "'");
}

const char* projection_name(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::extended_permutation: return "extended_permutation";
    case ProjectionKind::gaussian: return "gaussian";
    case ProjectionKind::identity: return "identity";
  }
  return "extended_permutation";
}

TaskSourceConfig task_source_from_json(const json& j, const std::string& where) {
  check_keys(j, where,
             {"source", "count", "d_min", "d_max", "classes_min", "classes_max", "separation", "sigma",
              "min_pairwise_distance", "path", "format", "labels"});
  TaskSourceConfig cfg;
  get_to(j, "source", cfg.source);
  if (cfg.source != "synthetic" && cfg.source != "file")
    fail(ErrorCode::invalid_config, where + ": source must be 'synthetic' or 'file'");
  get_to(j, "count", cfg.count);
  get_to(j, "d_min", cfg.d_min);
  get_to(j, "d_max", cfg.d_max);
  get_to(j, "classes_min", cfg.classes_min);
  get_to(j, "classes_max", cfg.classes_max);
  get_to(j, "separation", cfg.separation);
  get_to(j, "sigma", cfg.sigma);
  get_to(j, "min_pairwise_distance", cfg.min_pairwise_distance);
  get_to(j, "path", cfg.path);
  get_to(j, "format", cfg.format);
  get_to(j, "labels", cfg.labels);
  if (cfg.source == "file" && cfg.path.empty())
    fail(ErrorCode::invalid_config, where + ": file source needs a path");
  return cfg;
}

json task_source_to_json(const TaskSourceConfig& cfg) {
  return json{{"source", cfg.source},
              {"count", cfg.count},
              {"d_min", cfg.d_min},
              {"d_max", cfg.d_max},
              {"classes_min", cfg.classes_min},
              {"classes_max", cfg.classes_max},
              {"separation", cfg.separation},
              {"sigma", cfg.sigma},
              {"min_pairwise_distance", cfg.min_pairwise_distance},
              {"path", cfg.path},
              {"format", cfg.format},
              {"labels", cfg.labels}};
}

}  // namespace

ModelConfig model_config_from_json(const json& j) {
  check_keys(j, "model",
             {"preset", "hidden_dim", "n_layers", "n_heads", "mlp_dim", "d_data", "d_label", "dictionary_size",
              "causal_mask", "layer_norm_eps"});
  ModelConfig cfg;
  if (j.contains("preset")) {
    const std::string preset = j.at("preset").get<std::string>();
    if (preset == "full")
      cfg = full_scale_config();
    else if (preset != "desk")
      fail(ErrorCode::invalid_config, "model.preset must be 'desk' or 'full'");
  }
  get_to(j, "hidden_dim", cfg.hidden_dim);
  get_to(j, "n_layers", cfg.n_layers);
  get_to(j, "n_heads", cfg.n_heads);
  get_to(j, "mlp_dim", cfg.mlp_dim);
  get_to(j, "d_data", cfg.d_data);
  get_to(j, "d_label", cfg.d_label);
  get_to(j, "dictionary_size", cfg.dictionary_size);
  get_to(j, "causal_mask", cfg.causal_mask);
  get_to(j, "layer_norm_eps", cfg.layer_norm_eps);
  cfg.validate();
  return cfg;
}

json model_config_to_json(const ModelConfig& cfg) {
  return json{{"hidden_dim", cfg.hidden_dim},
              {"n_layers", cfg.n_layers},
              {"n_heads", cfg.n_heads},
              {"mlp_dim", cfg.mlp_dim},
              {"d_data", cfg.d_data},
              {"d_label", cfg.d_label},
              {"dictionary_size", cfg.dictionary_size},
              {"causal_mask", cfg.causal_mask},
              {"layer_norm_eps", cfg.layer_norm_eps}};
}

TrainerConfig trainer_config_from_json(const json& j) {
  check_keys(j, "trainer",
             {"episodes", "max_lr", "cycle_length", "beta1", "beta2", "adam_eps", "shots", "ways",
              "queries_per_class", "projection", "loss", "schedule", "val_every", "val_episodes"});
  TrainerConfig cfg;
  get_to(j, "episodes", cfg.episodes);
  get_to(j, "max_lr", cfg.max_lr);
  get_to(j, "cycle_length", cfg.cycle_length);
  get_to(j, "beta1", cfg.adam.beta1);
  get_to(j, "beta2", cfg.adam.beta2);
  get_to(j, "adam_eps", cfg.adam.eps);
  get_to(j, "shots", cfg.shots);
  get_to(j, "ways", cfg.ways);
  get_to(j, "queries_per_class", cfg.queries_per_class);
  if (j.contains("projection")) cfg.projection = projection_from_string(j.at("projection").get<std::string>());
  if (j.contains("loss")) {
    const std::string mode = j.at("loss").get<std::string>();
    if (mode == "sum")
      cfg.loss_sum = true;
    else if (mode == "mean")
      cfg.loss_sum = false;
    else
      fail(ErrorCode::invalid_config, "trainer.loss must be 'mean' or 'sum'");
  }
  if (j.contains("schedule") && !j.at("schedule").is_null()) {
    check_keys(j.at("schedule"), "trainer.schedule", {"start", "warmup"});
    ScheduleConfig sched;
    get_to(j.at("schedule"), "start", sched.start_count);
    get_to(j.at("schedule"), "warmup", sched.warmup_episodes);
    cfg.schedule = sched;
  }
  get_to(j, "val_every", cfg.val_every);
  get_to(j, "val_episodes", cfg.val_episodes);
  return cfg;
}

json trainer_config_to_json(const TrainerConfig& cfg) {
  json j{{"episodes", cfg.episodes},
         {"max_lr", cfg.max_lr},
         {"cycle_length", cfg.cycle_length},
         {"beta1", cfg.adam.beta1},
         {"beta2", cfg.adam.beta2},
         {"adam_eps", cfg.adam.eps},
         {"shots", cfg.shots},
         {"ways", cfg.ways},
         {"queries_per_class", cfg.queries_per_class},
         {"projection", projection_name(cfg.projection)},
         {"loss", cfg.loss_sum ? "sum" : "mean"},
         {"val_every", cfg.val_every},
         {"val_episodes", cfg.val_episodes}};
  if (cfg.schedule)
    j["schedule"] = json{{"start", cfg.schedule->start_count}, {"warmup", cfg.schedule->warmup_episodes}};
  else
    j["schedule"] = nullptr;
  return j;
}

RunConfig parse_run_config(const json& j) {
  check_keys(j, "config",
             {"seed", "threads", "precision", "out", "checkpoint", "resume", "model", "tasks", "eval_tasks",
              "trainer", "eval", "extrapolate", "bench", "verify"});
  RunConfig cfg;
  get_to(j, "seed", cfg.seed);
  get_to(j, "threads", cfg.threads);
  if (cfg.threads < 1) fail(ErrorCode::invalid_config, "threads must be at least 1");
  if (j.contains("precision")) {
    const std::string p = j.at("precision").get<std::string>();
    if (p == "f32")
      cfg.precision = Precision::f32;
    else if (p == "f64")
      cfg.precision = Precision::f64;
    else
      fail(ErrorCode::invalid_config, "precision must be 'f32' or 'f64'");
  }
  get_to(j, "out", cfg.out_dir);
  get_to(j, "checkpoint", cfg.checkpoint);
  get_to(j, "resume", cfg.resume);
  if (j.contains("model")) cfg.model = model_config_from_json(j.at("model"));
  if (j.contains("tasks")) cfg.tasks = task_source_from_json(j.at("tasks"), "tasks");
  if (j.contains("eval_tasks") && !j.at("eval_tasks").is_null())
    cfg.eval_tasks = task_source_from_json(j.at("eval_tasks"), "eval_tasks");
  if (j.contains("trainer")) cfg.trainer = trainer_config_from_json(j.at("trainer"));

  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, "eval", {"episodes", "shots", "ways", "queries_per_class"});
    get_to(e, "episodes", cfg.eval.episodes);
    get_to(e, "shots", cfg.eval.shots);
    get_to(e, "ways", cfg.eval.ways);
    get_to(e, "queries_per_class", cfg.eval.queries_per_class);
  }
  if (j.contains("extrapolate")) {
    const json& e = j.at("extrapolate");
    check_keys(e, "extrapolate", {"ways", "shots", "episodes", "queries_per_class"});
    get_to(e, "ways", cfg.extrapolate.ways);
    get_to(e, "shots", cfg.extrapolate.shots);
    get_to(e, "episodes", cfg.extrapolate.episodes);
    get_to(e, "queries_per_class", cfg.extrapolate.queries_per_class);
  }
  if (j.contains("bench")) {
    const json& e = j.at("bench");
    check_keys(e, "bench", {"ways", "shots", "queries_per_class", "episodes"});
    get_to(e, "ways", cfg.bench.ways);
    get_to(e, "shots", cfg.bench.shots);
    get_to(e, "queries_per_class", cfg.bench.queries_per_class);
    get_to(e, "episodes", cfg.bench.episodes);
  }
  if (j.contains("verify")) {
    const json& e = j.at("verify");
    check_keys(e, "verify", {"episodes", "permutations", "uniformity_draws", "coverage_episodes", "gradcheck"});
    get_to(e, "episodes", cfg.verify.episodes);
    get_to(e, "permutations", cfg.verify.permutations);
    get_to(e, "uniformity_draws", cfg.verify.uniformity_draws);
    get_to(e, "coverage_episodes", cfg.verify.coverage_episodes);
    get_to(e, "gradcheck", cfg.verify.gradcheck);
  }
  return cfg;
}

RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::invalid_config, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["precision"] = precision_name(cfg.precision);
  j["out"] = cfg.out_dir;
  j["checkpoint"] = cfg.checkpoint;
  j["resume"] = cfg.resume;
  j["model"] = model_config_to_json(cfg.model);
  j["tasks"] = task_source_to_json(cfg.tasks);
  j["eval_tasks"] = cfg.eval_tasks ? task_source_to_json(*cfg.eval_tasks) : json(nullptr);
  j["trainer"] = trainer_config_to_json(cfg.trainer);
  j["eval"] = json{{"episodes", cfg.eval.episodes},
                   {"shots", cfg.eval.shots},
                   {"ways", cfg.eval.ways},
                   {"queries_per_class", cfg.eval.queries_per_class}};
  j["extrapolate"] = json{{"ways", cfg.extrapolate.ways},
                          {"shots", cfg.extrapolate.shots},
                          {"episodes", cfg.extrapolate.episodes},
                          {"queries_per_class", cfg.extrapolate.queries_per_class}};
  j["bench"] = json{{"ways", cfg.bench.ways},
                    {"shots", cfg.bench.shots},
                    {"queries_per_class", cfg.bench.queries_per_class},
                    {"episodes", cfg.bench.episodes}};
  j["verify"] = json{{"episodes", cfg.verify.episodes},
                     {"permutations", cfg.verify.permutations},
                     {"uniformity_draws", cfg.verify.uniformity_draws},
                     {"coverage_episodes", cfg.verify.coverage_episodes},
                     {"gradcheck", cfg.verify.gradcheck}};
  return j;
}

void apply_override(json& j, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorCode::invalid_config, "override must be key.path=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // plain string
  }

  json* node = &j;
  size_t start = 0;
  while (true) {
    const size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) fail(ErrorCode::invalid_config, "override has an empty path segment: '" + assignment + "'");
    if (dot == std::string::npos) {
      (*node)[key] = parsed;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

MetaDataset build_meta(const TaskSourceConfig& cfg, uint64_t run_seed, bool eval_split) {
  if (cfg.source == "file") {
    FeatureStore loaded;
    const bool csv = cfg.format == "csv" || (cfg.format == "auto" && cfg.path.size() > 4 &&
                                             cfg.path.substr(cfg.path.size() - 4) == ".csv");
    loaded = csv ? FeatureStore::load_csv(cfg.path) : FeatureStore::load_binary(cfg.path);
    auto store = std::make_shared<FeatureStore>(std::move(loaded));
    MetaDataset meta;
    meta.split = eval_split ? "test" : "train";
    Task task = task_from_store(store, cfg.labels);
    meta.weights.push_back(static_cast<double>(task.n_labels()));
    meta.tasks.push_back(std::move(task));
    meta.validate();
    return meta;
  }
  TaskGridConfig grid;
  grid.task_count = cfg.count;
  grid.d_min = cfg.d_min;
  grid.d_max = cfg.d_max;
  grid.classes_min = cfg.classes_min;
  grid.classes_max = cfg.classes_max;
  grid.separation = cfg.separation;
  grid.sigma = cfg.sigma;
  grid.min_pairwise_distance = cfg.min_pairwise_distance;
  grid.seed = derive_seed(run_seed, eval_split ? "eval-tasks" : "tasks", 0);
  grid.split = eval_split ? "test" : "train";
  return make_task_grid(grid);
}

}  // namespace tail

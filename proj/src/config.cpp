#include "iro/config.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <initializer_list>

#include "iro/io.hpp"

namespace iro {

namespace {

using nlohmann::json;

std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

/// Strict object check: every present key must be in the allowed set.
void check_keys(const json& obj, const std::string& path,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError("parse_experiment_config: '" +
                      (path.empty() ? std::string("<root>") : path) +
                      "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    const bool known = std::any_of(allowed.begin(), allowed.end(),
                                   [&](const char* k) { return it.key() == k; });
    if (!known)
      throw ConfigError("parse_experiment_config: unknown key '" +
                        join_path(path, it.key()) + "'");
  }
}

[[noreturn]] void type_error(const std::string& path, const char* key,
                             const char* expected) {
  throw ConfigError("parse_experiment_config: '" + join_path(path, key) +
                    "' must be " + expected);
}

std::int64_t get_int(const json& obj, const std::string& path, const char* key,
                     std::int64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    type_error(path, key, "an integer");
  return v.get<std::int64_t>();
}

std::uint64_t get_u64(const json& obj, const std::string& path,
                      const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  type_error(path, key, "a non-negative integer");
}

double get_num(const json& obj, const std::string& path, const char* key,
               double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) type_error(path, key, "a number");
  return v.get<double>();
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean()) type_error(path, key, "a boolean");
  return v.get<bool>();
}

std::string get_str(const json& obj, const std::string& path, const char* key,
                    const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) type_error(path, key, "a string");
  return v.get<std::string>();
}

std::vector<TokenId> get_token_list(const json& v, const std::string& where) {
  if (!v.is_array())
    throw ConfigError("parse_experiment_config: '" + where +
                      "' must be an array of token ids");
  std::vector<TokenId> tokens;
  for (const json& t : v) {
    if (!t.is_number_integer() && !t.is_number_unsigned())
      throw ConfigError("parse_experiment_config: '" + where +
                        "' must contain only integers");
    tokens.push_back(t.get<TokenId>());
  }
  return tokens;
}

MdpSpec parse_mdp(const json& j) {
  check_keys(j, "mdp",
             {"vocab_size", "horizon", "prompts", "terminal_token", "r_max"});
  if (!j.contains("vocab_size")) type_error("mdp", "vocab_size", "present");
  if (!j.contains("horizon")) type_error("mdp", "horizon", "present");

  MdpSpec spec;
  spec.vocab_size = static_cast<std::int32_t>(get_int(j, "mdp", "vocab_size", 0));
  spec.horizon = static_cast<std::int32_t>(get_int(j, "mdp", "horizon", 0));
  spec.r_max = get_num(j, "mdp", "r_max", 1.0);
  if (j.contains("terminal_token"))
    spec.terminal_token =
        static_cast<TokenId>(get_int(j, "mdp", "terminal_token", 0));
  if (j.contains("prompts")) {
    const json& prompts = j.at("prompts");
    if (!prompts.is_array()) type_error("mdp", "prompts", "an array");
    spec.prompts.clear();
    for (std::size_t i = 0; i < prompts.size(); ++i)
      spec.prompts.push_back(get_token_list(
          prompts[i], "mdp.prompts[" + std::to_string(i) + "]"));
  }
  return spec;
}

RewardSpec parse_reward(const json& j, const MdpSpec& spec) {
  const std::string family = get_str(j, "reward", "family", "");
  RewardSpec reward;
  if (family == "hash_leaf") {
    check_keys(j, "reward", {"family", "seed", "scale"});
    HashLeafReward r;
    r.seed = get_u64(j, "reward", "seed", 0);
    r.scale = get_num(j, "reward", "scale", 1.0);
    reward.family = r;
  } else if (family == "needle") {
    check_keys(j, "reward",
               {"family", "prompt_id", "target", "hit_value", "miss_value"});
    if (!j.contains("target")) type_error("reward", "target", "present");
    NeedleReward r;
    const auto prompt_id =
        static_cast<std::int32_t>(get_int(j, "reward", "prompt_id", 0));
    r.target = make_trajectory(spec, prompt_id,
                               get_token_list(j.at("target"), "reward.target"));
    if (!r.target.complete)
      throw ConfigError(
          "parse_experiment_config: 'reward.target' is not a complete "
          "trajectory for this horizon");
    r.hit_value = get_num(j, "reward", "hit_value", 1.0);
    r.miss_value = get_num(j, "reward", "miss_value", 0.0);
    reward.family = r;
  } else if (family == "token_preference") {
    check_keys(j, "reward", {"family", "weights"});
    if (!j.contains("weights")) type_error("reward", "weights", "present");
    const json& weights = j.at("weights");
    if (!weights.is_array()) type_error("reward", "weights", "an array");
    TokenPreferenceReward r;
    for (std::size_t h = 0; h < weights.size(); ++h) {
      const json& row = weights[h];
      const std::string where = "reward.weights[" + std::to_string(h) + "]";
      if (!row.is_array() ||
          row.size() != static_cast<std::size_t>(spec.vocab_size))
        throw ConfigError("parse_experiment_config: '" + where +
                          "' must be an array of vocab_size numbers");
      std::vector<double> out;
      for (const json& w : row) {
        if (!w.is_number())
          throw ConfigError("parse_experiment_config: '" + where +
                            "' must contain only numbers");
        out.push_back(w.get<double>());
      }
      r.weights.push_back(std::move(out));
    }
    reward.family = r;
  } else if (family == "explicit_table") {
    check_keys(j, "reward", {"family", "default_value", "entries"});
    ExplicitTableReward r;
    r.default_value = get_num(j, "reward", "default_value", 0.0);
    if (j.contains("entries")) {
      const json& entries = j.at("entries");
      if (!entries.is_array()) type_error("reward", "entries", "an array");
      for (std::size_t i = 0; i < entries.size(); ++i) {
        const std::string where = "reward.entries[" + std::to_string(i) + "]";
        const json& e = entries[i];
        check_keys(e, where, {"prompt_id", "tokens", "value"});
        if (!e.contains("tokens") || !e.contains("value"))
          throw ConfigError("parse_experiment_config: '" + where +
                            "' needs 'tokens' and 'value'");
        const auto prompt_id =
            static_cast<std::int32_t>(get_int(e, where, "prompt_id", 0));
        r.table[{prompt_id, get_token_list(e.at("tokens"), where + ".tokens")}] =
            get_num(e, where, "value", 0.0);
      }
    }
    reward.family = r;
  } else {
    throw ConfigError(
        "parse_experiment_config: 'reward.family' must be one of hash_leaf, "
        "needle, token_preference, explicit_table");
  }
  return reward;
}

BasePolicy parse_base(const json& j) {
  const std::string kind = get_str(j, "base", "kind", "uniform");
  BasePolicy base;
  if (kind == "uniform") {
    check_keys(j, "base", {"kind"});
    base.kind = UniformBase{};
  } else if (kind == "seeded_logits") {
    check_keys(j, "base", {"kind", "seed", "temperature"});
    SeededLogitsBase b;
    b.seed = get_u64(j, "base", "seed", 0);
    b.temperature = get_num(j, "base", "temperature", 1.0);
    base.kind = b;
  } else {
    throw ConfigError(
        "parse_experiment_config: 'base.kind' must be one of uniform, "
        "seeded_logits");
  }
  return base;
}

BetaSchedule parse_schedule(const json& j) {
  check_keys(j, "iro.schedule", {"kind", "beta", "omega", "betas"});
  BetaSchedule schedule;
  const std::string kind = get_str(j, "iro.schedule", "kind", "constant");
  if (kind == "constant") {
    schedule.kind = BetaSchedule::Kind::Constant;
  } else if (kind == "sqrt") {
    schedule.kind = BetaSchedule::Kind::Sqrt;
  } else if (kind == "explicit") {
    schedule.kind = BetaSchedule::Kind::Explicit;
  } else {
    throw ConfigError(
        "parse_experiment_config: 'iro.schedule.kind' must be one of "
        "constant, sqrt, explicit");
  }
  schedule.beta = get_num(j, "iro.schedule", "beta", 1.0);
  schedule.omega = get_num(j, "iro.schedule", "omega", 0.0);
  if (j.contains("betas")) {
    const json& betas = j.at("betas");
    if (!betas.is_array()) type_error("iro.schedule", "betas", "an array");
    for (const json& b : betas) {
      if (!b.is_number())
        type_error("iro.schedule", "betas", "an array of numbers");
      schedule.betas.push_back(b.get<double>());
    }
  }
  if (schedule.kind == BetaSchedule::Kind::Constant && schedule.beta <= 0.0)
    throw ConfigError(
        "parse_experiment_config: 'iro.schedule.beta' must be positive");
  return schedule;
}

search::SearchConfig parse_search(const json& j) {
  check_keys(j, "iro.search",
             {"beam_width", "successors", "chunk_length", "selection",
              "softmax_temperature", "final_pick", "expansion"});
  search::SearchConfig cfg;
  cfg.beam_width =
      static_cast<int>(get_int(j, "iro.search", "beam_width", cfg.beam_width));
  cfg.successors =
      static_cast<int>(get_int(j, "iro.search", "successors", cfg.successors));
  cfg.chunk_length = static_cast<int>(
      get_int(j, "iro.search", "chunk_length", cfg.chunk_length));
  cfg.softmax_temperature =
      get_num(j, "iro.search", "softmax_temperature", cfg.softmax_temperature);

  const std::string selection =
      get_str(j, "iro.search", "selection", "diversity_first");
  if (selection == "diversity_first") {
    cfg.selection = search::SelectionRule::DiversityFirstBeam;
  } else if (selection == "plain") {
    cfg.selection = search::SelectionRule::PlainBeam;
  } else if (selection == "stochastic") {
    cfg.selection = search::SelectionRule::StochasticSoftmax;
  } else {
    throw ConfigError(
        "parse_experiment_config: 'iro.search.selection' must be one of "
        "diversity_first, plain, stochastic");
  }

  const std::string final_pick = get_str(j, "iro.search", "final_pick", "reward");
  if (final_pick == "reward") {
    cfg.final_pick = search::FinalPick::ByReward;
  } else if (final_pick == "value_score") {
    cfg.final_pick = search::FinalPick::ByValueScore;
  } else {
    throw ConfigError(
        "parse_experiment_config: 'iro.search.final_pick' must be one of "
        "reward, value_score");
  }

  const std::string expansion = get_str(j, "iro.search", "expansion", "sample_base");
  if (expansion == "sample_base") {
    cfg.expansion = search::ExpansionMode::SampleBase;
  } else if (expansion == "enumerate_all") {
    cfg.expansion = search::ExpansionMode::EnumerateAll;
  } else {
    throw ConfigError(
        "parse_experiment_config: 'iro.search.expansion' must be one of "
        "sample_base, enumerate_all");
  }
  return cfg;
}

IroConfig parse_iro(const json& j) {
  check_keys(j, "iro",
             {"iterations", "samples_per_iter", "prompt_subset_size",
              "include_base_logprob", "value_repr", "ridge_lambda",
              "exact_mode", "node_cap", "schedule", "search"});
  IroConfig cfg;
  cfg.iterations = static_cast<int>(get_int(j, "iro", "iterations", cfg.iterations));
  cfg.samples_per_iter = static_cast<int>(
      get_int(j, "iro", "samples_per_iter", cfg.samples_per_iter));
  cfg.prompt_subset_size = static_cast<int>(
      get_int(j, "iro", "prompt_subset_size", cfg.prompt_subset_size));
  cfg.include_base_logprob =
      get_bool(j, "iro", "include_base_logprob", cfg.include_base_logprob);
  cfg.ridge_lambda = get_num(j, "iro", "ridge_lambda", cfg.ridge_lambda);
  cfg.exact_mode = get_bool(j, "iro", "exact_mode", cfg.exact_mode);
  cfg.node_cap = get_int(j, "iro", "node_cap", cfg.node_cap);

  const std::string repr = get_str(j, "iro", "value_repr", "tabular");
  if (repr == "tabular") {
    cfg.value_repr = ValueReprKind::Tabular;
  } else if (repr == "linear") {
    cfg.value_repr = ValueReprKind::Linear;
  } else if (repr == "zero") {
    cfg.value_repr = ValueReprKind::Zero;
  } else {
    throw ConfigError(
        "parse_experiment_config: 'iro.value_repr' must be one of tabular, "
        "linear, zero");
  }

  if (j.contains("schedule")) cfg.schedule = parse_schedule(j.at("schedule"));
  if (j.contains("search")) cfg.search = parse_search(j.at("search"));
  return cfg;
}

const char* schedule_kind_name(BetaSchedule::Kind kind) {
  switch (kind) {
    case BetaSchedule::Kind::Constant: return "constant";
    case BetaSchedule::Kind::Sqrt: return "sqrt";
    case BetaSchedule::Kind::Explicit: return "explicit";
  }
  return "constant";
}

const char* selection_name(search::SelectionRule rule) {
  switch (rule) {
    case search::SelectionRule::DiversityFirstBeam: return "diversity_first";
    case search::SelectionRule::PlainBeam: return "plain";
    case search::SelectionRule::StochasticSoftmax: return "stochastic";
  }
  return "diversity_first";
}

const char* final_pick_name(search::FinalPick pick) {
  return pick == search::FinalPick::ByValueScore ? "value_score" : "reward";
}

const char* expansion_name(search::ExpansionMode mode) {
  return mode == search::ExpansionMode::EnumerateAll ? "enumerate_all"
                                                     : "sample_base";
}

const char* value_repr_name(ValueReprKind kind) {
  switch (kind) {
    case ValueReprKind::Tabular: return "tabular";
    case ValueReprKind::Linear: return "linear";
    case ValueReprKind::Zero: return "zero";
  }
  return "tabular";
}

json reward_to_json(const RewardSpec& reward) {
  json j;
  if (const auto* hash = std::get_if<HashLeafReward>(&reward.family)) {
    j["family"] = "hash_leaf";
    j["seed"] = hash->seed;
    j["scale"] = hash->scale;
  } else if (const auto* needle = std::get_if<NeedleReward>(&reward.family)) {
    j["family"] = "needle";
    j["prompt_id"] = needle->target.prompt_id;
    j["target"] = needle->target.tokens;
    j["hit_value"] = needle->hit_value;
    j["miss_value"] = needle->miss_value;
  } else if (const auto* pref =
                 std::get_if<TokenPreferenceReward>(&reward.family)) {
    j["family"] = "token_preference";
    j["weights"] = pref->weights;
  } else {
    const auto& table = std::get<ExplicitTableReward>(reward.family);
    j["family"] = "explicit_table";
    j["default_value"] = table.default_value;
    json entries = json::array();
    for (const auto& [key, value] : table.table) {
      json e;
      e["prompt_id"] = key.first;
      e["tokens"] = key.second;
      e["value"] = value;
      entries.push_back(std::move(e));
    }
    j["entries"] = std::move(entries);
  }
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  mdp.validate();
  iro.validate(mdp);
  if (output_dir.empty())
    throw ConfigError("ExperimentConfig::validate: output_dir is empty");
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  check_keys(j, "",
             {"mdp", "reward", "base", "iro", "eval", "output_dir",
              "master_seed", "workers"});
  if (!j.contains("mdp"))
    throw ConfigError("parse_experiment_config: 'mdp' is required");

  ExperimentConfig cfg;
  cfg.mdp = parse_mdp(j.at("mdp"));
  if (j.contains("reward")) cfg.reward = parse_reward(j.at("reward"), cfg.mdp);
  if (j.contains("base")) cfg.base = parse_base(j.at("base"));
  if (j.contains("iro")) cfg.iro = parse_iro(j.at("iro"));
  if (j.contains("eval")) {
    const json& eval = j.at("eval");
    check_keys(eval, "eval", {"n_eval", "oracle_mode"});
    cfg.iro.eval_rollouts =
        static_cast<int>(get_int(eval, "eval", "n_eval", 0));
    cfg.iro.oracle_eval = get_bool(eval, "eval", "oracle_mode", true);
  }
  cfg.output_dir = get_str(j, "", "output_dir", cfg.output_dir);
  cfg.iro.master_seed = get_u64(j, "", "master_seed", 0);
  cfg.iro.workers = static_cast<int>(get_int(j, "", "workers", 1));
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const std::string text = io::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("load_experiment_config: " + path.string() + ": " +
                      e.what());
  }
  return parse_experiment_config(j);
}

nlohmann::json resolved_config_json(const ExperimentConfig& cfg) {
  json j;

  json mdp;
  mdp["vocab_size"] = cfg.mdp.vocab_size;
  mdp["horizon"] = cfg.mdp.horizon;
  mdp["prompts"] = cfg.mdp.prompts;
  if (cfg.mdp.terminal_token) mdp["terminal_token"] = *cfg.mdp.terminal_token;
  mdp["r_max"] = cfg.mdp.r_max;
  j["mdp"] = std::move(mdp);

  j["reward"] = reward_to_json(cfg.reward);

  json base;
  if (const auto* logits = std::get_if<SeededLogitsBase>(&cfg.base.kind)) {
    base["kind"] = "seeded_logits";
    base["seed"] = logits->seed;
    base["temperature"] = logits->temperature;
  } else {
    base["kind"] = "uniform";
  }
  j["base"] = std::move(base);

  json iro;
  iro["iterations"] = cfg.iro.iterations;
  iro["samples_per_iter"] = cfg.iro.samples_per_iter;
  iro["prompt_subset_size"] = cfg.iro.prompt_subset_size;
  iro["include_base_logprob"] = cfg.iro.include_base_logprob;
  iro["value_repr"] = value_repr_name(cfg.iro.value_repr);
  iro["ridge_lambda"] = cfg.iro.ridge_lambda;
  iro["exact_mode"] = cfg.iro.exact_mode;
  iro["node_cap"] = cfg.iro.node_cap;
  json schedule;
  schedule["kind"] = schedule_kind_name(cfg.iro.schedule.kind);
  schedule["beta"] = cfg.iro.schedule.beta;
  schedule["omega"] = cfg.iro.schedule.omega;
  schedule["betas"] = cfg.iro.schedule.betas;
  iro["schedule"] = std::move(schedule);
  json search_cfg;
  search_cfg["beam_width"] = cfg.iro.search.beam_width;
  search_cfg["successors"] = cfg.iro.search.successors;
  search_cfg["chunk_length"] = cfg.iro.search.chunk_length;
  search_cfg["selection"] = selection_name(cfg.iro.search.selection);
  search_cfg["softmax_temperature"] = cfg.iro.search.softmax_temperature;
  search_cfg["final_pick"] = final_pick_name(cfg.iro.search.final_pick);
  search_cfg["expansion"] = expansion_name(cfg.iro.search.expansion);
  iro["search"] = std::move(search_cfg);
  j["iro"] = std::move(iro);

  json eval;
  eval["n_eval"] = cfg.iro.eval_rollouts;
  eval["oracle_mode"] = cfg.iro.oracle_eval;
  j["eval"] = std::move(eval);

  j["output_dir"] = cfg.output_dir;
  j["master_seed"] = cfg.iro.master_seed;
  j["workers"] = cfg.iro.workers;
  return j;
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  json artifacts = json::array();
  for (const RunManifest::Artifact& a : m.artifacts) {
    json e;
    e["path"] = a.path;
    e["bytes"] = a.bytes;
    e["checksum"] = a.checksum;
    artifacts.push_back(std::move(e));
  }
  json j;
  j["resolved_config"] = m.resolved_config;
  j["master_seed"] = m.master_seed;
  j["started_at"] = m.started_at;
  j["finished_at"] = m.finished_at;
  j["artifacts"] = std::move(artifacts);
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.resolved_config = j.at("resolved_config");
  m.master_seed = j.at("master_seed").get<std::uint64_t>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  for (const json& e : j.at("artifacts")) {
    RunManifest::Artifact a;
    a.path = e.at("path").get<std::string>();
    a.bytes = e.at("bytes").get<std::uint64_t>();
    a.checksum = e.at("checksum").get<std::string>();
    m.artifacts.push_back(std::move(a));
  }
  return m;
}

std::string utc_timestamp_now() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace iro

#include <cmath>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "iro/analysis.hpp"
#include "iro/config.hpp"
#include "iro/io.hpp"
#include "iro/iro_loop.hpp"
#include "iro/oracle.hpp"
#include "iro/parallel.hpp"
#include "iro/search.hpp"
#include "iro/verify.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iro;

/// Relative output directories land under $IRO_LAB_OUT (or the working
/// directory when unset).
fs::path resolve_output_dir(const std::string& configured) {
  fs::path p(configured);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("IRO_LAB_OUT")) return fs::path(root) / p;
  return p;
}

/// Writes run artifacts and keeps the manifest bookkeeping in one place.
class ArtifactWriter {
 public:
  explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {}

  void write(const std::string& rel_path, std::string_view content) {
    io::write_file(dir_ / rel_path, content);
    RunManifest::Artifact a;
    a.path = rel_path;
    a.bytes = content.size();
    a.checksum = io::checksum_hex(content);
    artifacts_.push_back(std::move(a));
  }

  const std::vector<RunManifest::Artifact>& artifacts() const {
    return artifacts_;
  }

 private:
  fs::path dir_;
  std::vector<RunManifest::Artifact> artifacts_;
};

void write_manifest(const fs::path& dir, const RunManifest& manifest) {
  io::write_file(dir / "manifest.json", manifest_to_json(manifest).dump(2) + "\n");
}

int cmd_run_iro(const std::string& config_path, int workers_override) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (workers_override > 0) cfg.iro.workers = workers_override;
  const fs::path out_dir = resolve_output_dir(cfg.output_dir);

  RunManifest manifest;
  manifest.resolved_config = resolved_config_json(cfg);
  manifest.master_seed = cfg.iro.master_seed;
  manifest.started_at = utc_timestamp_now();
  write_manifest(out_dir, manifest);

  IroState state = run_iro(cfg.mdp, cfg.reward, cfg.base, cfg.iro);

  ArtifactWriter writer(out_dir);
  writer.write("records.jsonl", io::records_to_jsonl(state.records));
  writer.write("records.csv", io::records_to_csv(state.records));
  writer.write("stack.json", io::stack_to_json(state.stack).dump(2) + "\n");
  for (std::size_t i = 0; i < state.stack.entries.size(); ++i) {
    json snap;
    snap["iteration"] = i + 1;
    snap["beta"] = state.stack.entries[i].beta;
    snap["value_fn"] = io::value_fn_to_json(*state.stack.entries[i].value_fn);
    writer.write("snapshots/value_fn_" + std::to_string(i + 1) + ".json",
                 snap.dump(2) + "\n");
  }

  manifest.artifacts = writer.artifacts();
  manifest.finished_at = utc_timestamp_now();
  write_manifest(out_dir, manifest);

  const IterationRecord& last = state.records.back();
  std::cout << "run-iro: " << state.records.size() << " iterations -> "
            << out_dir.string()
            << " (mean training reward "
            << io::format_double(last.mean_training_reward);
  if (!std::isnan(last.exact_gap))
    std::cout << ", exact gap " << io::format_double(last.exact_gap);
  std::cout << ")\n";
  return 0;
}

int cmd_run_bon(const std::string& config_path, int n, int workers_override) {
  ExperimentConfig cfg = load_experiment_config(config_path);
  if (workers_override > 0) cfg.iro.workers = workers_override;
  if (n < 1) throw ConfigError("run-bon: --n must be positive");
  if (cfg.iro.eval_rollouts < 1)
    throw ConfigError("run-bon: 'eval.n_eval' must be positive");
  const fs::path out_dir = resolve_output_dir(cfg.output_dir);

  RunManifest manifest;
  manifest.resolved_config = resolved_config_json(cfg);
  manifest.master_seed = cfg.iro.master_seed;
  manifest.started_at = utc_timestamp_now();
  write_manifest(out_dir, manifest);

  const std::int64_t n_eval = cfg.iro.eval_rollouts;
  const auto n_prompts = static_cast<std::int64_t>(
      cfg.mdp.prompts.empty() ? 1 : cfg.mdp.prompts.size());
  struct Row {
    double reward = 0.0;
    CostLedger ledger;
  };
  std::vector<Row> rows(static_cast<std::size_t>(n_eval));
  parallel_for(n_eval, cfg.iro.workers, [&](std::int64_t i) {
    RngStream rng(cfg.iro.master_seed, "bon_eval",
                  static_cast<std::uint64_t>(i));
    const auto prompt = static_cast<std::int32_t>(i % n_prompts);
    search::SearchResult res =
        search::bon_generate(cfg.mdp, cfg.reward, cfg.base, n, prompt, rng);
    rows[static_cast<std::size_t>(i)] = {res.best.reward, res.ledger};
  });

  double sum = 0.0, sum_sq = 0.0;
  std::int64_t hits = 0;
  CostLedger total;
  const auto* needle = std::get_if<NeedleReward>(&cfg.reward.family);
  std::string csv = "generation,prompt_id,reward,tokens_generated,reward_queries\n";
  for (std::int64_t i = 0; i < n_eval; ++i) {
    const Row& row = rows[static_cast<std::size_t>(i)];
    sum += row.reward;
    sum_sq += row.reward * row.reward;
    total.merge(row.ledger);
    if (needle && row.reward >= needle->hit_value - 1e-9) ++hits;
    csv += std::to_string(i) + ',' + std::to_string(i % n_prompts) + ',' +
           io::format_double(row.reward) + ',' +
           std::to_string(row.ledger.tokens_generated) + ',' +
           std::to_string(row.ledger.reward_queries) + '\n';
  }
  const double mean = sum / static_cast<double>(n_eval);
  const double var =
      n_eval > 1
          ? std::max(0.0, (sum_sq - sum * mean) / static_cast<double>(n_eval - 1))
          : 0.0;

  json summary;
  summary["n"] = n;
  summary["generations"] = n_eval;
  summary["mean_reward"] = mean;
  summary["reward_stderr"] =
      std::sqrt(var / static_cast<double>(n_eval));
  if (needle)
    summary["success_rate"] =
        static_cast<double>(hits) / static_cast<double>(n_eval);
  summary["ledger"] = io::ledger_to_json(total);

  ArtifactWriter writer(out_dir);
  writer.write("bon_results.csv", csv);
  writer.write("bon_summary.json", summary.dump(2) + "\n");
  manifest.artifacts = writer.artifacts();
  manifest.finished_at = utc_timestamp_now();
  write_manifest(out_dir, manifest);

  std::cout << "run-bon: " << n_eval << " generations of best-of-" << n
            << " -> " << out_dir.string() << " (mean reward "
            << io::format_double(mean) << ")\n";
  return 0;
}

int cmd_compare_cost(int vocab, int horizon, int chunk, int beam, int succ,
                     int valuefns, std::int64_t empirical, std::uint64_t seed,
                     int workers, const std::string& out) {
  if (vocab < 1 || horizon < 1 || chunk < 1 || beam < 1 || succ < 1 ||
      valuefns < 1)
    throw ConfigError("compare-cost: all size arguments must be positive");
  if (horizon % chunk != 0)
    throw ConfigError("compare-cost: --chunk must divide --horizon");
  analysis::CostComparison cmp =
      analysis::budget_matched_costs(horizon, chunk, valuefns, beam, succ);

  json j;
  j["config"] = {{"vocab_size", vocab},   {"horizon", horizon},
                 {"chunk_length", chunk}, {"beam_width", beam},
                 {"successors", succ},    {"value_fns", valuefns}};
  j["bon"] = {{"n", cmp.bon.n},
              {"query_cost", cmp.bon.query_cost},
              {"token_cost", cmp.bon.token_cost}};
  j["guided"] = {{"u", cmp.guided.u},
                 {"beam_width", cmp.guided.beam_width},
                 {"successors", cmp.guided.successors},
                 {"chunk_length", cmp.guided.chunk_length},
                 {"iterations", cmp.guided.iterations},
                 {"query_cost", cmp.guided.query_cost},
                 {"token_cost", cmp.guided.token_cost}};
  j["ratios"] = {{"token_ratio", cmp.ratios.token_ratio},
                 {"query_ratio", cmp.ratios.query_ratio}};
  j["success_closed_form"] = {
      {"bon", analysis::bon_success_prob(vocab, horizon, cmp.bon.n)},
      {"guided", analysis::iro_success_prob(vocab, horizon, chunk,
                                            cmp.guided.u)}};

  // Single-beam full-enumeration demo: count the tree nodes each method
  // touches to find the one rewarded leaf.
  MdpSpec spec;
  spec.vocab_size = vocab;
  spec.horizon = horizon;
  NeedleReward needle;
  needle.target = make_trajectory(
      spec, 0, std::vector<TokenId>(static_cast<std::size_t>(horizon), 0));
  RewardSpec reward;
  reward.family = needle;

  const double chunk_fanout = std::pow(vocab, chunk);
  if (beam == 1 && chunk_fanout == static_cast<double>(succ) &&
      count_tree_nodes(spec, 0) <= 100000) {
    BasePolicy base;
    RngStream rng(seed, "nodes_bon", 0);
    search::SearchResult bon_res =
        search::bon_generate(spec, reward, base, 1, 0, rng, /*exhaustive=*/true);

    ValueTable table = oracle::optimal_values(spec, reward);
    TabularRepr tab;
    for (const auto& [p, v] : table.values) tab.cells[p] = {v, 1};
    auto gold = std::make_shared<ValueFn>();
    gold->repr = std::move(tab);
    GuidanceStack stack;
    for (int i = 0; i < valuefns; ++i) stack.push(gold, 1.0 + i);

    search::SearchConfig scfg;
    scfg.beam_width = 1;
    scfg.successors = succ;
    scfg.chunk_length = chunk;
    scfg.expansion = search::ExpansionMode::EnumerateAll;
    scfg.final_pick = search::FinalPick::ByValueScore;
    RngStream rng2(seed, "nodes_guided", 0);
    search::SearchResult guided_res =
        search::guided_generate(spec, reward, base, stack, scfg, 0, rng2);

    j["nodes"] = {{"bon", bon_res.ledger.nodes_expanded},
                  {"guided", guided_res.ledger.nodes_expanded}};
  }

  if (empirical > 0) {
    analysis::SuccessEstimate eb = analysis::estimate_bon_success(
        spec, reward, cmp.bon.n, empirical, seed, workers);
    analysis::SuccessEstimate eg = analysis::estimate_guided_success(
        spec, reward, chunk, cmp.guided.u, valuefns, empirical, seed + 1,
        workers);
    j["empirical"] = {
        {"trials", empirical},
        {"bon",
         {{"rate", eb.rate},
          {"std_error", eb.std_error},
          {"ledger", io::ledger_to_json(eb.ledger)}}},
        {"guided",
         {{"rate", eg.rate},
          {"std_error", eg.std_error},
          {"ledger", io::ledger_to_json(eg.ledger)}}},
        {"measured_token_ratio",
         static_cast<double>(eb.ledger.tokens_generated) /
             static_cast<double>(eg.ledger.tokens_generated)},
        {"measured_query_ratio",
         static_cast<double>(eb.ledger.reward_queries) /
             static_cast<double>(eg.ledger.value_queries)}};
  }

  const std::string text = j.dump(2) + "\n";
  std::cout << text;
  if (!out.empty()) {
    const fs::path dir = resolve_output_dir(out);
    io::write_file(dir / "compare.json", text);
    std::string csv =
        "vocab_size,horizon,chunk_length,beam_width,successors,value_fns,"
        "bon_n,bon_token_cost,bon_query_cost,guided_token_cost,"
        "guided_query_cost,token_ratio,query_ratio,success_bon,success_guided\n";
    csv += std::to_string(vocab) + ',' + std::to_string(horizon) + ',' +
           std::to_string(chunk) + ',' + std::to_string(beam) + ',' +
           std::to_string(succ) + ',' + std::to_string(valuefns) + ',' +
           std::to_string(cmp.bon.n) + ',' +
           io::format_double(cmp.bon.token_cost) + ',' +
           io::format_double(cmp.bon.query_cost) + ',' +
           io::format_double(cmp.guided.token_cost) + ',' +
           io::format_double(cmp.guided.query_cost) + ',' +
           io::format_double(cmp.ratios.token_ratio) + ',' +
           io::format_double(cmp.ratios.query_ratio) + ',' +
           io::format_double(
               j["success_closed_form"]["bon"].get<double>()) +
           ',' +
           io::format_double(
               j["success_closed_form"]["guided"].get<double>()) +
           '\n';
    io::write_file(dir / "compare.csv", csv);
  }
  return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  verify::SuiteReport report;
  try {
    report = verify::run_suite(suite, seed);
  } catch (const InvalidConfig& e) {
    std::cerr << "verify: " << e.what() << "\n";
    return 2;
  }
  for (const verify::PropertyResult& r : report.results)
    std::cout << (r.pass ? "PASS" : "FAIL") << " " << r.name << ": "
              << r.detail << "\n";
  return report.all_pass() ? 0 : 1;
}

int cmd_report(const std::string& run_dir) {
  const fs::path dir(run_dir);
  const fs::path records_path = dir / "records.jsonl";
  if (!fs::exists(records_path))
    throw IoError("report: no records.jsonl under " + dir.string());
  const std::vector<IterationRecord> records =
      io::records_from_jsonl(io::read_file(records_path));
  if (records.empty()) throw IoError("report: records.jsonl is empty");

  std::string reward_csv =
      "iteration,mean_training_reward,mc_return_mean,exact_return\n";
  std::string gap_csv =
      "iteration,exact_gap,tokens_generated,value_queries,reward_queries\n";
  int best_iteration = records.front().iteration;
  double best_gap = records.front().exact_gap;
  for (const IterationRecord& r : records) {
    reward_csv += std::to_string(r.iteration) + ',' +
                  io::format_double(r.mean_training_reward) + ',' +
                  io::format_double(r.mc_return_mean) + ',' +
                  io::format_double(r.exact_return) + '\n';
    gap_csv += std::to_string(r.iteration) + ',' +
               io::format_double(r.exact_gap) + ',' +
               std::to_string(r.cumulative.tokens_generated) + ',' +
               std::to_string(r.cumulative.value_queries) + ',' +
               std::to_string(r.cumulative.reward_queries) + '\n';
    if (!std::isnan(r.exact_gap) &&
        (std::isnan(best_gap) || r.exact_gap < best_gap)) {
      best_gap = r.exact_gap;
      best_iteration = r.iteration;
    }
  }
  io::write_file(dir / "reward_vs_iteration.csv", reward_csv);
  io::write_file(dir / "gap_vs_iteration.csv", gap_csv);

  json summary;
  summary["iterations"] = records.size();
  summary["final_exact_gap"] =
      std::isnan(records.back().exact_gap) ? json(nullptr)
                                           : json(records.back().exact_gap);
  summary["best_exact_gap"] =
      std::isnan(best_gap) ? json(nullptr) : json(best_gap);
  summary["best_iteration"] = best_iteration;
  summary["total_ledger"] = io::ledger_to_json(records.back().cumulative);
  summary["files"] = {
      {"reward_vs_iteration.csv", io::checksum_hex(reward_csv)},
      {"gap_vs_iteration.csv", io::checksum_hex(gap_csv)}};
  io::write_file(dir / "report.json", summary.dump(2) + "\n");

  std::cout << "report: " << records.size() << " iterations -> "
            << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic test-time alignment laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string run_dir;
  std::string suite = "all";
  std::string out_dir;
  int bon_n = 1;
  int workers = 0;  // 0 = take the config's value
  int vocab = 2, horizon = 4, chunk = 1, beam = 2, succ = 2, valuefns = 1;
  std::int64_t empirical = 0;
  std::uint64_t seed = 0;

  CLI::App* run_iro_cmd =
      app.add_subcommand("run-iro", "Run the iterative alignment loop");
  run_iro_cmd->add_option("--config", config_path, "Experiment config file")
      ->required();
  run_iro_cmd->add_option("--workers", workers, "Override worker count");

  CLI::App* run_bon_cmd =
      app.add_subcommand("run-bon", "Run the best-of-n baseline");
  run_bon_cmd->add_option("--config", config_path, "Experiment config file")
      ->required();
  run_bon_cmd->add_option("--n", bon_n, "Rollouts per generation")->required();
  run_bon_cmd->add_option("--workers", workers, "Override worker count");

  CLI::App* compare_cmd = app.add_subcommand(
      "compare-cost", "Budget-matched cost and success comparison");
  compare_cmd->add_option("--vocab", vocab, "Vocabulary size")->required();
  compare_cmd->add_option("--horizon", horizon, "Trajectory length")->required();
  compare_cmd->add_option("--chunk", chunk, "Tokens per search chunk");
  compare_cmd->add_option("--beam", beam, "Beam width");
  compare_cmd->add_option("--succ", succ, "Successors per parent");
  compare_cmd->add_option("--valuefns", valuefns, "Stacked value functions");
  compare_cmd->add_option("--empirical", empirical,
                          "Monte-Carlo trials per side (0 = closed form only)");
  compare_cmd->add_option("--seed", seed, "Monte-Carlo seed");
  compare_cmd->add_option("--workers", workers, "Worker count");
  compare_cmd->add_option("--out", out_dir, "Write compare.json/.csv here");

  CLI::App* verify_cmd =
      app.add_subcommand("verify", "Run theory property suites");
  verify_cmd->add_option("--suite", suite, "Suite name or 'all'");
  verify_cmd->add_option("--seed", seed, "Instance seed");

  CLI::App* report_cmd =
      app.add_subcommand("report", "Summarize a finished run directory");
  report_cmd->add_option("--run", run_dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (run_iro_cmd->parsed()) return cmd_run_iro(config_path, workers);
    if (run_bon_cmd->parsed()) return cmd_run_bon(config_path, bon_n, workers);
    if (compare_cmd->parsed())
      return cmd_compare_cost(vocab, horizon, chunk, beam, succ, valuefns,
                              empirical, seed, workers > 0 ? workers : 1,
                              out_dir);
    if (verify_cmd->parsed()) return cmd_verify(suite, seed);
    if (report_cmd->parsed()) return cmd_report(run_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

#include "iro/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <sstream>

namespace iro::io {

namespace {

using nlohmann::json;

/// NaN-tolerant number emission: JSON has no NaN literal, so records store
/// missing measurements as null.
json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

double number_or_nan(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number())
    throw IoError(std::string("record_from_json: field '") + key +
                  "' is not a number");
  return v.get<double>();
}

json prefix_to_json(const Prefix& p) {
  json j;
  j["prompt_id"] = p.prompt_id;
  j["tokens"] = p.tokens;
  return j;
}

Prefix prefix_from_json(const json& j) {
  Prefix p;
  p.prompt_id = j.at("prompt_id").get<std::int32_t>();
  p.tokens = j.at("tokens").get<std::vector<TokenId>>();
  return p;
}

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw IoError("parse_double: not a number: '" + s + "'");
  return v;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string checksum_hex(std::string_view bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(bytes)));
  return buf;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_file: cannot open " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  if (in.bad()) throw IoError("read_file: read failed for " + path.string());
  return out.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec)
      throw IoError("write_file: cannot create directories for " +
                    path.string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("write_file: cannot open " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("write_file: write failed for " + path.string());
}

nlohmann::json ledger_to_json(const CostLedger& ledger) {
  json j;
  j["tokens_generated"] = ledger.tokens_generated;
  j["value_queries"] = ledger.value_queries;
  j["reward_queries"] = ledger.reward_queries;
  j["nodes_expanded"] = ledger.nodes_expanded;
  j["default_value_hits"] = ledger.default_value_hits;
  return j;
}

CostLedger ledger_from_json(const nlohmann::json& j) {
  CostLedger ledger;
  ledger.tokens_generated = j.at("tokens_generated").get<std::int64_t>();
  ledger.value_queries = j.at("value_queries").get<std::int64_t>();
  ledger.reward_queries = j.at("reward_queries").get<std::int64_t>();
  ledger.nodes_expanded = j.at("nodes_expanded").get<std::int64_t>();
  ledger.default_value_hits = j.at("default_value_hits").get<std::int64_t>();
  return ledger;
}

nlohmann::json record_to_json(const IterationRecord& record) {
  json j;
  j["iteration"] = record.iteration;
  j["beta"] = record.beta;
  j["mean_training_reward"] = record.mean_training_reward;
  j["mc_return_mean"] = number_or_null(record.mc_return_mean);
  j["mc_return_stderr"] = number_or_null(record.mc_return_stderr);
  j["exact_return"] = number_or_null(record.exact_return);
  j["exact_gap"] = number_or_null(record.exact_gap);
  j["cumulative"] = ledger_to_json(record.cumulative);
  return j;
}

IterationRecord record_from_json(const nlohmann::json& j) {
  IterationRecord record;
  record.iteration = j.at("iteration").get<int>();
  record.beta = j.at("beta").get<double>();
  record.mean_training_reward = j.at("mean_training_reward").get<double>();
  record.mc_return_mean = number_or_nan(j, "mc_return_mean");
  record.mc_return_stderr = number_or_nan(j, "mc_return_stderr");
  record.exact_return = number_or_nan(j, "exact_return");
  record.exact_gap = number_or_nan(j, "exact_gap");
  record.cumulative = ledger_from_json(j.at("cumulative"));
  return record;
}

nlohmann::json value_fn_to_json(const ValueFn& fn) {
  json j;
  j["default_value"] = fn.default_value;
  switch (fn.kind()) {
    case ValueReprKind::Zero:
      j["kind"] = "zero";
      break;
    case ValueReprKind::Tabular: {
      j["kind"] = "tabular";
      const auto& tab = std::get<TabularRepr>(fn.repr);
      // Deterministic cell order: by prompt, then token sequence.
      std::vector<const Prefix*> keys;
      keys.reserve(tab.cells.size());
      for (const auto& [p, cell] : tab.cells) keys.push_back(&p);
      std::sort(keys.begin(), keys.end(),
                [](const Prefix* a, const Prefix* b) {
                  if (a->prompt_id != b->prompt_id)
                    return a->prompt_id < b->prompt_id;
                  return a->tokens < b->tokens;
                });
      json cells = json::array();
      for (const Prefix* p : keys) {
        const auto& [sum, count] = tab.cells.at(*p);
        json cell = prefix_to_json(*p);
        cell["sum"] = sum;
        cell["count"] = count;
        cells.push_back(std::move(cell));
      }
      j["cells"] = std::move(cells);
      break;
    }
    case ValueReprKind::Linear: {
      j["kind"] = "linear";
      const auto& lin = std::get<LinearRepr>(fn.repr);
      j["vocab_size"] = lin.vocab_size;
      j["horizon"] = lin.horizon;
      j["r_max"] = lin.r_max;
      j["weights"] = lin.weights;
      break;
    }
  }
  return j;
}

ValueFn value_fn_from_json(const nlohmann::json& j) {
  ValueFn fn;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "zero" && kind != "tabular" && kind != "linear")
    throw IoError("value_fn_from_json: unknown kind '" + kind + "'");
  fn.default_value = j.at("default_value").get<double>();
  if (kind == "zero") {
    fn.repr = ZeroRepr{};
  } else if (kind == "tabular") {
    TabularRepr tab;
    for (const json& cell : j.at("cells")) {
      tab.cells[prefix_from_json(cell)] = {cell.at("sum").get<double>(),
                                           cell.at("count").get<std::int64_t>()};
    }
    fn.repr = std::move(tab);
  } else if (kind == "linear") {
    LinearRepr lin;
    lin.vocab_size = j.at("vocab_size").get<std::int32_t>();
    lin.horizon = j.at("horizon").get<std::int32_t>();
    lin.r_max = j.at("r_max").get<double>();
    lin.weights = j.at("weights").get<std::vector<double>>();
    fn.repr = std::move(lin);
  }
  return fn;
}

nlohmann::json stack_to_json(const GuidanceStack& stack) {
  json entries = json::array();
  for (const GuidanceEntry& e : stack.entries) {
    json entry;
    entry["beta"] = e.beta;
    entry["value_fn"] = value_fn_to_json(*e.value_fn);
    entries.push_back(std::move(entry));
  }
  json j;
  j["include_base_logprob"] = stack.include_base_logprob;
  j["entries"] = std::move(entries);
  return j;
}

GuidanceStack stack_from_json(const nlohmann::json& j) {
  GuidanceStack stack;
  stack.include_base_logprob = j.at("include_base_logprob").get<bool>();
  for (const json& entry : j.at("entries")) {
    stack.push(std::make_shared<ValueFn>(value_fn_from_json(entry.at("value_fn"))),
               entry.at("beta").get<double>());
  }
  return stack;
}

std::string records_to_jsonl(const std::vector<IterationRecord>& records) {
  std::string out;
  for (const IterationRecord& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::vector<IterationRecord> records_from_jsonl(const std::string& text) {
  std::vector<IterationRecord> records;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(record_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw IoError("records_from_jsonl: line " + std::to_string(line_no) +
                    ": " + e.what());
    }
  }
  return records;
}

std::string records_to_csv(const std::vector<IterationRecord>& records) {
  std::string out =
      "iteration,beta,mean_training_reward,mc_return_mean,mc_return_stderr,"
      "exact_return,exact_gap,tokens_generated,value_queries,reward_queries,"
      "nodes_expanded,default_value_hits\n";
  for (const IterationRecord& r : records) {
    out += std::to_string(r.iteration);
    out += ',';
    out += format_double(r.beta);
    out += ',';
    out += format_double(r.mean_training_reward);
    out += ',';
    out += format_double(r.mc_return_mean);
    out += ',';
    out += format_double(r.mc_return_stderr);
    out += ',';
    out += format_double(r.exact_return);
    out += ',';
    out += format_double(r.exact_gap);
    out += ',';
    out += std::to_string(r.cumulative.tokens_generated);
    out += ',';
    out += std::to_string(r.cumulative.value_queries);
    out += ',';
    out += std::to_string(r.cumulative.reward_queries);
    out += ',';
    out += std::to_string(r.cumulative.nodes_expanded);
    out += ',';
    out += std::to_string(r.cumulative.default_value_hits);
    out += '\n';
  }
  return out;
}

}  // namespace iro::io

#include "iro/value_fn.hpp"

#include <algorithm>
#include <cmath>

#include "iro/oracle.hpp"

namespace iro {

std::vector<FitDataset::Example> FitDataset::examples() const {
  std::vector<Example> out;
  for (const auto& item : items) {
    Prefix p{item.trajectory.prompt_id, {}};
    out.push_back({p, item.reward});
    for (TokenId t : item.trajectory.tokens) {
      p.tokens.push_back(t);
      out.push_back({p, item.reward});
    }
  }
  return out;
}

double ValueFn::evaluate(const Prefix& s, CostLedger* ledger) const {
  if (ledger) ++ledger->value_queries;
  if (const auto* tab = std::get_if<TabularRepr>(&repr)) {
    auto it = tab->cells.find(s);
    if (it == tab->cells.end()) {
      if (ledger) ++ledger->default_value_hits;
      return default_value;
    }
    return it->second.first / static_cast<double>(it->second.second);
  }
  if (const auto* lin = std::get_if<LinearRepr>(&repr)) {
    std::vector<double> phi = linear_features(lin->vocab_size, lin->horizon, s);
    double v = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) v += lin->weights[i] * phi[i];
    return std::clamp(v, 0.0, lin->r_max);
  }
  return default_value;
}

std::int64_t ValueFn::cell_count() const {
  if (const auto* tab = std::get_if<TabularRepr>(&repr))
    return static_cast<std::int64_t>(tab->cells.size());
  if (const auto* lin = std::get_if<LinearRepr>(&repr))
    return static_cast<std::int64_t>(lin->weights.size());
  return 0;
}

std::vector<double> linear_features(std::int32_t vocab_size,
                                    std::int32_t horizon, const Prefix& s) {
  std::size_t v = static_cast<std::size_t>(vocab_size);
  std::vector<double> phi(2 + 2 * v, 0.0);
  double len = static_cast<double>(s.tokens.size());
  phi[0] = 1.0;
  phi[1] = len / horizon;
  if (!s.tokens.empty()) phi[2 + s.tokens.back()] = 1.0;
  for (TokenId t : s.tokens) phi[2 + v + t] += 1.0;
  if (!s.tokens.empty())
    for (std::size_t i = 0; i < v; ++i) phi[2 + v + i] /= len;
  return phi;
}

namespace {

/// Solves (A + lambda I) w = b for symmetric positive semidefinite A via
/// Cholesky. Throws SingularSystem when no ridge keeps a pivot positive.
std::vector<double> solve_ridge(std::vector<std::vector<double>> a,
                                std::vector<double> b, double lambda) {
  std::size_t n = a.size();
  double scale = lambda;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i][i]));
  double pivot_floor = scale * 1e-13;
  for (std::size_t i = 0; i < n; ++i) a[i][i] += lambda;

  // In-place Cholesky: a becomes lower-triangular L with A = L L^T.
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j][k] * a[j][k];
    if (d <= pivot_floor)
      throw SingularSystem("fit_value_fn: rank-deficient features need ridge");
    a[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double x = a[i][j];
      for (std::size_t k = 0; k < j; ++k) x -= a[i][k] * a[j][k];
      a[i][j] = x / a[j][j];
    }
  }
  // Forward then backward substitution.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= a[i][k] * b[k];
    b[i] /= a[i][i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n; ++k) b[ii] -= a[k][ii] * b[k];
    b[ii] /= a[ii][ii];
  }
  return b;
}

}  // namespace

ValueFn fit_value_fn(const MdpSpec& spec, const FitDataset& data,
                     const FitOptions& options) {
  if (data.items.empty())
    throw EmptyDataset("fit_value_fn: dataset has no trajectories");
  if (options.ridge_lambda < 0.0)
    throw InvalidConfig("fit_value_fn: ridge_lambda must be nonnegative");

  ValueFn fn;
  fn.default_value = options.default_value;

  if (options.repr == ValueReprKind::Zero) {
    fn.repr = ZeroRepr{};
    return fn;
  }

  std::vector<FitDataset::Example> examples = data.examples();
  if (options.repr == ValueReprKind::Tabular) {
    TabularRepr tab;
    for (const auto& ex : examples) {
      auto& cell = tab.cells[ex.prefix];
      cell.first += ex.target;
      cell.second += 1;
    }
    fn.repr = std::move(tab);
    return fn;
  }

  // Linear: accumulate the normal equations over all examples.
  std::size_t dim = linear_features(spec.vocab_size, spec.horizon,
                                    examples.front().prefix)
                        .size();
  std::vector<std::vector<double>> a(dim, std::vector<double>(dim, 0.0));
  std::vector<double> b(dim, 0.0);
  for (const auto& ex : examples) {
    std::vector<double> phi =
        linear_features(spec.vocab_size, spec.horizon, ex.prefix);
    for (std::size_t i = 0; i < dim; ++i) {
      b[i] += phi[i] * ex.target;
      for (std::size_t j = 0; j <= i; ++j) a[i][j] += phi[i] * phi[j];
    }
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j) a[i][j] = a[j][i];

  LinearRepr lin;
  lin.vocab_size = spec.vocab_size;
  lin.horizon = spec.horizon;
  lin.r_max = spec.r_max;
  lin.weights = solve_ridge(std::move(a), std::move(b), options.ridge_lambda);
  fn.repr = std::move(lin);
  return fn;
}

ValueFn expected_fit(const MdpSpec& spec, const RewardSpec& reward,
                     const PolicyFn& pi, std::int64_t node_cap) {
  oracle::PolicyEvaluation eval = oracle::policy_values(spec, reward, pi, node_cap);

  TabularRepr tab;
  // Keep exactly the prefixes reachable under pi (positive probability).
  std::function<void(const Prefix&)> walk = [&](const Prefix& s) {
    tab.cells[s] = {eval.v.at(s), 1};
    if (spec.is_terminal(s)) return;
    std::vector<double> row = oracle::policy_row(spec, pi, s);
    for (TokenId a = 0; a < spec.vocab_size; ++a) {
      if (row[a] <= 0.0) continue;
      Prefix child = s;
      child.tokens.push_back(a);
      walk(child);
    }
  };
  for (std::int32_t pid = 0; pid < spec.num_prompts(); ++pid)
    walk(spec.initial_state(pid));

  ValueFn fn;
  fn.repr = std::move(tab);
  return fn;
}

}  // namespace iro

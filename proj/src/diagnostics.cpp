#include "boatmatch/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "boatmatch/error.hpp"

namespace boatmatch {

double quantile(std::vector<double> values, double prob) {
  if (values.empty()) throw InputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

// Row indices per chain id, in order, all truncated to the shortest chain.
std::vector<std::vector<Eigen::Index>> chain_rows(const Eigen::MatrixXd& draws,
                                                  const std::vector<int>& chain_ids) {
  if (static_cast<Eigen::Index>(chain_ids.size()) != draws.rows()) {
    throw InputError("chain_ids length does not match the number of draws");
  }
  std::map<int, std::vector<Eigen::Index>> by_chain;
  for (std::size_t i = 0; i < chain_ids.size(); ++i) {
    by_chain[chain_ids[i]].push_back(static_cast<Eigen::Index>(i));
  }
  std::vector<std::vector<Eigen::Index>> chains;
  std::size_t shortest = by_chain.empty() ? 0 : SIZE_MAX;
  for (auto& [id, rows] : by_chain) {
    shortest = std::min(shortest, rows.size());
    chains.push_back(std::move(rows));
  }
  for (auto& rows : chains) rows.resize(shortest);
  return chains;
}

double sample_variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / (static_cast<double>(v.size()) - 1.0);
}

}  // namespace

std::vector<DimensionStat> split_rhat(const Eigen::MatrixXd& draws,
                                      const std::vector<int>& chain_ids) {
  const auto chains = chain_rows(draws, chain_ids);
  std::vector<DimensionStat> out(static_cast<std::size_t>(draws.cols()));
  const std::size_t length = chains.empty() ? 0 : chains.front().size();
  const std::size_t offset = length % 2;  // odd chains lose their first draw
  const std::size_t half = (length - offset) / 2;
  if (half < 2) {
    for (auto& s : out) s = {std::numeric_limits<double>::quiet_NaN(), true};
    return out;
  }
  const double n = static_cast<double>(half);
  for (Eigen::Index d = 0; d < draws.cols(); ++d) {
    std::vector<double> means;
    std::vector<double> variances;
    for (const auto& rows : chains) {
      for (std::size_t h = 0; h < 2; ++h) {
        std::vector<double> seq;
        seq.reserve(half);
        for (std::size_t i = 0; i < half; ++i) seq.push_back(draws(rows[offset + h * half + i], d));
        double m = 0.0;
        for (double x : seq) m += x;
        means.push_back(m / n);
        variances.push_back(sample_variance(seq));
      }
    }
    double w = 0.0;
    for (double v : variances) w += v;
    w /= static_cast<double>(variances.size());
    auto& stat = out[static_cast<std::size_t>(d)];
    if (!(w > 0.0)) {
      stat = {std::numeric_limits<double>::quiet_NaN(), true};
      continue;
    }
    const double b = n * sample_variance(means);
    const double v_hat = (n - 1.0) / n * w + b / n;
    stat = {std::sqrt(v_hat / w), false};
  }
  return out;
}

std::vector<DimensionStat> split_rhat(const PosteriorDraws& draws) {
  return split_rhat(draws.draws, draws.chain_ids);
}

std::vector<DimensionStat> effective_sample_size(const Eigen::MatrixXd& draws,
                                                 const std::vector<int>& chain_ids) {
  const auto chains = chain_rows(draws, chain_ids);
  std::vector<DimensionStat> out(static_cast<std::size_t>(draws.cols()));
  const std::size_t n = chains.empty() ? 0 : chains.front().size();
  if (n < 8) {
    for (auto& s : out) s = {0.0, true};
    return out;
  }
  const std::size_t m = chains.size();
  const double nd = static_cast<double>(n);
  const double total = nd * static_cast<double>(m);

  for (Eigen::Index d = 0; d < draws.cols(); ++d) {
    std::vector<std::vector<double>> centered(m);
    std::vector<double> chain_mean(m), chain_var(m);
    for (std::size_t c = 0; c < m; ++c) {
      auto& x = centered[c];
      x.reserve(n);
      double mean = 0.0;
      for (auto r : chains[c]) {
        x.push_back(draws(r, d));
        mean += draws(r, d);
      }
      mean /= nd;
      for (double& v : x) v -= mean;
      chain_mean[c] = mean;
    }
    // Biased autocovariance averaged over chains.
    auto mean_acov = [&](std::size_t lag) {
      double acc = 0.0;
      for (const auto& x : centered) {
        double s = 0.0;
        for (std::size_t i = 0; i + lag < n; ++i) s += x[i] * x[i + lag];
        acc += s / nd;
      }
      return acc / static_cast<double>(m);
    };
    for (std::size_t c = 0; c < m; ++c) {
      double s = 0.0;
      for (double v : centered[c]) s += v * v;
      chain_var[c] = s / (nd - 1.0);
    }
    double mean_var = 0.0;
    for (double v : chain_var) mean_var += v;
    mean_var /= static_cast<double>(m);
    double var_plus = mean_var * (nd - 1.0) / nd;
    if (m > 1) var_plus += sample_variance(chain_mean);

    auto& stat = out[static_cast<std::size_t>(d)];
    if (!(var_plus > 0.0)) {
      stat = {0.0, true};
      continue;
    }
    auto rho = [&](std::size_t lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };

    std::vector<double> rho_hat(n, 0.0);
    rho_hat[0] = 1.0;
    double rho_even = 1.0;
    double rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    std::size_t s = 1;
    while (s + 4 < n && rho_even + rho_odd > 0.0) {
      rho_even = rho(s + 1);
      rho_odd = rho(s + 2);
      if (rho_even + rho_odd >= 0.0) {
        rho_hat[s + 1] = rho_even;
        rho_hat[s + 2] = rho_odd;
      }
      s += 2;
    }
    const std::size_t max_s = s;
    if (rho_even > 0.0 && max_s + 1 < n) rho_hat[max_s + 1] = rho_even;
    // Initial monotone sequence.
    for (std::size_t t = 1; t + 3 <= max_s; t += 2) {
      if (rho_hat[t + 1] + rho_hat[t + 2] > rho_hat[t - 1] + rho_hat[t]) {
        rho_hat[t + 1] = (rho_hat[t - 1] + rho_hat[t]) / 2.0;
        rho_hat[t + 2] = rho_hat[t + 1];
      }
    }
    double tau = -1.0;
    for (std::size_t t = 0; t < max_s; ++t) tau += 2.0 * rho_hat[t];
    if (max_s + 1 < n) tau += rho_hat[max_s + 1];
    const double ess = tau > 0.0 ? total / tau : total;
    stat = {std::min(ess, total), false};
  }
  return out;
}

std::vector<DimensionStat> effective_sample_size(const PosteriorDraws& draws) {
  return effective_sample_size(draws.draws, draws.chain_ids);
}

std::vector<ColumnSummary> summarize(const Eigen::MatrixXd& draws) {
  if (draws.rows() == 0) throw InputError("cannot summarise an empty draw set");
  std::vector<ColumnSummary> out;
  for (Eigen::Index d = 0; d < draws.cols(); ++d) {
    std::vector<double> col(draws.col(d).data(), draws.col(d).data() + draws.rows());
    ColumnSummary s;
    double sum = 0.0;
    // Summation over a sorted copy keeps the mean independent of row order.
    std::vector<double> sorted = col;
    std::sort(sorted.begin(), sorted.end());
    for (double x : sorted) sum += x;
    s.mean = sum / static_cast<double>(sorted.size());
    double ss = 0.0;
    for (double x : sorted) ss += (x - s.mean) * (x - s.mean);
    s.sd = sorted.size() > 1 ? std::sqrt(ss / (static_cast<double>(sorted.size()) - 1.0)) : 0.0;
    s.q05 = quantile(sorted, 0.05);
    s.q95 = quantile(sorted, 0.95);
    out.push_back(s);
  }
  return out;
}

DiagnosticsReport diagnose(const PosteriorDraws& draws, double threshold) {
  DiagnosticsReport r;
  r.threshold = threshold;
  r.rhat = split_rhat(draws);
  r.ess = effective_sample_size(draws);
  r.summaries = summarize(draws.draws);
  bool any_defined = false;
  bool all_below = true;
  for (const auto& s : r.rhat) {
    if (s.degenerate) continue;
    any_defined = true;
    if (!(s.value < threshold)) all_below = false;
  }
  r.converged = any_defined && all_below;
  return r;
}

}  // namespace boatmatch

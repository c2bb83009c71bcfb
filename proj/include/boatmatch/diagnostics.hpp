#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "boatmatch/sampler.hpp"

namespace boatmatch {

struct ColumnSummary {
  double mean = 0.0;
  double sd = 0.0;
  double q05 = 0.0;
  double q95 = 0.0;
};

struct DimensionStat {
  double value = 0.0;
  bool degenerate = false;
};

// Linear interpolation between order statistics (R type 7).
double quantile(std::vector<double> values, double prob);

// Classic Brooks-Gelman-Rubin R-hat over split chains. Odd-length chains drop
// their first draw. Chains shorter than 4 or with zero within-half variance
// give a degenerate dimension.
std::vector<DimensionStat> split_rhat(const Eigen::MatrixXd& draws,
                                      const std::vector<int>& chain_ids);
std::vector<DimensionStat> split_rhat(const PosteriorDraws& draws);

// Multi-chain autocorrelation ESS with Geyer's initial positive sequence,
// capped at the total draw count. Chains shorter than 8 or constant columns
// are degenerate with ESS 0.
std::vector<DimensionStat> effective_sample_size(const Eigen::MatrixXd& draws,
                                                 const std::vector<int>& chain_ids);
std::vector<DimensionStat> effective_sample_size(const PosteriorDraws& draws);

std::vector<ColumnSummary> summarize(const Eigen::MatrixXd& draws);

struct DiagnosticsReport {
  std::vector<DimensionStat> rhat;
  std::vector<DimensionStat> ess;
  std::vector<ColumnSummary> summaries;
  double threshold = 1.1;
  // Every non-degenerate dimension has rhat < threshold and at least one
  // dimension is non-degenerate.
  bool converged = false;
};

DiagnosticsReport diagnose(const PosteriorDraws& draws, double threshold = 1.1);

}  // namespace boatmatch

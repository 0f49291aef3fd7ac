#pragma once

// Two-factor analysis of the customer-size x window-size experiment.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace nextdest::stats {

/// I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

double f_cdf(double f, double df1, double df2);
/// Upper tail P(F > f).
double f_sf(double f, double df1, double df2);

/// P(Q <= q) for the studentized range of k means with df error degrees of
/// freedom, by numerical integration.
double studentized_range_cdf(double q, double k, double df);
double studentized_range_sf(double q, double k, double df);

struct Observation {
  double cs = 0.0;
  double ws = 0.0;
  double value = 0.0;
};

struct AnovaTerm {
  std::string name;
  double ss = 0.0;
  double df = 0.0;
  std::optional<double> f;
  std::optional<double> p;
  double eta_sq = 0.0;
  double partial_eta_sq = 0.0;
};

/// Terms CS, WS, CSxWS, Error in that order.
struct AnovaTable {
  std::vector<AnovaTerm> terms;
  double ss_total = 0.0;
  double df_total = 0.0;

  const AnovaTerm& term(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Regression ANOVA with one centred linear code per factor (levels must be
/// equally spaced) and their product for the interaction; sequential sums of
/// squares, F against the residual.
AnovaTable anova_linear(std::span<const Observation> observations);

/// Cell means indexed [cs level][ws level].
struct CellMeans {
  std::vector<double> cs_levels;
  std::vector<double> ws_levels;
  std::vector<std::vector<double>> values;
};

/// anova_linear over a 3 x 3 table of cell means.
AnovaTable anova(const CellMeans& cells);

enum class Factor { CustomerSize, WindowSize };

struct TukeyComparison {
  double level_a = 0.0;
  double level_b = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  double df = 0.0;
  double t_ratio = 0.0;
  double p_adjusted = 1.0;

  nlohmann::json to_json() const;
};

/// All pairwise level comparisons of one factor, pooled error taken from the
/// additive two-way model on the cell means (df = (a-1)(b-1)). Adjusted p
/// from the studentized range distribution.
std::vector<TukeyComparison> tukey(const CellMeans& cells, Factor factor = Factor::CustomerSize);

}  // namespace nextdest::stats

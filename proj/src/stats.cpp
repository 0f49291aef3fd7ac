#include "nextdest/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "nextdest/core.hpp"

namespace nextdest::stats {

namespace {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta: continued fraction did not converge");
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// Composite Simpson on [lo, hi] with an even number of intervals.
template <typename F>
double simpson(F&& f, double lo, double hi, int intervals) {
  const double h = (hi - lo) / intervals;
  double sum = f(lo) + f(hi);
  for (int i = 1; i < intervals; ++i) sum += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

// Distribution of the range of k independent standard normals: P(R <= r).
double normal_range_cdf(double r, double k) {
  if (r <= 0.0) return 0.0;
  const double integral = simpson(
      [&](double z) {
        const double inner = normal_cdf(z) - normal_cdf(z - r);
        return inner > 0.0 ? normal_pdf(z) * std::pow(inner, k - 1.0) : 0.0;
      },
      -8.5, 8.5 + r, 800);
  return std::min(1.0, k * integral);
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error("incomplete beta: a and b must be positive");
  if (std::isnan(x)) throw Error("incomplete beta: x is NaN");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double f_cdf(double f, double df1, double df2) {
  if (f <= 0.0) return 0.0;
  if (std::isinf(f)) return 1.0;
  return regularized_incomplete_beta(df1 / 2.0, df2 / 2.0, df1 * f / (df1 * f + df2));
}

double f_sf(double f, double df1, double df2) {
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  return regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f));
}

double studentized_range_cdf(double q, double k, double df) {
  if (k < 2.0) throw Error("studentized range: need at least 2 means");
  if (df < 1.0) throw Error("studentized range: df must be at least 1");
  if (q <= 0.0) return 0.0;
  if (std::isinf(q)) return 1.0;
  // s = sqrt(chi2_df / df); integrate P(R <= q s) against the density of s.
  const double half = df / 2.0;
  const double log_norm = half * std::log(df) - std::lgamma(half) - (half - 1.0) * std::log(2.0);
  const double spread = 9.0 / std::sqrt(df);
  const double lo = std::max(0.0, 1.0 - spread);
  const double hi = 1.0 + spread;
  const double value = simpson(
      [&](double s) {
        if (s <= 0.0) return df == 1.0 ? std::exp(log_norm) * normal_range_cdf(0.0, k) : 0.0;
        const double density =
            std::exp(log_norm + (df - 1.0) * std::log(s) - half * s * s);
        return density * normal_range_cdf(q * s, k);
      },
      lo, hi, 600);
  return std::clamp(value, 0.0, 1.0);
}

double studentized_range_sf(double q, double k, double df) {
  return 1.0 - studentized_range_cdf(q, k, df);
}

const AnovaTerm& AnovaTable::term(const std::string& name) const {
  for (const auto& t : terms)
    if (t.name == name) return t;
  throw Error("no ANOVA term named '" + name + "'");
}

nlohmann::json AnovaTable::to_json() const {
  auto rows = nlohmann::json::array();
  for (const auto& t : terms) {
    rows.push_back({{"term", t.name},
                    {"ss", t.ss},
                    {"df", t.df},
                    {"F", t.f ? nlohmann::json(*t.f) : nlohmann::json()},
                    {"p", t.p ? nlohmann::json(*t.p) : nlohmann::json()},
                    {"eta_sq", t.eta_sq},
                    {"partial_eta_sq", t.partial_eta_sq}});
  }
  return {{"terms", rows}, {"ss_total", ss_total}, {"df_total", df_total}};
}

namespace {

std::vector<double> linear_codes(std::span<const Observation> obs, double Observation::*field,
                                 const char* factor) {
  std::vector<double> levels;
  for (const auto& o : obs) levels.push_back(o.*field);
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  if (levels.size() < 2)
    throw Error(std::string("anova: factor ") + factor + " needs at least 2 levels");
  const double step = levels[1] - levels[0];
  for (std::size_t i = 2; i < levels.size(); ++i)
    if (std::abs((levels[i] - levels[i - 1]) - step) > 1e-9 * std::abs(step))
      throw Error(std::string("anova: levels of ") + factor + " are not equally spaced");
  double centre = 0.0;
  for (double l : levels) centre += l;
  centre /= static_cast<double>(levels.size());
  std::vector<double> codes;
  for (const auto& o : obs) codes.push_back((o.*field - centre) / step);
  return codes;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

AnovaTable anova_linear(std::span<const Observation> obs) {
  const std::size_t n = obs.size();
  if (n < 5) throw Error("anova: need at least 5 observations for 4 model terms");
  std::vector<double> y;
  for (const auto& o : obs) y.push_back(o.value);
  const auto cs = linear_codes(obs, &Observation::cs, "CS");
  const auto ws = linear_codes(obs, &Observation::ws, "WS");
  std::vector<double> inter(n);
  for (std::size_t i = 0; i < n; ++i) inter[i] = cs[i] * ws[i];

  // Sequential sums of squares from Gram-Schmidt on [1, CS, WS, CSxWS].
  std::vector<std::vector<double>> basis;
  std::vector<double> residual = y;
  std::array<double, 4> ss{};
  std::array<double, 4> df{};
  const std::vector<std::vector<double>> columns = {std::vector<double>(n, 1.0), cs, ws, inter};
  for (std::size_t j = 0; j < columns.size(); ++j) {
    std::vector<double> q = columns[j];
    for (const auto& b : basis) {
      const double coef = dot(b, q) / dot(b, b);
      for (std::size_t i = 0; i < n; ++i) q[i] -= coef * b[i];
    }
    const double norm = dot(q, q);
    if (norm <= 1e-12 * dot(columns[j], columns[j])) continue;  // aliased term
    const double proj = dot(q, residual) / norm;
    ss[j] = proj * proj * norm;
    df[j] = 1.0;
    for (std::size_t i = 0; i < n; ++i) residual[i] -= proj * q[i];
    basis.push_back(std::move(q));
  }

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double ss_total = 0.0, scale = 0.0;
  for (double v : y) {
    ss_total += (v - mean) * (v - mean);
    scale += v * v;
  }
  const double ss_error = dot(residual, residual);
  const double df_error = static_cast<double>(n) - 1.0 - df[1] - df[2] - df[3];
  const double ms_error = ss_error / df_error;
  const bool constant = ss_total <= 1e-24 * std::max(scale, 1e-300);

  AnovaTable table;
  table.ss_total = constant ? 0.0 : ss_total;
  table.df_total = static_cast<double>(n) - 1.0;
  const char* names[] = {"", "CS", "WS", "CSxWS"};
  for (std::size_t j = 1; j < 4; ++j) {
    AnovaTerm t;
    t.name = names[j];
    t.df = df[j];
    t.ss = constant ? 0.0 : ss[j];
    if (!constant && t.df > 0) {
      if (ms_error > 0.0) {
        t.f = (t.ss / t.df) / ms_error;
        t.p = f_sf(*t.f, t.df, df_error);
      } else if (t.ss > 0.0) {
        t.f = std::numeric_limits<double>::infinity();
        t.p = 0.0;
      }
    }
    t.eta_sq = table.ss_total > 0 ? t.ss / table.ss_total : 0.0;
    t.partial_eta_sq = t.ss + ss_error > 0 ? t.ss / (t.ss + ss_error) : 0.0;
    table.terms.push_back(t);
  }
  AnovaTerm err;
  err.name = "Error";
  err.ss = constant ? 0.0 : ss_error;
  err.df = df_error;
  table.terms.push_back(err);
  return table;
}

AnovaTable anova(const CellMeans& cells) {
  if (cells.cs_levels.size() != 3 || cells.ws_levels.size() != 3 || cells.values.size() != 3)
    throw Error("anova: expected a 3x3 grid of cell means");
  std::vector<Observation> obs;
  for (std::size_t i = 0; i < 3; ++i) {
    if (cells.values[i].size() != 3) throw Error("anova: expected a 3x3 grid of cell means");
    for (std::size_t j = 0; j < 3; ++j)
      obs.push_back({cells.cs_levels[i], cells.ws_levels[j], cells.values[i][j]});
  }
  return anova_linear(obs);
}

nlohmann::json TukeyComparison::to_json() const {
  return {{"level_a", level_a}, {"level_b", level_b}, {"estimate", estimate},
          {"se", se},           {"df", df},           {"t_ratio", t_ratio},
          {"p_adjusted", p_adjusted}};
}

std::vector<TukeyComparison> tukey(const CellMeans& cells, Factor factor) {
  const std::size_t rows = cells.cs_levels.size(), cols = cells.ws_levels.size();
  if (rows < 2 || cols < 2 || cells.values.size() != rows)
    throw Error("tukey: need a rectangular grid with at least 2 levels per factor");
  for (const auto& r : cells.values)
    if (r.size() != cols) throw Error("tukey: grid is not rectangular");

  // Orient so that `a` indexes the compared factor.
  const bool by_cs = factor == Factor::CustomerSize;
  const std::size_t a = by_cs ? rows : cols, b = by_cs ? cols : rows;
  auto value = [&](std::size_t i, std::size_t j) {
    return by_cs ? cells.values[i][j] : cells.values[j][i];
  };
  const auto& levels = by_cs ? cells.cs_levels : cells.ws_levels;

  std::vector<double> mean_a(a, 0.0), mean_b(b, 0.0);
  double grand = 0.0;
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      mean_a[i] += value(i, j) / static_cast<double>(b);
      mean_b[j] += value(i, j) / static_cast<double>(a);
      grand += value(i, j) / static_cast<double>(a * b);
    }
  double sse = 0.0;
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j) {
      const double r = value(i, j) - mean_a[i] - mean_b[j] + grand;
      sse += r * r;
    }
  const double df = static_cast<double>((a - 1) * (b - 1));
  const double mse = sse / df;
  const double se = std::sqrt(mse * 2.0 / static_cast<double>(b));

  std::vector<TukeyComparison> out;
  for (std::size_t i = 0; i < a; ++i) {
    for (std::size_t j = i + 1; j < a; ++j) {
      TukeyComparison c;
      c.level_a = levels[i];
      c.level_b = levels[j];
      c.estimate = mean_a[i] - mean_a[j];
      c.se = se;
      c.df = df;
      if (c.estimate == 0.0) {
        c.t_ratio = 0.0;
        c.p_adjusted = 1.0;
      } else if (se == 0.0) {
        c.t_ratio = std::copysign(std::numeric_limits<double>::infinity(), c.estimate);
        c.p_adjusted = 0.0;
      } else {
        c.t_ratio = c.estimate / se;
        c.p_adjusted = studentized_range_sf(std::abs(c.t_ratio) * std::numbers::sqrt2,
                                            static_cast<double>(a), df);
      }
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace nextdest::stats

#include "gazeprobe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace gazeprobe::stats {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_inputs(std::span<const double> x, std::span<const double> y, std::string_view op) {
  if (x.size() != y.size()) {
    throw ShapeError(std::string(op) + ": series lengths differ (" + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()) + ")");
  }
  if (x.size() < 3) {
    throw InsufficientSample(std::string(op) + ": need at least 3 pairs, got " + std::to_string(x.size()));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw NumericError(std::string(op) + ": non-finite input at index " + std::to_string(i));
    }
  }
}

CorrelationResult degenerate_result(Metric m, std::size_t n) { return {m, kNaN, kNaN, n, true}; }

// Product-moment r with the t-approximation p-value; shared by pearson and spearman.
CorrelationResult product_moment(Metric metric, std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  const double nd = static_cast<double>(n);
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / nd;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / nd;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return degenerate_result(metric, n);
  const double r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  double p = 0.0;
  if (std::abs(r) < 1.0) {
    const double df = nd - 2.0;
    const double t = r * std::sqrt(df / ((1.0 - r) * (1.0 + r)));
    p = student_t_two_sided_p(t, df);
  }
  return {metric, r, p, n, false};
}

}  // namespace

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Pearson: return "pearson";
    case Metric::Spearman: return "spearman";
    case Metric::Kendall: return "kendall";
  }
  return "?";
}

std::optional<Metric> parse_metric(std::string_view name) {
  for (auto m : {Metric::Pearson, Metric::Spearman, Metric::Kendall}) {
    if (metric_name(m) == name) return m;
  }
  return std::nullopt;
}

CorrelationResult pearson(std::span<const double> x, std::span<const double> y) {
  check_inputs(x, y, "pearson");
  return product_moment(Metric::Pearson, x, y);
}

std::vector<double> rank_average_ties(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && x[order[j]] == x[order[i]]) ++j;
    // Positions i..j-1 hold ranks i+1..j; their mean is (i+1+j)/2.
    const double avg = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
  check_inputs(x, y, "spearman");
  const auto rx = rank_average_ties(x);
  const auto ry = rank_average_ties(y);
  return product_moment(Metric::Spearman, rx, ry);
}

CorrelationResult kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  check_inputs(x, y, "kendall");
  const std::size_t n = x.size();
  long long concordant = 0, discordant = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int sx = (x[i] > x[j]) - (x[i] < x[j]);
      const int sy = (y[i] > y[j]) - (y[i] < y[j]);
      const int s = sx * sy;
      if (s > 0) {
        ++concordant;
      } else if (s < 0) {
        ++discordant;
      }
    }
  }

  struct TieSums {
    double pairs = 0.0;   // sum t(t-1)/2
    double v = 0.0;       // sum t(t-1)(2t+5)
    double v1 = 0.0;      // sum t(t-1)
    double v2 = 0.0;      // sum t(t-1)(t-2)
  };
  auto tie_sums = [](std::span<const double> s) {
    std::vector<double> sorted(s.begin(), s.end());
    std::ranges::sort(sorted);
    TieSums out;
    std::size_t i = 0;
    while (i < sorted.size()) {
      std::size_t j = i + 1;
      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      out.pairs += t * (t - 1.0) / 2.0;
      out.v += t * (t - 1.0) * (2.0 * t + 5.0);
      out.v1 += t * (t - 1.0);
      out.v2 += t * (t - 1.0) * (t - 2.0);
      i = j;
    }
    return out;
  };
  const TieSums tx = tie_sums(x);
  const TieSums ty = tie_sums(y);
  const double nd = static_cast<double>(n);
  const double n0 = nd * (nd - 1.0) / 2.0;
  if (n0 == tx.pairs || n0 == ty.pairs) return degenerate_result(Metric::Kendall, n);

  const double s = static_cast<double>(concordant - discordant);
  const double tau = std::clamp(s / std::sqrt((n0 - tx.pairs) * (n0 - ty.pairs)), -1.0, 1.0);

  const double var = (nd * (nd - 1.0) * (2.0 * nd + 5.0) - (tx.v + ty.v)) / 18.0 +
                     (tx.v1 * ty.v1) / (2.0 * nd * (nd - 1.0)) +
                     (tx.v2 * ty.v2) / (9.0 * nd * (nd - 1.0) * (nd - 2.0));
  const double p = var > 0.0 ? normal_two_sided_p(s / std::sqrt(var)) : kNaN;
  return {Metric::Kendall, tau, p, n, false};
}

CorrelationResult correlate(Metric metric, std::span<const double> x, std::span<const double> y) {
  switch (metric) {
    case Metric::Pearson: return pearson(x, y);
    case Metric::Spearman: return spearman(x, y);
    case Metric::Kendall: return kendall_tau_b(x, y);
  }
  throw Error("correlate: unknown metric");
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double md = m;
    const double m2 = 2.0 * md;
    double aa = md * (b - md) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + md) * (qab + md) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("regularized_incomplete_beta: continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw NumericError("regularized_incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw NumericError("student_t_two_sided_p: df must be positive");
  if (std::isinf(t)) return 0.0;
  const double p = regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return std::clamp(p, 0.0, 1.0);
}

double normal_two_sided_p(double z) { return std::clamp(std::erfc(std::abs(z) / std::sqrt(2.0)), 0.0, 1.0); }

}  // namespace gazeprobe::stats

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "gazeprobe/errors.hpp"

namespace gazeprobe::stats {

enum class Metric { Pearson, Spearman, Kendall };

std::string_view metric_name(Metric m);
std::optional<Metric> parse_metric(std::string_view name);

// coefficient and p_value are NaN when degenerate (a constant series).
struct CorrelationResult {
  Metric metric = Metric::Spearman;
  double coefficient = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool degenerate = false;

  bool significant(double alpha = 0.05) const { return !degenerate && p_value < alpha; }
};

class InsufficientSample : public Error {
 public:
  using Error::Error;
};

// All three require equal lengths and n >= 3 (InsufficientSample otherwise).
CorrelationResult pearson(std::span<const double> x, std::span<const double> y);
CorrelationResult spearman(std::span<const double> x, std::span<const double> y);
CorrelationResult kendall_tau_b(std::span<const double> x, std::span<const double> y);
CorrelationResult correlate(Metric metric, std::span<const double> x, std::span<const double> y);

// 1-based ranks; ties share the mean of their rank block.
std::vector<double> rank_average_ties(std::span<const double> x);

// I_x(a, b) by Lentz's continued fraction.
double regularized_incomplete_beta(double a, double b, double x);
// Two-sided tail P(|T| >= |t|) for Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);
double normal_two_sided_p(double z);

}  // namespace gazeprobe::stats

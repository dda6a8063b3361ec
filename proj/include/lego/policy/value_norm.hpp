#pragma once

#include <cmath>
#include <span>

namespace lego::policy {

/// Running mean/variance of value targets. The critic regresses normalised
/// returns; values reported to the learner are de-normalised.
class ValueNormalizer {
 public:
  void update(std::span<const double> targets) {
    if (targets.empty()) return;
    double m = 0.0;
    for (double t : targets) m += t;
    m /= static_cast<double>(targets.size());
    double v = 0.0;
    for (double t : targets) v += (t - m) * (t - m);
    v /= static_cast<double>(targets.size());
    const double n = static_cast<double>(targets.size());
    const double total = count_ + n;
    const double delta = m - mean_;
    mean_ += delta * n / total;
    m2_ += v * n + delta * delta * count_ * n / total;
    count_ = total;
  }

  double mean() const { return count_ > 0 ? mean_ : 0.0; }
  double variance() const { return count_ > 0 ? m2_ / count_ : 1.0; }
  double stddev() const { return std::sqrt(std::max(variance(), 1e-8)); }
  double count() const { return count_; }

  double normalize(double x) const { return enabled_ ? (x - mean()) / stddev() : x; }
  double denormalize(double x) const { return enabled_ ? x * stddev() + mean() : x; }

  bool enabled() const { return enabled_; }
  void set_enabled(bool on) { enabled_ = on; }

  void restore(double mean, double m2, double count) {
    mean_ = mean;
    m2_ = m2;
    count_ = count;
  }
  double m2() const { return m2_; }

 private:
  double mean_ = 0.0;
  double m2_ = 0.0;
  double count_ = 0.0;
  bool enabled_ = true;
};

}  // namespace lego::policy

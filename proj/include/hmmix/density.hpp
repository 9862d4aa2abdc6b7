#pragma once

#include <string>

namespace hmmix {

/// Standardised (zero-mean, unit-variance) noise density f.
class DensityFamily {
 public:
  enum class Kind { Gaussian, StudentT };

  static DensityFamily gaussian() { return DensityFamily(Kind::Gaussian, 0.0); }
  /// Student-t with `nu` > 2 degrees of freedom, rescaled to unit variance.
  static DensityFamily student_t(double nu);
  /// "gaussian" or "student-t:<nu>".
  static DensityFamily parse(const std::string& text);

  Kind kind() const { return kind_; }
  double nu() const { return nu_; }
  std::string name() const;

  double log_pdf(double u) const;
  /// d/du log f(u).
  double dlog_pdf(double u) const;

 private:
  DensityFamily(Kind kind, double nu);

  Kind kind_;
  double nu_;
  double log_norm_ = 0.0;  // log normalising constant
  double scale2_ = 1.0;    // squared rescaling of the raw t variate
};

}  // namespace hmmix

#include "hmmix/density.hpp"

#include <cmath>
#include <numbers>

#include "hmmix/errors.hpp"

namespace hmmix {

DensityFamily::DensityFamily(Kind kind, double nu) : kind_(kind), nu_(nu) {
  if (kind_ == Kind::Gaussian) {
    log_norm_ = -0.5 * std::log(2.0 * std::numbers::pi);
    return;
  }
  // X = c T with c^2 = (nu - 2) / nu has unit variance.
  scale2_ = (nu - 2.0) / nu;
  log_norm_ = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
              0.5 * std::log(nu * std::numbers::pi) - 0.5 * std::log(scale2_);
}

DensityFamily DensityFamily::student_t(double nu) {
  if (!(nu > 2.0) || !std::isfinite(nu))
    throw DomainError("student-t degrees of freedom must be finite and > 2");
  return DensityFamily(Kind::StudentT, nu);
}

DensityFamily DensityFamily::parse(const std::string& text) {
  if (text == "gaussian") return gaussian();
  const std::string prefix = "student-t:";
  if (text.rfind(prefix, 0) == 0) {
    std::size_t used = 0;
    double nu = 0.0;
    try {
      nu = std::stod(text.substr(prefix.size()), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != text.size() - prefix.size())
      throw ConfigError("bad degrees of freedom in '" + text + "'");
    return student_t(nu);
  }
  throw ConfigError("unknown density family '" + text + "' (expected gaussian or student-t:<nu>)");
}

std::string DensityFamily::name() const {
  if (kind_ == Kind::Gaussian) return "gaussian";
  char buf[48];
  std::snprintf(buf, sizeof buf, "student-t:%g", nu_);
  return buf;
}

double DensityFamily::log_pdf(double u) const {
  if (kind_ == Kind::Gaussian) return log_norm_ - 0.5 * u * u;
  return log_norm_ - 0.5 * (nu_ + 1.0) * std::log1p(u * u / (scale2_ * nu_));
}

double DensityFamily::dlog_pdf(double u) const {
  if (kind_ == Kind::Gaussian) return -u;
  const double a = scale2_ * nu_;
  return -(nu_ + 1.0) * u / (a + u * u);
}

}  // namespace hmmix

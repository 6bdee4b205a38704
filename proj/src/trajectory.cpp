#include "oldroyd/trajectory.hpp"

#include "oldroyd/errors.hpp"

#include <cmath>

namespace oldroyd::steppers {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kCgm:
      return "cgm";
    case Scheme::kNlg1:
      return "nlg1";
    case Scheme::kNlg2:
      return "nlg2";
  }
  return "?";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "cgm" || s == "CGM") return Scheme::kCgm;
  if (s == "nlg1" || s == "NLG1" || s == "I") return Scheme::kNlg1;
  if (s == "nlg2" || s == "NLG2" || s == "II") return Scheme::kNlg2;
  throw InvalidArgument("unknown scheme '" + s + "' (expected cgm, nlg1 or nlg2)");
}

int Trajectory::index_of(double t) const {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (std::abs(times[i] - t) <= 1e-9 * std::max(1.0, std::abs(t))) return static_cast<int>(i);
  }
  throw InvalidArgument("no snapshot at t = " + std::to_string(t));
}

std::shared_ptr<const fe::QuadratureBackend> Trajectory::backend(int degree) const {
  if (!fine) throw InvalidArgument("trajectory without a space");
  if (!stacked()) return std::make_shared<const fe::QuadratureBackend>(fine, degree);
  return std::make_shared<const fe::QuadratureBackend>(coarse, fine, ancestor, degree);
}

}  // namespace oldroyd::steppers

#include "oldroyd/quadrature.hpp"

#include "oldroyd/errors.hpp"

#include <string>

namespace oldroyd::fe {

namespace {

void add_orbit3(TriangleRule& r, double w, double a) {
  const double b = 0.5 * (1.0 - a);
  r.points.push_back({a, b, b});
  r.points.push_back({b, a, b});
  r.points.push_back({b, b, a});
  r.weights.insert(r.weights.end(), 3, w);
}

void add_orbit6(TriangleRule& r, double w, double a, double b) {
  const double c = 1.0 - a - b;
  r.points.push_back({a, b, c});
  r.points.push_back({a, c, b});
  r.points.push_back({b, a, c});
  r.points.push_back({b, c, a});
  r.points.push_back({c, a, b});
  r.points.push_back({c, b, a});
  r.weights.insert(r.weights.end(), 6, w);
}

// Dunavant rules, constants re-solved from the moment equations to full
// double precision.
TriangleRule make_degree6() {
  TriangleRule r;
  r.degree = 6;
  add_orbit3(r, 0.11678627572637936603, 0.50142650965817915742);
  add_orbit3(r, 0.050844906370206816921, 0.87382197101699554332);
  add_orbit6(r, 0.082851075618373575194, 0.053145049844816947353, 0.31035245103378440542);
  return r;
}

TriangleRule make_degree8() {
  TriangleRule r;
  r.degree = 8;
  r.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  r.weights.push_back(0.14431560767778716825);
  add_orbit3(r, 0.095091634267284624794, 0.081414823414553687942);
  add_orbit3(r, 0.10321737053471825028, 0.65886138449647958676);
  add_orbit3(r, 0.032458497623198080311, 0.89890554336593804908);
  add_orbit6(r, 0.027230314174434994265, 0.0083947774099576053372, 0.26311282963463811342);
  return r;
}

}  // namespace

const TriangleRule& triangle_rule(int degree) {
  static const TriangleRule six = make_degree6();
  static const TriangleRule eight = make_degree8();
  switch (degree) {
    case 6:
      return six;
    case 8:
      return eight;
    default:
      throw InvalidArgument("no triangle rule of degree " + std::to_string(degree));
  }
}

}  // namespace oldroyd::fe

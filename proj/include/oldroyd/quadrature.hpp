#pragma once

#include <array>
#include <vector>

namespace oldroyd::fe {

/// Symmetric quadrature rule on a triangle in barycentric form. Weights sum
/// to one; multiply by the triangle area to integrate.
struct TriangleRule {
  int degree = 0;
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
};

/// Available degrees: 6 (12 points) and 8 (16 points).
const TriangleRule& triangle_rule(int degree);

}  // namespace oldroyd::fe

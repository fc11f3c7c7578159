#pragma once

#include <vector>

#include "dpmd/core.hpp"
#include "dpmd/mirror.hpp"

namespace dpmd {

// One direction's expected iterate displacement due to DP noise: the closed
// form eta sigma sqrt((2/pi) sum_i (a_i / lambda_i)^2) against a Monte-Carlo
// estimate of E|<-eta H~^{-1} b, v>| with b ~ N(0, sigma^2 I).
struct StabilityReport {
  int direction_id = 0;
  Vector direction;
  double analytic = 0.0;
  double monte_carlo = 0.0;
  int samples = 0;
  double relative_error = 0.0;
};

// a_i = <v, v_i> in the map's eigenbasis. Throws unless ||v|| = 1 (1e-10).
double analytic_shift(const QuadraticMirrorMap& map, double eta, double sigma,
                      const Vector& v);

double monte_carlo_shift(const QuadraticMirrorMap& map, double eta, double sigma,
                         const Vector& v, int samples, RngStream& rng);

// One report per direction: the map's eigenvector directions first, then the
// supplied ones. Directions must be unit-normalized.
std::vector<StabilityReport> stability_sweep(const QuadraticMirrorMap& map,
                                             double eta, double sigma,
                                             const std::vector<Vector>& directions,
                                             int samples, RngStream& rng);

}  // namespace dpmd

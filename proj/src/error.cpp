#include "retstat/error.hpp"

#include <sstream>

namespace retstat {

namespace {
std::string describe(const char* what, double x) {
  std::ostringstream os;
  os.precision(17);
  os << what << " at x = " << x;
  return os.str();
}
}  // namespace

PointOnSingularSet::PointOnSingularSet(double x)
    : Error(describe("point on singular set", x)), point_(x) {}

OrbitHitsSingularSet::OrbitHitsSingularSet(std::uint64_t step, double x)
    : Error(describe(("orbit hits singular set at step " + std::to_string(step)).c_str(), x)),
      step_(step) {}

Censored::Censored(std::uint64_t cutoff)
    : Error("no return within " + std::to_string(cutoff) + " steps"), cutoff_(cutoff) {}

NoConvergence::NoConvergence(std::uint64_t iterations)
    : Error("no convergence after " + std::to_string(iterations) + " iterations") {}

}  // namespace retstat

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace retstat {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class UnknownMap : public Error {
 public:
  explicit UnknownMap(const std::string& name) : Error("unknown map: " + name) {}
};

/// A point lies on the singular set and no branch domain claims it.
class PointOnSingularSet : public Error {
 public:
  explicit PointOnSingularSet(double x);
  double point() const { return point_; }

 private:
  double point_;
};

class OrbitHitsSingularSet : public Error {
 public:
  OrbitHitsSingularSet(std::uint64_t step, double x);
  std::uint64_t step() const { return step_; }

 private:
  std::uint64_t step_;
};

/// No return within the step cutoff.
class Censored : public Error {
 public:
  explicit Censored(std::uint64_t cutoff);
  std::uint64_t cutoff() const { return cutoff_; }

 private:
  std::uint64_t cutoff_;
};

class ResolutionExceeded : public Error {
 public:
  using Error::Error;
};

class NoVisit : public Error {
 public:
  using Error::Error;
};

class PullbackDegenerate : public Error {
 public:
  using Error::Error;
};

class NoConvergence : public Error {
 public:
  explicit NoConvergence(std::uint64_t iterations);
};

class InsufficientDecay : public Error {
 public:
  using Error::Error;
};

class TooFewEntries : public Error {
 public:
  using Error::Error;
};

class AllCensored : public Error {
 public:
  AllCensored() : Error("every sample is censored") {}
};

class TooManyCensored : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace retstat

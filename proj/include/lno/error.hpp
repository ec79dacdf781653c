#pragma once

#include <stdexcept>
#include <string>

namespace lno {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor extents do not line up for an operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Invalid model / training / dataset configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A caller broke an operation's precondition (non-scalar loss, bad grid...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// relative_l2 against a target whose norm is zero.
class DegenerateTargetError : public Error {
 public:
  using Error::Error;
};

// An evaluation point landed on a kernel pole.
class PoleCollisionError : public Error {
 public:
  PoleCollisionError(const std::string& what, std::size_t in_channel,
                     std::size_t out_channel, std::size_t pole)
      : Error(what), in_channel_(in_channel), out_channel_(out_channel), pole_(pole) {}

  std::size_t in_channel() const { return in_channel_; }
  std::size_t out_channel() const { return out_channel_; }
  std::size_t pole() const { return pole_; }

 private:
  std::size_t in_channel_;
  std::size_t out_channel_;
  std::size_t pole_;
};

// A forward pass produced NaN or Inf from finite inputs.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// The adaptive integrator could not advance.
class IntegrationError : public Error {
 public:
  IntegrationError(const std::string& what, double time) : Error(what), time_(time) {}
  double time() const { return time_; }

 private:
  double time_;
};

// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace lno

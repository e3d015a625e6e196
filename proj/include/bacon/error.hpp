#pragma once

#include <stdexcept>
#include <string>

namespace bacon {

// All library failures derive from Error so callers (the CLI in particular)
// can map them onto a nonzero exit status with one catch clause.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// A scene whose widest-baseline disparity cannot be represented by the network.
class DisparityOverflow : public Error {
 public:
  using Error::Error;
};

class CorruptFrame : public Error {
 public:
  CorruptFrame(const std::string& frame, const std::string& field, const std::string& what)
      : Error("corrupt frame '" + frame + "' field '" + field + "': " + what),
        frame_(frame),
        field_(field) {}

  const std::string& frame() const { return frame_; }
  const std::string& field() const { return field_; }

 private:
  std::string frame_;
  std::string field_;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace bacon

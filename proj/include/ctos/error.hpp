#pragma once

#include <stdexcept>
#include <string>

namespace ctos {

enum class ErrorKind {
  Config,      // invalid configuration field
  Parse,       // malformed input file
  Dimension,   // shape mismatch
  Input,       // degenerate or non-finite numeric input
  Split,       // stratified split impossible
  MissingHead, // no head for requested task
  Divergence,  // non-finite training loss
  Evaluation,  // empty evaluation set
  Selection,   // order selection failed
  Io,          // filesystem failure
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class TrainingDivergence : public Error {
 public:
  TrainingDivergence(int task_id, int epoch, int step);

  int task_id() const noexcept { return task_id_; }
  int epoch() const noexcept { return epoch_; }
  int step() const noexcept { return step_; }

 private:
  int task_id_;
  int epoch_;
  int step_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace ctos

#include "ctos/error.hpp"

namespace ctos {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Dimension: return "dimension";
    case ErrorKind::Input: return "input";
    case ErrorKind::Split: return "split";
    case ErrorKind::MissingHead: return "missing-head";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Evaluation: return "evaluation";
    case ErrorKind::Selection: return "selection";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

TrainingDivergence::TrainingDivergence(int task_id, int epoch, int step)
    : Error(ErrorKind::Divergence, "non-finite loss on task " + std::to_string(task_id) +
                                       " at epoch " + std::to_string(epoch) + ", step " +
                                       std::to_string(step)),
      task_id_(task_id),
      epoch_(epoch),
      step_(step) {}

}  // namespace ctos

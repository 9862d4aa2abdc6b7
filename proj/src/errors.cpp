#include "hmmix/errors.hpp"

namespace hmmix {

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error("validation",
            [&] {
              std::string msg = "invalid parameters:";
              for (const auto& v : violations) msg += " [" + v + "]";
              return msg;
            }()),
      violations_(std::move(violations)) {}

void require_valid(std::vector<std::string> violations) {
  if (!violations.empty()) throw ValidationError(std::move(violations));
}

}  // namespace hmmix

#pragma once

#include <stdexcept>
#include <string>

namespace hdte {

/// File-system and input-format failures; the CLI maps these to exit code 4.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hdte

#pragma once

#include <stdexcept>
#include <string>

namespace wfio {

// Exit-code taxonomy used by the CLI: InputError -> 1, InternalError -> 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : InputError {
  ParseError(std::string file_, std::size_t line_, const std::string& what_)
      : InputError(file_ + ":" + std::to_string(line_) + ": " + what_),
        file(std::move(file_)),
        line(line_) {}

  std::string file;
  std::size_t line;
};

struct InternalError : std::logic_error {
  using std::logic_error::logic_error;
};

}  // namespace wfio

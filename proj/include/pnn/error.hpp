#pragma once

#include <stdexcept>
#include <string>

namespace pnn {

// Base of every error thrown by the library. `code()` is a short stable
// token (e.g. "raster.truncated") that the CLI prints for scripts to match on.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& what)
        : std::runtime_error(what), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace pnn

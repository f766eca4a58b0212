#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kpir {

/// Raised for malformed or inconsistent input data. The CLI maps it to exit code 2.
class data_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Raised for invalid parameters or missing arguments. The CLI maps it to exit code 1.
class usage_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

inline data_error line_error(const std::string& source, std::size_t line, const std::string& what)
{
    return data_error(source + ":" + std::to_string(line) + ": " + what);
}

}  // namespace kpir

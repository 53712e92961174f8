#pragma once

#include <stdexcept>
#include <string>

namespace qsep {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorCategory {
    Usage = 1,
    Io = 2,
    Numeric = 3,
    Provider = 4,
};

class Error : public std::runtime_error {
  public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    ErrorCategory category() const { return category_; }
    int exit_code() const { return static_cast<int>(category_); }

  private:
    ErrorCategory category_;
};

[[noreturn]] inline void throw_usage(const std::string& msg) { throw Error(ErrorCategory::Usage, msg); }
[[noreturn]] inline void throw_io(const std::string& msg) { throw Error(ErrorCategory::Io, msg); }
[[noreturn]] inline void throw_numeric(const std::string& msg) { throw Error(ErrorCategory::Numeric, msg); }
[[noreturn]] inline void throw_provider(const std::string& msg) { throw Error(ErrorCategory::Provider, msg); }

} // namespace qsep

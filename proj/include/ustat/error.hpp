#pragma once

#include <stdexcept>
#include <string>

namespace ustat {

// Process exit codes used by the CLI; library errors carry the matching code.
enum class ExitCode : int {
    Ok = 0,
    InvalidArgs = 2,
    CapExceeded = 3,
    NumericalFailure = 4,
};

class Error : public std::runtime_error {
  public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

  private:
    ExitCode code_;
};

struct InvalidArgsError : Error {
    explicit InvalidArgsError(const std::string& what) : Error(ExitCode::InvalidArgs, what) {}
};

struct CapExceededError : Error {
    explicit CapExceededError(const std::string& what) : Error(ExitCode::CapExceeded, what) {}
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& what) : Error(ExitCode::NumericalFailure, what) {}
};

// Least-squares system too ill-conditioned to solve.
struct SingularDesignError : NumericalError {
    explicit SingularDesignError(const std::string& what) : NumericalError(what) {}
};

// First-order projection variance indistinguishable from zero; ratios undefined.
struct DegenerateProjectionError : NumericalError {
    explicit DegenerateProjectionError(const std::string& what) : NumericalError(what) {}
};

struct IoError : Error {
    explicit IoError(const std::string& what) : Error(ExitCode::InvalidArgs, what) {}
};

}  // namespace ustat

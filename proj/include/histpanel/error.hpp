#pragma once

#include <stdexcept>
#include <string>

namespace hp {

/// Broad failure class; maps one-to-one onto CLI exit codes.
enum class ErrorCategory {
    Estimator = 1,
    Data = 2,
    Config = 3,
};

/**
 * @brief Single exception type used across the engine.
 *
 * `code()` is the machine-readable error name (e.g. "MissingCell",
 * "RankDeficient") and `module()` names the component that raised it.
 */
class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, std::string module, std::string code, const std::string& message);

    ErrorCategory category() const noexcept { return category_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& code() const noexcept { return code_; }
    int exit_code() const noexcept { return static_cast<int>(category_); }

private:
    ErrorCategory category_;
    std::string module_;
    std::string code_;
};

[[noreturn]] void throw_data(const std::string& module, const std::string& code, const std::string& message);
[[noreturn]] void throw_estimator(const std::string& module, const std::string& code, const std::string& message);
[[noreturn]] void throw_config(const std::string& module, const std::string& code, const std::string& message);

}  // namespace hp

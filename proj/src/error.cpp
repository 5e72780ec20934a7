#include "histpanel/error.hpp"

namespace hp {

Error::Error(ErrorCategory category, std::string module, std::string code, const std::string& message)
    : std::runtime_error(code + ": " + message),
      category_(category),
      module_(std::move(module)),
      code_(std::move(code)) {}

void throw_data(const std::string& module, const std::string& code, const std::string& message) {
    throw Error(ErrorCategory::Data, module, code, message);
}

void throw_estimator(const std::string& module, const std::string& code, const std::string& message) {
    throw Error(ErrorCategory::Estimator, module, code, message);
}

void throw_config(const std::string& module, const std::string& code, const std::string& message) {
    throw Error(ErrorCategory::Config, module, code, message);
}

}  // namespace hp

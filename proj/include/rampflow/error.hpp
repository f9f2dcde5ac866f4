#pragma once

#include <stdexcept>
#include <string>

namespace rampflow {

/// Broad classes of failure; the CLI maps these onto exit codes.
enum class ErrorCategory {
    input,     // malformed or inconsistent input (schema, config, geometry)
    numerical  // model or numerical failure (domain, fit, stability)
};

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

#define RAMPFLOW_DEFINE_ERROR(Name, Category)                                   \
    class Name : public Error {                                                 \
    public:                                                                     \
        explicit Name(const std::string& what) : Error(ErrorCategory::Category, what) {} \
    };

// Input errors.
RAMPFLOW_DEFINE_ERROR(SchemaError, input)
RAMPFLOW_DEFINE_ERROR(IntegrityError, input)
RAMPFLOW_DEFINE_ERROR(RangeError, input)
RAMPFLOW_DEFINE_ERROR(GeometryError, input)
RAMPFLOW_DEFINE_ERROR(ValidationError, input)

// Numerical / model errors.
RAMPFLOW_DEFINE_ERROR(DomainError, numerical)
RAMPFLOW_DEFINE_ERROR(ParameterError, numerical)
RAMPFLOW_DEFINE_ERROR(RankError, numerical)
RAMPFLOW_DEFINE_ERROR(FitError, numerical)
RAMPFLOW_DEFINE_ERROR(StabilityError, numerical)
RAMPFLOW_DEFINE_ERROR(EstimationError, numerical)

#undef RAMPFLOW_DEFINE_ERROR

}  // namespace rampflow

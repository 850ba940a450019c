#pragma once

#include <stdexcept>
#include <string>

namespace codecforge {

// Base of every error thrown by the library. The concrete subclasses name the
// failure class so callers (and tests) can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CODECFORGE_DEFINE_ERROR(Name)      \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  };

CODECFORGE_DEFINE_ERROR(DimensionError)
CODECFORGE_DEFINE_ERROR(IndexError)
CODECFORGE_DEFINE_ERROR(EmptyReductionError)
CODECFORGE_DEFINE_ERROR(ConfigError)
CODECFORGE_DEFINE_ERROR(BatchSizeError)
CODECFORGE_DEFINE_ERROR(InputError)
CODECFORGE_DEFINE_ERROR(UndefinedMetricError)
CODECFORGE_DEFINE_ERROR(NumericError)
CODECFORGE_DEFINE_ERROR(GenerationError)
CODECFORGE_DEFINE_ERROR(ParseError)
CODECFORGE_DEFINE_ERROR(GraphError)

#undef CODECFORGE_DEFINE_ERROR

}  // namespace codecforge

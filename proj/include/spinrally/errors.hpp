#pragma once

#include <stdexcept>
#include <string>

namespace spinrally {

/// Base for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SPINRALLY_DEFINE_ERROR(Name)            \
  class Name : public Error {                   \
   public:                                      \
    using Error::Error;                         \
    explicit Name() : Error(#Name) {}           \
  }

SPINRALLY_DEFINE_ERROR(NotApproaching);
SPINRALLY_DEFINE_ERROR(OutsideRacket);
SPINRALLY_DEFINE_ERROR(NonFiniteAction);
SPINRALLY_DEFINE_ERROR(DivergedUpdate);
SPINRALLY_DEFINE_ERROR(ParseError);
SPINRALLY_DEFINE_ERROR(NonMonotonicTime);
SPINRALLY_DEFINE_ERROR(TooFewSamples);
SPINRALLY_DEFINE_ERROR(LeadingGap);
SPINRALLY_DEFINE_ERROR(IllConditioned);
SPINRALLY_DEFINE_ERROR(InvalidInbound);
SPINRALLY_DEFINE_ERROR(ConfigError);
SPINRALLY_DEFINE_ERROR(CheckpointError);

#undef SPINRALLY_DEFINE_ERROR

}  // namespace spinrally

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace citypulse {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define CITYPULSE_ERROR(Name)            \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

CITYPULSE_ERROR(ParseError);
CITYPULSE_ERROR(InvalidArgument);
CITYPULSE_ERROR(ConfigError);
CITYPULSE_ERROR(UnreadableStream);
CITYPULSE_ERROR(SchemaMismatch);
CITYPULSE_ERROR(WarehouseUnavailable);
CITYPULSE_ERROR(StorageFull);
CITYPULSE_ERROR(CorruptSegment);
CITYPULSE_ERROR(InsufficientData);
CITYPULSE_ERROR(EmptyWindow);

#undef CITYPULSE_ERROR

}  // namespace citypulse

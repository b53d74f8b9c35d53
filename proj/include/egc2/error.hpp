#pragma once

#include <stdexcept>
#include <string>

namespace egc2 {

// Base for every error raised by the library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IngestionError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct AlignmentError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
struct ContractError : Error { using Error::Error; };
struct LookupError : Error { using Error::Error; };
struct DivergenceError : Error { using Error::Error; };
struct SchemaError : Error { using Error::Error; };
struct GraphError : Error { using Error::Error; };

}  // namespace egc2

#pragma once

#include <stdexcept>
#include <string>

namespace dept {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidSpecError : Error { using Error::Error; };
struct InvalidInputError : Error { using Error::Error; };
struct InvalidConfigError : Error { using Error::Error; };
struct DegenerateFeatureError : Error { using Error::Error; };
struct MissingDataError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct CorruptCacheError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

} // namespace dept

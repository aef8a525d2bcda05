#include "urw/error.hpp"

#include <utility>

namespace urw {

SchemaError::SchemaError(std::string field, const std::string& what)
    : DataError("field '" + field + "': " + what), field_(std::move(field)), detail_(what) {}

}  // namespace urw

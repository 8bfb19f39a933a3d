#include "exnet/error.hpp"

namespace exnet {

void throw_shape_error(const std::string& what) { throw ShapeError("shape error: " + what); }

}  // namespace exnet

#include "sgap/common.hpp"

namespace sgap {

const char* version_string() { return kVersion; }

}  // namespace sgap

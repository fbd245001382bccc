#pragma once

#include <spdlog/spdlog.h>

namespace lexipse {

/// Applies LEXIPSE_LOG (error | info | debug) to the default logger. Unset or
/// unknown values leave the level at info.
void init_logging();

}  // namespace lexipse

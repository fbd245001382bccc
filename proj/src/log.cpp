#include "lexipse/log.hpp"

#include <cstdlib>
#include <string>

namespace lexipse {

void init_logging() {
    const char* env = std::getenv("LEXIPSE_LOG");
    const std::string level = env ? env : "";
    if (level == "error") {
        spdlog::set_level(spdlog::level::err);
    } else if (level == "debug") {
        spdlog::set_level(spdlog::level::debug);
    } else {
        spdlog::set_level(spdlog::level::info);
    }
}

}  // namespace lexipse

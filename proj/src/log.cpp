// SPDX-License-Identifier: Apache-2.0
#include "misbind/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <string_view>

namespace misbind {

void init_logging()
{
    auto logger = spdlog::get("misbind");
    if (!logger) {
        logger = spdlog::stderr_logger_mt("misbind");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
    }

    const char* env = std::getenv("MISBIND_LOG_LEVEL");
    const std::string_view level = env ? env : "warn";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::warn);
}

} // namespace misbind

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <spdlog/spdlog.h>

namespace misbind {

/// Applies MISBIND_LOG_LEVEL (error|warn|info|debug, default warn) and routes
/// all logging to stderr.
void init_logging();

} // namespace misbind

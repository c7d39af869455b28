#pragma once

#include <spdlog/spdlog.h>

namespace deepattr {

/// Shared stderr logger. Level comes from DEEPATTR_LOG (trace|debug|info|warn|error|off),
/// default warn.
spdlog::logger& log();

}  // namespace deepattr

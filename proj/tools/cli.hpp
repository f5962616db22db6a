#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace owdetr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

/// Environment variable naming the default output root.
inline constexpr const char* kOutEnv = "OWDETR_OUT";

/// Entry point shared by the executable and the tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace owdetr::cli

#pragma once

#include <filesystem>
#include <string>

#include "crimematch/csv.hpp"

namespace test_support {

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::path(CRIMEMATCH_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write(const std::filesystem::path& p, const std::string& text) { crimematch::csv::write_file(p, text); }

}  // namespace test_support

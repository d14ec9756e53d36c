#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "icr/binio.hpp"

namespace testutil {

// Fresh per-process scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("icr_unit_" + std::to_string(::getpid())) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string write(const std::filesystem::path& p, const std::string& content) {
  icr::write_file_atomic(p.string(), content);
  return p.string();
}

}  // namespace testutil

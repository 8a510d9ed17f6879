#pragma once

#include <filesystem>

#include "oodp/env_sim.hpp"

namespace oodp {

/// 8-bit RGB PNG via libpng. Throws std::runtime_error on I/O failure.
void write_png(const env::Image& img, const std::filesystem::path& path);
env::Image read_png(const std::filesystem::path& path);

}  // namespace oodp

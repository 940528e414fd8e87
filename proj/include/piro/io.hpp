#pragma once

#include <filesystem>
#include <string>

namespace piro {

// Writes content to path via a temp file + rename so readers never observe a
// partial file and repeated runs overwrite cleanly.
void atomic_write(const std::filesystem::path& path, const std::string& content);

std::string read_file(const std::filesystem::path& path);

// Worker-thread cap from the PIRO_THREADS environment variable; >= 1.
unsigned worker_thread_cap();

}  // namespace piro

#pragma once

#include <string>

namespace synthdial {

// Whole file as bytes; throws IoError.
std::string read_file(const std::string& path);

// Writes through `<path>.tmp.<pid>` and renames over `path`, so readers never
// observe a partial file. Throws IoError.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace synthdial

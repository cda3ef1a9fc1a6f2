#pragma once

// Minimal SHA-1 for run-manifest content hashes.

#include <cstdint>
#include <string>
#include <vector>

namespace styleset {

std::string sha1_hex(const unsigned char* data, std::size_t len);
std::string sha1_hex(const std::string& data);
std::string sha1_file_hex(const std::string& path);

}  // namespace styleset

#pragma once

#include <string>

namespace ebcbf {

/// SHA-1 of "blob <size>\0" + content, as printed by `git hash-object`.
std::string git_blob_sha1(const std::string& content);
std::string file_blob_sha1(const std::string& path);

std::string read_file(const std::string& path);

}  // namespace ebcbf

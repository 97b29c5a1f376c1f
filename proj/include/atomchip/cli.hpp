#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace atomchip::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInternalError = 1;
inline constexpr int kInputError = 2;     // parse, validation, unknown names, bad flags
inline constexpr int kIoError = 3;
inline constexpr int kNoTrap = 4;         // minimization or regime failures
inline constexpr int kTimestepError = 5;

// Runs one command. `args` excludes the program name, e.g.
// {"trap", "--layout", "builtin:z-trap-10", "--out", "z.txt"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);

// Writes `content` to `path` through a temporary file in the same directory
// and a rename. Throws IoError.
void write_atomically(const std::string& path, const std::string& content);

}  // namespace atomchip::cli

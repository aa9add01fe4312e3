#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace spate::cli {

/// Runs one `spate` invocation; args exclude the program name.
/// Returns 0 on success, 1 on bad input, 2 on I/O or format errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

}  // namespace spate::cli

#pragma once

#include <string>

#include "gpgrad/state.hpp"

namespace gpgrad {

// Binary state container, little-endian:
//   0   magic "GPST"
//   4   u32 format version (1)
//   8   f64 Lx
//   16  f64 Ly
//   24  u32 n (cells per axis)
//   28  u8  diagonal split tag (0 = lower-left to upper-right)
//   29  3 zero bytes
//   32  u64 coefficient count (2 * interior nodes)
//   40  coefficients, f64 each, interleaved Re/Im in row-major (y, x) node order
inline constexpr std::uint8_t kSplitTagLowerLeftUpperRight = 0;

void save_state(const std::string& path, const State& u);

/// Loads a state onto the given mesh. The header's mesh parameters must match
/// exactly, otherwise IoError is thrown.
State load_state(const std::string& path, const std::shared_ptr<const Mesh>& mesh);

}  // namespace gpgrad

#include "gpgrad/statefile.hpp"

#include <cstring>
#include <fstream>

#include "gpgrad/errors.hpp"

namespace gpgrad {

namespace {

static_assert(sizeof(double) == 8);

template <typename T>
void put(std::ofstream& os, T value) {
  // Host order is little-endian on every supported target.
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::ifstream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

void save_state(const std::string& path, const State& u) {
  if (!u.mesh) throw IoError("save_state: state has no mesh");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("save_state: cannot open '" + path + "' for writing");
  os.write("GPST", 4);
  put<std::uint32_t>(os, 1);
  put<double>(os, u.mesh->Lx);
  put<double>(os, u.mesh->Ly);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(u.mesh->n));
  put<std::uint8_t>(os, kSplitTagLowerLeftUpperRight);
  const char zeros[3] = {};
  os.write(zeros, 3);
  put<std::uint64_t>(os, static_cast<std::uint64_t>(u.coeffs.size()));
  os.write(reinterpret_cast<const char*>(u.coeffs.data()),
           static_cast<std::streamsize>(sizeof(double)) * u.coeffs.size());
  if (!os) throw IoError("save_state: write to '" + path + "' failed");
}

State load_state(const std::string& path, const std::shared_ptr<const Mesh>& mesh) {
  if (!mesh) throw IoError("load_state: null mesh");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_state: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "GPST", 4) != 0)
    throw IoError("load_state: '" + path + "' is not a state file");
  const auto version = get<std::uint32_t>(is);
  if (version != 1)
    throw IoError("load_state: unsupported format version " + std::to_string(version));
  const double Lx = get<double>(is);
  const double Ly = get<double>(is);
  const auto n = get<std::uint32_t>(is);
  const auto split = get<std::uint8_t>(is);
  char pad[3];
  is.read(pad, 3);
  const auto count = get<std::uint64_t>(is);
  if (Lx != mesh->Lx || Ly != mesh->Ly || static_cast<int>(n) != mesh->n)
    throw IoError("load_state: state was saved on a different mesh (Lx=" + std::to_string(Lx) +
                  ", Ly=" + std::to_string(Ly) + ", n=" + std::to_string(n) + ")");
  if (split != kSplitTagLowerLeftUpperRight)
    throw IoError("load_state: unsupported diagonal split tag");
  if (count != static_cast<std::uint64_t>(mesh->num_dofs()))
    throw IoError("load_state: coefficient count mismatch");
  Vec coeffs(static_cast<Index>(count));
  is.read(reinterpret_cast<char*>(coeffs.data()),
          static_cast<std::streamsize>(sizeof(double) * count));
  if (!is) throw IoError("load_state: truncated payload in '" + path + "'");
  return State(std::move(coeffs), mesh);
}

}  // namespace gpgrad

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ggcf/graph.hpp"
#include "ggcf/model.hpp"

namespace ggcf {

// Binary container:
//   8 bytes  magic "GGCFCKPT"
//   u32      format version
//   u64      header length, then a UTF-8 JSON header (shapes, layers, flags,
//            hashes, ID tables, run config)
//   f64 x 3  gamma, gamma', lambda
//   f64 ...  euclid_user, euclid_item, tangent_user, tangent_item (row-major)
// All integers and doubles little-endian.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ParamSet params;
  int layers = 0;
  AblationFlags flags;
  std::vector<RawId> user_ids;
  std::vector<RawId> item_ids;
  std::string config_hash;
  std::string split_hash;
  // Serialized run configuration, kept verbatim.
  std::string config_json;
  int epoch = 0;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws IncompatibleError on bad magic, unknown version, or inconsistent
// shapes.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ggcf

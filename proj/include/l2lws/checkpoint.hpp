#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>

#include <json.hpp>

#include "l2lws/model.hpp"

namespace l2lws::model {

// Binary checkpoint, all integers little-endian:
//
//   bytes 0..7   magic "L2LWSCKP"
//   u32          format version (kCheckpointVersion)
//   u64 + bytes  metadata JSON (UTF-8); holds "model_config" plus whatever
//                the caller adds (vocabulary, label names, method, seed)
//   u64          tensor count
//   per tensor:  u64 + bytes name, u64 rank, rank x u64 dims,
//                numel x IEEE-754 binary64 bit patterns
//
// Values are stored bit-for-bit, so save -> load round-trips exactly.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  DualModel model;
  nlohmann::json metadata;
};

void write_checkpoint(std::ostream& out, const DualModel& model,
                      nlohmann::json metadata = nlohmann::json::object());
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::string& path, const DualModel& model,
                     nlohmann::json metadata = nlohmann::json::object());
Checkpoint load_checkpoint(const std::string& path);

}  // namespace l2lws::model

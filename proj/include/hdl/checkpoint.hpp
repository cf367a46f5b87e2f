#pragma once

#include <cstdint>
#include <filesystem>
#include <variant>

#include "hdl/models.hpp"

namespace hdl {

using AnyModel = std::variant<EmbedMlpModel<float>, HdlnModel<float>>;

struct LoadedCheckpoint {
  AnyModel model;
  std::uint64_t seed = 0;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "HDLNCKPT", u32 version, u64 schema hash, u32 model kind,
// u32 dims[3], u64 seed, then every parameter tensor as little-endian f32
// in parameters() order.
void save_checkpoint(const std::filesystem::path& path, const AnyModel& model, std::uint64_t seed);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

ModelKind kind_of(const AnyModel& model);
std::size_t input_dim(const AnyModel& model);

}  // namespace hdl

#pragma once

#include <filesystem>

#include "hlab/denoiser.hpp"

namespace hlab {

// Checkpoint layout, all fields little-endian:
//
//   char[4]  magic "HLDN"
//   u32      format version (1)
//   u32 x 9  image_size, channels (3), views, hidden, hidden_layers,
//            time_dim, pose_dim (4), ref_dim, mv_dim
//   u32      T
//   f64 x 2  beta_start, beta_end
//   u32      block count
//   per block, in param_layout() order:
//     u32 rows, u32 cols, f32 x rows*cols (row-major)
inline constexpr char kCheckpointMagic[4] = {'H', 'L', 'D', 'N'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const DenoiserParams& p);
DenoiserParams load_checkpoint(const std::filesystem::path& path);

}  // namespace hlab

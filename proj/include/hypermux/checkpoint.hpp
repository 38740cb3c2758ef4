#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "hypermux/graph.hpp"
#include "hypermux/hgnn.hpp"

namespace hypermux {

// Named parameter matrices. Keys: layer<l>.W.<d>, layer<l>.alpha,
// layer<l>.beta (l from 1) and discriminator.Q.
using Checkpoint = std::map<std::string, Matrix>;

Checkpoint make_checkpoint(const ModelParams& params, const Matrix& discriminator);

struct RestoredParams {
  ModelParams model;
  Matrix discriminator;
};
RestoredParams restore_params(const Checkpoint& checkpoint);

// Text layout:
//   hypermux-checkpoint 1
//   entries <K>
//   then K blocks of "<name> <rows> <cols>" followed by <rows> lines of
//   space-separated values in shortest round-trip decimal form.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hypermux

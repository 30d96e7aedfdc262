#pragma once

#include <string>

#include "nfs/heads.hpp"
#include "nfs/nfs_module.hpp"

namespace nfs {

// Versioned binary checkpoints. Parameter arrays, BN running statistics and
// the build seed round-trip bit-exactly.
void save_checkpoint(const NfsModule& module, const std::string& path);
void save_checkpoint(const ComposedModel& model, const std::string& path);

NfsModule load_nfs_checkpoint(const std::string& path);
ComposedModel load_composed_checkpoint(const std::string& path);

}  // namespace nfs

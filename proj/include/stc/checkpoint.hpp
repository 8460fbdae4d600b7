#pragma once

#include "stc/serialize.hpp"
#include "stc/stcnet.hpp"

namespace stc {

// Model checkpoint: magic "STCW", u32 version, u32 header length + JSON
// header {config, variant, seed, epoch}, u32 record count, then one named
// tensor record per parameter and per batch-norm running buffer, in the fixed
// parameters()/buffers() order. Encode(decode(x)) is byte-identical.
std::vector<uint8_t> checkpoint_encode(STCNetModel& model, int epoch);
STCNetModel checkpoint_decode(const std::vector<uint8_t>& bytes, int* epoch_out = nullptr);

void save_checkpoint(STCNetModel& model, int epoch, const std::filesystem::path& path);
STCNetModel load_checkpoint(const std::filesystem::path& path, int* epoch_out = nullptr);

}  // namespace stc

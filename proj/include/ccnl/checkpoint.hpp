#pragma once

#include <string>
#include <string_view>

#include "ccnl/model.hpp"

namespace ccnl {

// Layout:
//   "CCNL-CHECKPOINT 1\n"
//   <header byte length, decimal>"\n"
//   <UTF-8 JSON header: config, ablation, per-tower vocabularies, tensor list [{name, shape, dtype}]>
//   <little-endian IEEE-754 f64 payloads in header order>
//   <CRC-32 of every preceding byte, 4 bytes little-endian>
inline constexpr std::string_view kCheckpointMagic = "CCNL-CHECKPOINT 1\n";

std::string serialize_checkpoint(const CcnlModel& model);
CcnlModel deserialize_checkpoint(std::string_view bytes, const std::string& source_name = "<memory>");

/// Written to a temporary file and renamed into place.
void save_checkpoint(const CcnlModel& model, const std::string& path);
/// Verifies the checksum (ChecksumError) and every tensor shape (DimensionError).
CcnlModel load_checkpoint(const std::string& path);

}  // namespace ccnl

#pragma once

#include <filesystem>
#include <iosfwd>

#include "creep/training.hpp"

namespace creep {

inline constexpr int kCheckpointFormatVersion = 1;

/// Layout: an 8-byte little-endian header length, a UTF-8 JSON header
/// (format version, kind, tensor table with shape, dtype and byte offset,
/// configs, scalers, best epoch), then the raw little-endian float32 payloads
/// in table order.
void write_checkpoint(const ModelCheckpoint& checkpoint, std::ostream& out);
void save_checkpoint(const ModelCheckpoint& checkpoint, const std::filesystem::path& destination);

/// FormatError for malformed files, IoFailure when the file cannot be read.
ModelCheckpoint read_checkpoint(std::istream& in);
ModelCheckpoint load_checkpoint(const std::filesystem::path& source);

}  // namespace creep

#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>

#include "armaid/evalbench.hpp"
#include "armaid/trainer.hpp"

namespace armaid {

inline constexpr std::uint32_t kFormatVersion = 1;

enum class PersistErrorCode { Io, BadMagic, VersionMismatch, Checksum, ShapeMismatch, HeaderParse };

std::string to_string(PersistErrorCode code);

class PersistError : public std::runtime_error {
 public:
  PersistError(PersistErrorCode code, const std::string& message);
  [[nodiscard]] PersistErrorCode code() const { return code_; }

 private:
  PersistErrorCode code_;
};

// Container: 4-byte magic, u32 version, u32 header length, key=value header,
// payload (u32 tensor count, then per tensor: u32 dtype, u32 ndims, u64 dims,
// little-endian data), u32 CRC-32 of the payload.

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string encode_suite(const TestSuite& suite);
TestSuite decode_suite(std::string_view bytes);
void save_suite(const TestSuite& suite, const std::string& path);
TestSuite load_suite(const std::string& path);

/// Columns window_index, mean_error, lr, wall_seconds.
void write_trace_csv(std::ostream& out, const TrainTrace& trace);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view bytes);

}  // namespace armaid

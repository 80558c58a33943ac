#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

namespace dynlm {

// FIPS 180-4 SHA-256. Streaming interface so large files hash without
// loading fully into memory.
class Sha256 {
 public:
  Sha256();
  void update(const void* data, std::size_t len);
  // Finalizes and returns lowercase hex. The object must not be reused.
  std::string hex_digest();

 private:
  void process_block(const std::uint8_t* block);

  std::uint32_t h_[8];
  std::uint8_t buffer_[64];
  std::size_t buffered_ = 0;
  std::uint64_t total_bits_ = 0;
};

std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& s);
// Throws DataError if the file cannot be read.
std::string sha256_file_hex(const std::string& path);

}  // namespace dynlm

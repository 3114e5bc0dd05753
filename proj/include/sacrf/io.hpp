#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>

#include "sacrf/tensor.hpp"

namespace sacrf {

/// Malformed or unreadable input file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// .ten layout: "TEN1", u32 rank, rank x u32 dims, then little-endian f64
// values in row-major order.
void write_ten(std::ostream& os, const Tensor& t);
Tensor read_ten(std::istream& is);
void save_ten(const std::filesystem::path& path, const Tensor& t);
Tensor load_ten(const std::filesystem::path& path);

/**
 * Writes a 1 x H x W depth map (meters) as a binary 16-bit PGM with
 * millimeter samples, big-endian, maxval 65535. Values are rounded and
 * clamped to [0, 65535].
 */
void save_depth_pgm(const std::filesystem::path& path, const Tensor& depth);
/// Reads a 16-bit PGM back into meters (1 x H x W).
Tensor load_depth_pgm(const std::filesystem::path& path);

/// `key = value` lines; `#` starts a comment. Later keys override earlier.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(std::istream& is);
KeyValues load_key_values(const std::filesystem::path& path);
void write_key_values(std::ostream& os, const KeyValues& kv);

// Strict value parsers for config entries; the whole string must parse.
// Each throws std::invalid_argument naming `key` on failure.
bool parse_bool(const std::string& key, const std::string& value);
long long parse_int(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
/// %.17g, so that parse_real(format_real(x)) == x.
std::string format_real(double x);

}  // namespace sacrf

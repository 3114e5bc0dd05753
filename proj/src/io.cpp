#include "sacrf/io.hpp"

#include <cstdio>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace sacrf {

namespace {

constexpr char kMagic[4] = {'T', 'E', 'N', '1'};
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(".ten: truncated header");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double d) {
  const auto bits = std::bit_cast<std::uint64_t>(d);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

void write_ten(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(os, v);
}

Tensor read_ten(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError(".ten: bad magic");
  }
  const std::uint32_t rank = get_u32(is);
  if (rank > kMaxRank) {
    throw FormatError(".ten: rank " + std::to_string(rank) + " too large");
  }
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(is);
  const std::size_t n = shape_numel(shape);
  std::vector<unsigned char> raw(n * 8);
  if (!is.read(reinterpret_cast<char*>(raw.data()),
               static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(".ten: truncated payload, expected " + std::to_string(n) +
                      " values for shape " + shape_str(shape));
  }
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(raw[i * 8 + b]) << (8 * b);
    }
    data[i] = std::bit_cast<double>(bits);
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_ten(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_ten(os, t);
  if (!os) throw FormatError("write failed: " + path.string());
}

Tensor load_ten(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    return read_ten(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void save_depth_pgm(const std::filesystem::path& path, const Tensor& depth) {
  if (depth.rank() != 3 || depth.dim(0) != 1) {
    throw ShapeError("depth PGM expects 1 x H x W, got " +
                     shape_str(depth.shape()));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os << "P5\n" << depth.dim(2) << ' ' << depth.dim(1) << "\n65535\n";
  for (double v : depth.data()) {
    const double mm = std::clamp(std::round(v * 1000.0), 0.0, 65535.0);
    const auto s = static_cast<std::uint16_t>(mm);
    const char b[2] = {static_cast<char>(s >> 8), static_cast<char>(s & 0xff)};
    os.write(b, 2);
  }
}

Tensor load_depth_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (!is || magic != "P5" || maxval != 65535) {
    throw FormatError(path.string() + ": not a 16-bit P5 PGM");
  }
  is.get();
  Tensor out({1, h, w});
  for (std::size_t i = 0; i < out.size(); ++i) {
    unsigned char b[2];
    if (!is.read(reinterpret_cast<char*>(b), 2)) {
      throw FormatError(path.string() + ": truncated PGM");
    }
    out[i] = static_cast<double>((b[0] << 8) | b[1]) / 1000.0;
  }
  return out;
}

KeyValues parse_key_values(std::istream& is) {
  KeyValues kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    }
    auto key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw FormatError("config line " + std::to_string(lineno) + ": empty key");
    }
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  return parse_key_values(is);
}

void write_key_values(std::ostream& os, const KeyValues& kv) {
  for (const auto& [k, v] : kv) os << k << " = " << v << '\n';
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "off" || value == "no") return false;
  throw std::invalid_argument(key + ": expected a boolean, got '" + value + "'");
}

namespace {

template <class T, class F>
T parse_whole(const std::string& key, const std::string& value, const char* what, F f) {
  std::size_t used = 0;
  T out{};
  try {
    out = f(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw std::invalid_argument(key + ": expected " + what + ", got '" + value + "'");
  }
  return out;
}

}  // namespace

long long parse_int(const std::string& key, const std::string& value) {
  return parse_whole<long long>(key, value, "an integer",
                                [](const std::string& v, std::size_t* u) { return std::stoll(v, u); });
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  if (!value.empty() && value[0] == '-') {
    throw std::invalid_argument(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return parse_whole<std::uint64_t>(key, value, "a non-negative integer",
                                    [](const std::string& v, std::size_t* u) { return std::stoull(v, u); });
}

double parse_real(const std::string& key, const std::string& value) {
  return parse_whole<double>(key, value, "a number",
                             [](const std::string& v, std::size_t* u) { return std::stod(v, u); });
}

std::string format_real(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace sacrf

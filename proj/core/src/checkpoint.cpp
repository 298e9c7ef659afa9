#include "blgcn/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "blgcn/errors.hpp"

namespace blgcn {
namespace {

constexpr char kMagic[4] = {'B', 'L', 'G', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

class Cursor {
 public:
  explicit Cursor(std::span<const std::uint8_t> b) : bytes_(b) {}

  void need(std::uint64_t n) const {
    if (bytes_.size() - pos_ < n) throw FormatError("truncated checkpoint", pos_);
  }
  std::uint64_t uint(int width) {
    need(static_cast<std::uint64_t>(width));
    std::uint64_t v = 0;
    for (int i = width - 1; i >= 0; --i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::string string() {
    const auto len = uint(4);
    need(len);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  std::uint64_t offset() const { return pos_; }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return m;
  throw DataError("checkpoint has no tensor '" + name + "'");
}

const std::string& Checkpoint::header_value(const std::string& key) const {
  for (const auto& [k, v] : header)
    if (k == key) return v;
  throw DataError("checkpoint header has no key '" + key + "'");
}

bool Checkpoint::has_header(const std::string& key) const {
  for (const auto& kv : header)
    if (kv.first == key) return true;
  return false;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(ckpt.header.size()));
  for (const auto& [k, v] : ckpt.header) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put_string(out, name);
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Cursor c(bytes);
  c.need(4);
  for (int i = 0; i < 4; ++i)
    if (bytes[static_cast<std::size_t>(i)] != static_cast<std::uint8_t>(kMagic[i]))
      throw FormatError("bad checkpoint magic", 0);
  c.uint(4);
  const auto version = c.uint(4);
  if (version != kVersion) throw FormatError("unsupported checkpoint version", 4);
  Checkpoint ckpt;
  const auto nh = c.uint(4);
  for (std::uint64_t i = 0; i < nh; ++i) {
    std::string k = c.string();
    std::string v = c.string();
    ckpt.header.emplace_back(std::move(k), std::move(v));
  }
  const auto nt = c.uint(4);
  for (std::uint64_t i = 0; i < nt; ++i) {
    std::string name = c.string();
    const auto rows = c.uint(4);
    const auto cols = c.uint(4);
    const std::uint64_t at = c.offset();
    if (cols != 0 && rows > (std::uint64_t{1} << 32) / cols) {
      throw FormatError("tensor dimensions overflow", at);
    }
    c.need(rows * cols * 8);
    Matrix m(rows, cols);
    for (double& v : m.data()) v = std::bit_cast<double>(c.uint(8));
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!c.at_end()) throw FormatError("trailing bytes after checkpoint", c.offset());
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace blgcn

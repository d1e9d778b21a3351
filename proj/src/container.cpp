#include "ftpg/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "ftpg/errors.hpp"

namespace ftpg {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffU));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffU));
}

std::uint32_t checked_u32(std::size_t v, std::string_view what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(fmt::format("{} {} does not fit in 32 bits", what, v), 0);
  }
  return static_cast<std::uint32_t>(v);
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, std::string_view what) const {
    if (remaining() < n) {
      throw FormatError(fmt::format("truncated file: {} needs {} bytes, {} left", what, n, remaining()), pos_);
    }
  }

  std::uint32_t u32(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }

  double f64(std::string_view what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string_view bytes(std::size_t n, std::string_view what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor* Container::find(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.value;
  return nullptr;
}

std::string encode_container(const Container& container) {
  std::string out(kContainerMagic, sizeof(kContainerMagic));
  put_u32(out, kContainerVersion);
  put_u32(out, checked_u32(container.tensors.size(), "tensor count"));
  for (const auto& [name, value] : container.tensors) {
    put_u32(out, checked_u32(name.size(), "name length"));
    out += name;
    put_u32(out, checked_u32(value.rank(), "rank"));
    for (auto d : value.shape()) put_u32(out, checked_u32(d, "dimension"));
    for (double v : value.data()) put_f64(out, v);
  }
  put_u32(out, checked_u32(container.text.size(), "text length"));
  out += container.text;
  put_u32(out, container.round);
  return out;
}

Container decode_container(std::string_view bytes) {
  Reader in(bytes);
  const auto magic = in.bytes(4, "magic");
  if (std::memcmp(magic.data(), kContainerMagic, 4) != 0) {
    throw FormatError("bad magic, expected \"FTPG\"", 0);
  }
  const auto version_at = in.offset();
  const auto version = in.u32("version");
  if (version != kContainerVersion) {
    throw FormatError(fmt::format("unsupported container version {} (expected {})", version, kContainerVersion),
                      version_at);
  }
  const auto count = in.u32("tensor count");

  Container out;
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = in.u32("name length");
    std::string name(in.bytes(name_len, "tensor name"));
    const auto rank_at = in.offset();
    const auto rank = in.u32("rank");
    if (rank == 0) throw FormatError(fmt::format("tensor '{}' has rank 0", name), rank_at);
    in.need(std::size_t{4} * rank, "dimensions");
    Shape shape;
    std::uint64_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto dim_at = in.offset();
      const auto d = in.u32("dimension");
      if (d == 0) throw FormatError(fmt::format("tensor '{}' has a zero dimension", name), dim_at);
      total *= d;
      if (total > in.remaining() / 8 + 1) {
        throw FormatError(fmt::format("truncated file: tensor '{}' declares more values than remain", name), dim_at);
      }
      shape.push_back(d);
    }
    in.need(total * 8, "tensor values");
    std::vector<double> data(total);
    for (auto& v : data) v = in.f64("value");
    out.tensors.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  const auto text_len = in.u32("text length");
  out.text = std::string(in.bytes(text_len, "text"));
  out.round = in.u32("round");
  if (in.remaining() != 0) {
    throw FormatError(fmt::format("{} unexpected trailing bytes", in.remaining()), in.offset());
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", tmp.string()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(fmt::format("write to '{}' failed", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot move '{}' into place: {}", path.string(), ec.message()));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(fmt::format("read from '{}' failed", path.string()));
  return bytes;
}

void write_container(const std::filesystem::path& path, const Container& container) {
  write_file_atomic(path, encode_container(container));
}

Container read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

}  // namespace ftpg

#include "fedquad/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "fedquad/error.hpp"
#include "fedquad/io.hpp"

namespace fedquad {
namespace {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t b = 0; b < sizeof(T); ++b) out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      v |= static_cast<T>(static_cast<unsigned char>(bytes_[pos_ + b])) << (8 * b);
    }
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) {
      throw DataError(std::string("checkpoint truncated reading ") + what + " at byte offset " +
                      std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

bool is_buffer_name(std::string_view name) {
  return name.ends_with(".running_mean") || name.ends_with(".running_var");
}

}  // namespace

std::string encode_checkpoint(const ModelParams& params) {
  std::string out = "FQCK";
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, params.entries.size());
  for (const auto& e : params.entries) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rank()));
    for (std::size_t extent : e.value.shape()) put_le<std::uint64_t>(out, extent);
    for (double x : e.value.storage()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(x));
  }
  return out;
}

ModelParams decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(4, "magic") != "FQCK") throw DataError("checkpoint magic mismatch at byte offset 0");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " at byte offset 4");
  }
  const auto count = r.get<std::uint64_t>("entry count");
  ModelParams params;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>("name length");
    std::string name(r.take(name_len, "name"));
    const auto rank = r.get<std::uint32_t>("rank");
    Shape shape;
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = r.get<std::uint64_t>("extent");
      shape.push_back(static_cast<std::size_t>(extent));
      if (extent != 0 && numel > (bytes.size() / 8) / extent) {
        throw DataError("checkpoint entry '" + name + "' extents exceed file size at byte offset " +
                        std::to_string(r.offset()));
      }
      numel *= static_cast<std::size_t>(extent);
    }
    std::vector<double> values(numel);
    for (auto& x : values) x = std::bit_cast<double>(r.get<std::uint64_t>("value"));
    const bool buffer = is_buffer_name(name);
    params.entries.push_back({std::move(name), Tensor(std::move(shape), std::move(values)), !buffer});
  }
  if (!r.done()) {
    throw DataError("trailing bytes after checkpoint entries at byte offset " + std::to_string(r.offset()));
  }
  return params;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  try {
    return decode_checkpoint(read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace fedquad

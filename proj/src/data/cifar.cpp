#include <cmath>
#include <cstring>
#include <system_error>

#include "fedquad/data.hpp"
#include "fedquad/error.hpp"
#include "fedquad/io.hpp"

namespace fedquad {

std::size_t cifar_record_size(CifarVariant variant) {
  return (variant == CifarVariant::kCifar10 ? 1 : 2) + kCifarPixels;
}

std::size_t cifar_num_classes(CifarVariant variant) { return variant == CifarVariant::kCifar10 ? 10 : 100; }

std::size_t cifar_standard_count(CifarVariant, Split split) { return split == Split::kTrain ? 50000 : 10000; }

std::vector<CifarRecord> parse_cifar_records(std::string_view bytes, CifarVariant variant,
                                             std::string_view source) {
  const std::size_t rec = cifar_record_size(variant);
  if (bytes.size() % rec != 0) {
    const std::size_t offset = bytes.size() - bytes.size() % rec;
    throw DataError(std::string(source) + ": truncated record at byte offset " + std::to_string(offset) +
                    " (" + std::to_string(bytes.size() % rec) + " of " + std::to_string(rec) + " bytes)");
  }
  const std::size_t classes = cifar_num_classes(variant);
  std::vector<CifarRecord> records(bytes.size() / rec);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data()) + i * rec;
    CifarRecord& r = records[i];
    if (variant == CifarVariant::kCifar10) {
      r.label = p[0];
    } else {
      r.coarse_label = p[0];
      r.label = p[1];
    }
    if (r.label >= classes) {
      throw DataError(std::string(source) + ": label " + std::to_string(r.label) + " out of range at byte offset " +
                      std::to_string(i * rec));
    }
    std::memcpy(r.pixels.data(), p + (rec - kCifarPixels), kCifarPixels);
  }
  return records;
}

std::string serialize_cifar_records(std::span<const CifarRecord> records, CifarVariant variant) {
  std::string out;
  out.reserve(records.size() * cifar_record_size(variant));
  for (const auto& r : records) {
    if (variant == CifarVariant::kCifar100) out.push_back(static_cast<char>(r.coarse_label));
    out.push_back(static_cast<char>(r.label));
    out.append(reinterpret_cast<const char*>(r.pixels.data()), kCifarPixels);
  }
  return out;
}

std::filesystem::path resolve_cifar_dir(const std::filesystem::path& dir, CifarVariant variant) {
  const char* nested = variant == CifarVariant::kCifar10 ? "cifar-10-batches-bin" : "cifar-100-binary";
  const char* probe = variant == CifarVariant::kCifar10 ? "test_batch.bin" : "test.bin";
  if (std::filesystem::exists(dir / probe)) return dir;
  if (std::filesystem::exists(dir / nested / probe)) return dir / nested;
  return dir;
}

std::vector<std::filesystem::path> cifar_files(const std::filesystem::path& dir, CifarVariant variant,
                                               Split split) {
  const auto root = resolve_cifar_dir(dir, variant);
  std::vector<std::filesystem::path> files;
  if (variant == CifarVariant::kCifar10) {
    if (split == Split::kTrain) {
      for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
      files.push_back(root / "test_batch.bin");
    }
  } else {
    files.push_back(root / (split == Split::kTrain ? "train.bin" : "test.bin"));
  }
  return files;
}

std::size_t scan_cifar(const std::filesystem::path& dir, CifarVariant variant, Split split) {
  const std::size_t rec = cifar_record_size(variant);
  std::size_t total = 0;
  for (const auto& f : cifar_files(dir, variant, split)) {
    std::error_code ec;
    const auto bytes = std::filesystem::file_size(f, ec);
    if (ec) throw DataError("missing CIFAR file '" + f.string() + "'");
    if (bytes % rec != 0) {
      throw DataError(f.string() + ": truncated record at byte offset " + std::to_string(bytes - bytes % rec));
    }
    total += bytes / rec;
  }
  return total;
}

ChannelNorm compute_channel_norm(std::span<const CifarRecord> records) {
  ChannelNorm norm;
  if (records.empty()) return norm;
  constexpr std::size_t plane = 32 * 32;
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (const auto& r : records) {
      for (std::size_t i = 0; i < plane; ++i) sum += r.pixels[c * plane + i] / 255.0;
    }
    const double count = static_cast<double>(records.size() * plane);
    const double mean = sum / count;
    double sq = 0.0;
    for (const auto& r : records) {
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = r.pixels[c * plane + i] / 255.0 - mean;
        sq += d * d;
      }
    }
    norm.mean[c] = mean;
    norm.stddev[c] = std::sqrt(sq / count);
    if (norm.stddev[c] <= 0.0) norm.stddev[c] = 1.0;
  }
  return norm;
}

Dataset cifar_to_dataset(std::span<const CifarRecord> records, CifarVariant variant, Split split,
                         const ChannelNorm& norm) {
  constexpr std::size_t plane = 32 * 32;
  Dataset ds;
  ds.num_classes = cifar_num_classes(variant);
  ds.split = split;
  ds.features = Tensor({records.size(), 3, 32, 32});
  ds.labels.reserve(records.size());
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& r = records[n];
    ds.labels.push_back(r.label);
    double* out = ds.features.data() + n * kCifarPixels;
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < plane; ++i) {
        out[c * plane + i] = (r.pixels[c * plane + i] / 255.0 - norm.mean[c]) / norm.stddev[c];
      }
    }
  }
  return ds;
}

Dataset load_cifar(const std::filesystem::path& dir, CifarVariant variant, Split split,
                   std::optional<ChannelNorm> norm) {
  std::vector<CifarRecord> records;
  for (const auto& f : cifar_files(dir, variant, split)) {
    if (!std::filesystem::exists(f)) throw DataError("missing CIFAR file '" + f.string() + "'");
    std::string bytes;
    try {
      bytes = read_file(f);
    } catch (const IoError& e) {
      throw DataError(e.what());
    }
    auto part = parse_cifar_records(bytes, variant, f.string());
    records.insert(records.end(), part.begin(), part.end());
  }
  const ChannelNorm used = norm ? *norm : compute_channel_norm(records);
  return cifar_to_dataset(records, variant, split, used);
}

}  // namespace fedquad

namespace fedquad {

DatasetPair load_cifar_pair(const std::filesystem::path& dir, CifarVariant variant,
                            std::optional<ChannelNorm> norm) {
  auto read_split = [&](Split split) {
    std::vector<CifarRecord> records;
    for (const auto& f : cifar_files(dir, variant, split)) {
      if (!std::filesystem::exists(f)) throw DataError("missing CIFAR file '" + f.string() + "'");
      auto part = parse_cifar_records(read_file(f), variant, f.string());
      records.insert(records.end(), part.begin(), part.end());
    }
    return records;
  };
  DatasetPair out;
  {
    const auto train = read_split(Split::kTrain);
    if (!norm) norm = compute_channel_norm(train);
    out.train = cifar_to_dataset(train, variant, Split::kTrain, *norm);
  }
  out.test = cifar_to_dataset(read_split(Split::kTest), variant, Split::kTest, *norm);
  return out;
}

}  // namespace fedquad

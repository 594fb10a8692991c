#include "fedquad/io.hpp"

#include <charconv>
#include <sstream>
#include <system_error>

#include "fedquad/error.hpp"

namespace fedquad {

int exit_code(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig:
      return 2;
    case ErrorCategory::kData:
      return 3;
    case ErrorCategory::kNumeric:
      return 4;
    case ErrorCategory::kIo:
      return 5;
    case ErrorCategory::kInput:
    case ErrorCategory::kState:
      return 1;
  }
  return 1;
}

const char* category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kConfig:
      return "config";
    case ErrorCategory::kData:
      return "data";
    case ErrorCategory::kNumeric:
      return "numeric";
    case ErrorCategory::kIo:
      return "io";
    case ErrorCategory::kInput:
      return "input";
    case ErrorCategory::kState:
      return "state";
  }
  return "unknown";
}

void rethrow_with_context(const Error& e, const std::string& context) {
  const std::string what = context + ": " + e.what();
  switch (e.category()) {
    case ErrorCategory::kConfig:
      throw ConfigError(what);
    case ErrorCategory::kData:
      throw DataError(what);
    case ErrorCategory::kNumeric:
      throw NumericError(what);
    case ErrorCategory::kIo:
      throw IoError(what);
    case ErrorCategory::kInput:
      throw InputError(what);
    case ErrorCategory::kState:
      throw StateError(what);
  }
  throw Error(e.category(), what);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed for '" + path.string() + "'");
  return buf.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  AtomicFileWriter w(path);
  w.write(bytes);
  w.commit();
}

AtomicFileWriter::AtomicFileWriter(std::filesystem::path path)
    : path_(std::move(path)), tmp_(path_.string() + ".tmp") {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path_.parent_path().string() + "': " + ec.message());
  }
  out_.open(tmp_, std::ios::binary | std::ios::trunc);
  if (!out_) throw IoError("cannot open '" + tmp_.string() + "' for writing");
}

AtomicFileWriter::~AtomicFileWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_, ec);
  }
}

void AtomicFileWriter::write(std::string_view text) {
  out_.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out_) throw IoError("write failed for '" + tmp_.string() + "'");
}

void AtomicFileWriter::flush() {
  out_.flush();
  if (!out_) throw IoError("flush failed for '" + tmp_.string() + "'");
}

void AtomicFileWriter::commit() {
  out_.close();
  if (!out_) throw IoError("close failed for '" + tmp_.string() + "'");
  std::error_code ec;
  std::filesystem::rename(tmp_, path_, ec);
  if (ec) throw IoError("cannot rename '" + tmp_.string() + "' to '" + path_.string() + "': " + ec.message());
  committed_ = true;
}

std::string format_double(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

}  // namespace fedquad

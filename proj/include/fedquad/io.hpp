#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

namespace fedquad {

std::string read_file(const std::filesystem::path& path);

// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Incremental writer with atomic publication: data goes to a temporary file
// that is renamed into place by commit(). Uncommitted files are removed.
class AtomicFileWriter {
 public:
  explicit AtomicFileWriter(std::filesystem::path path);
  ~AtomicFileWriter();
  AtomicFileWriter(const AtomicFileWriter&) = delete;
  AtomicFileWriter& operator=(const AtomicFileWriter&) = delete;

  void write(std::string_view text);
  void flush();
  void commit();
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

}  // namespace fedquad

#pragma once

// Output plumbing shared by the runner and the acceptance suite.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace dpspin {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;
std::string hex64(std::uint64_t value);

/// Shortest decimal text that round-trips the double ("%.17g").
std::string format_double(double x);

/// Writes to a sibling temporary file, then renames it over `path`.
/// Readers never observe a partial file.
void atomic_write(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

/// Order-sensitive hash of a stream of numbers and labels.
class Digest {
 public:
  Digest& add(double x);
  Digest& add(std::int64_t x);
  Digest& add(std::string_view label);
  [[nodiscard]] std::string hex() const { return hex64(fnv1a64(text_)); }
  [[nodiscard]] const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

}  // namespace dpspin

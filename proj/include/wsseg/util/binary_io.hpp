#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace wsseg {

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian binary container writer (host order; all supported targets are LE).
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
  }

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void scalar(T v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  void string(std::string_view s) {
    scalar<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void array(const T* data, std::size_t n) {
    out_.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
  }

  void close() {
    out_.close();
    if (!out_) throw std::runtime_error("write failed: " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw LoadError("cannot open " + path.string());
  }

  void expect_magic(std::string_view m) {
    std::string got(m.size(), '\0');
    in_.read(got.data(), static_cast<std::streamsize>(m.size()));
    if (!in_ || got != m) throw LoadError(path_.string() + ": bad magic (expected " + std::string(m) + ")");
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  T scalar() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    check();
    return v;
  }

  std::string string(std::size_t max_len = 1 << 20) {
    auto n = scalar<std::uint32_t>();
    if (n > max_len) throw LoadError(path_.string() + ": corrupt string length");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void array(T* data, std::size_t n) {
    in_.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(T)));
    check();
  }

  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  void check() {
    if (!in_) throw LoadError(path_.string() + ": truncated or corrupt file");
  }

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace wsseg

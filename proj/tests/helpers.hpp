#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace testutil {

// Self-cleaning scratch directory for one test case.
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    char tmpl[] = "/tmp/fuzzkit-test-XXXXXX";
    path = mkdtemp(tmpl);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

inline void write_file(const std::filesystem::path& p,
                       const std::vector<std::uint8_t>& bytes) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  write_file(p, std::vector<std::uint8_t>(s.begin(), s.end()));
}

inline std::vector<std::uint8_t> bytes_of(const std::string& s) {
  return {s.begin(), s.end()};
}

// Minimal ELF header stub: magic, EI_DATA at offset 5, e_machine at 18/19.
inline std::vector<std::uint8_t> elf_stub(std::uint16_t machine,
                                          bool big_endian = false,
                                          const std::string& tail = "") {
  std::vector<std::uint8_t> b(64, 0);
  b[0] = 0x7f;
  b[1] = 'E';
  b[2] = 'L';
  b[3] = 'F';
  b[4] = 1;
  b[5] = big_endian ? 2 : 1;
  if (big_endian) {
    b[18] = static_cast<std::uint8_t>(machine >> 8);
    b[19] = static_cast<std::uint8_t>(machine & 0xff);
  } else {
    b[18] = static_cast<std::uint8_t>(machine & 0xff);
    b[19] = static_cast<std::uint8_t>(machine >> 8);
  }
  b.insert(b.end(), tail.begin(), tail.end());
  return b;
}

}  // namespace testutil

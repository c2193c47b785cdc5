#include <algorithm>
#include <random>

#include "doctest.h"
#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "fuzzkit/inventory.hpp"
#include "fuzzkit/proc.hpp"
#include "helpers.hpp"

using namespace fuzzkit;
using testutil::TempDir;

namespace {

// Independent digest oracle: the system sha256sum utility.
std::string sha256sum_cli(const std::vector<std::uint8_t>& bytes) {
  TempDir dir;
  auto p = dir.path / "blob";
  testutil::write_file(p, bytes);
  RunOptions opts;
  opts.capture_output = true;
  opts.timeout_ms = 10000;
  auto res = run_process({"sha256sum", p.string()}, opts);
  REQUIRE(res.kind == RunResult::Kind::EXITED);
  REQUIRE(res.exit_code == 0);
  return res.output.substr(0, 64);
}

}  // namespace

TEST_CASE("sha256 matches the published empty-input digest") {
  CHECK(sha256_hex(std::string_view{}) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("sha256 agrees with the sha256sum utility") {
  std::mt19937 rng(7);
  for (int i = 0; i < 5; ++i) {
    std::vector<std::uint8_t> bytes(1 + rng() % 4096);
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rng());
    CHECK(fingerprint(bytes) == sha256sum_cli(bytes));
  }
}

TEST_CASE("single-bit flips always change the fingerprint") {
  std::mt19937 rng(11);
  std::vector<std::uint8_t> base(256);
  for (auto& b : base) b = static_cast<std::uint8_t>(rng());
  std::string h0 = fingerprint(base);
  for (int i = 0; i < 100; ++i) {
    auto flipped = base;
    std::size_t bit = rng() % (base.size() * 8);
    flipped[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    CHECK(fingerprint(flipped) != h0);
  }
  CHECK(fingerprint(base) == h0);
}

TEST_CASE("machine code mapping") {
  CHECK(Arch::from_machine(40).kind == Arch::Kind::ARM_32);
  CHECK(Arch::from_machine(62).kind == Arch::Kind::X86_64);
  Arch unk = Arch::from_machine(7);
  CHECK(unk.kind == Arch::Kind::UNKNOWN);
  CHECK(unk.name() == "unknown(7)");
}

TEST_CASE("version parsing and total order") {
  auto v = VersionInfo::parse("1.36.1");
  REQUIRE(v);
  CHECK(v->major == 1);
  CHECK(v->minor == 36);
  CHECK(v->patch == 1);
  CHECK(v->raw == "1.36.1");

  auto two = VersionInfo::parse("1.33");
  REQUIRE(two);
  CHECK(!two->patch);

  CHECK(!VersionInfo::parse("abc"));
  CHECK(!VersionInfo::parse(""));
  CHECK(!VersionInfo::parse("1"));

  // absent patch sorts below patch 0
  CHECK(*VersionInfo::parse("1.33") < *VersionInfo::parse("1.33.0"));
  CHECK(*VersionInfo::parse("1.22.1") < *VersionInfo::parse("1.36.0"));
  CHECK(*VersionInfo::parse("1.7.2") < *VersionInfo::parse("1.10.2"));

  // total order over random triples
  std::mt19937 rng(3);
  std::vector<VersionInfo> vs;
  for (int i = 0; i < 50; ++i) {
    VersionInfo x;
    x.major = static_cast<int>(rng() % 4);
    x.minor = static_cast<int>(rng() % 40);
    if (rng() % 2) x.patch = static_cast<int>(rng() % 5);
    vs.push_back(x);
  }
  for (const auto& a : vs)
    for (const auto& b : vs) {
      bool lt = a < b, gt = b < a, eq = a == b;
      CHECK(int(lt) + int(gt) + int(eq) == 1);  // trichotomy
      for (const auto& c : vs)
        if (a < b && b < c) CHECK(a < c);
    }
}

TEST_CASE("extract_version finds the first marker in printable runs") {
  auto bytes = testutil::bytes_of("junk BusyBox v1.36.1 (2023-06-01) more");
  auto r = extract_version(bytes);
  REQUIRE(r);
  CHECK(r->first == "busybox");
  CHECK(r->second.raw == "1.36.1");

  auto two = extract_version(testutil::bytes_of("BusyBox v1.33.0"));
  REQUIRE(two);
  CHECK(two->second.raw == "1.33.0");

  CHECK(!extract_version(testutil::bytes_of("no marker here")));

  // first match wins
  auto multi =
      extract_version(testutil::bytes_of("BusyBox v1.22.1 ... BusyBox v1.36.0"));
  REQUIRE(multi);
  CHECK(multi->second.raw == "1.22.1");

  // marker split by a non-printable byte is not a match
  std::vector<std::uint8_t> split = testutil::bytes_of("BusyBox ");
  split.push_back(0);
  auto rest = testutil::bytes_of("v1.2.3");
  split.insert(split.end(), rest.begin(), rest.end());
  CHECK(!extract_version(split));
}

TEST_CASE("extract_version survives random binary padding") {
  std::mt19937 rng(5);
  for (int i = 0; i < 50; ++i) {
    std::vector<std::uint8_t> buf;
    auto pad = [&](std::size_t n) {
      for (std::size_t j = 0; j < n; ++j) {
        std::uint8_t b;
        do {
          b = static_cast<std::uint8_t>(rng());
        } while (b >= 0x20 && b <= 0x7e);  // printable-free padding
        buf.push_back(b);
      }
    };
    pad(rng() % 64);
    auto marker = testutil::bytes_of("BusyBox v1.22.1");
    buf.insert(buf.end(), marker.begin(), marker.end());
    pad(rng() % 64);
    auto r = extract_version(buf);
    REQUIRE(r);
    CHECK(r->second.raw == "1.22.1");
  }
}

TEST_CASE("scan_filesystem finds ELFs, skips the rest") {
  TempDir dir;
  testutil::write_file(dir.path / "a_arm",
                       testutil::elf_stub(40, false, "BusyBox v1.36.0 x"));
  testutil::write_file(dir.path / "b_x86", testutil::elf_stub(62));
  testutil::write_file(dir.path / "sub" / "c_be", testutil::elf_stub(40, true));
  testutil::write_file(dir.path / "note.txt", std::string("hello"));
  std::filesystem::create_symlink(dir.path / "a_arm", dir.path / "link");

  auto result = scan_filesystem(dir.path, 8);
  REQUIRE(result.targets.size() == 3);
  // sorted by path
  CHECK(result.targets[0].path.filename() == "a_arm");
  CHECK(result.targets[0].arch.kind == Arch::Kind::ARM_32);
  REQUIRE(result.targets[0].version);
  CHECK(result.targets[0].version->raw == "1.36.0");
  CHECK(result.targets[0].component == "busybox");
  CHECK(result.targets[1].arch.kind == Arch::Kind::X86_64);
  CHECK(!result.targets[1].version);
  CHECK(result.targets[2].arch.kind == Arch::Kind::ARM_32);  // big-endian decode

  // determinism
  auto again = scan_filesystem(dir.path, 8);
  REQUIRE(again.targets.size() == result.targets.size());
  for (std::size_t i = 0; i < again.targets.size(); ++i)
    CHECK(again.targets[i].content_hash == result.targets[i].content_hash);
}

TEST_CASE("scan respects max_depth and rejects bad roots") {
  TempDir dir;
  testutil::write_file(dir.path / "d1" / "d2" / "d3" / "deep",
                       testutil::elf_stub(62));
  testutil::write_file(dir.path / "shallow", testutil::elf_stub(62));
  auto shallow = scan_filesystem(dir.path, 1);
  CHECK(shallow.targets.size() == 1);
  auto deep = scan_filesystem(dir.path, 8);
  CHECK(deep.targets.size() == 2);

  CHECK_THROWS_AS(scan_filesystem(dir.path / "nope", 4), InputError);
  CHECK(scan_filesystem(dir.path / "d1", 8).targets.size() == 1);
}

TEST_CASE("host-built binary decodes as a real ELF cross-check") {
  // Independent oracle for the e_machine mapping: a binary the build
  // toolchain just produced for the host.
  std::filesystem::path toy = TOYAPP_A_PATH;
  auto parent = toy.parent_path();
  auto result = scan_filesystem(parent, 1);
  bool found = false;
  for (const auto& t : result.targets)
    if (t.path.filename() == toy.filename()) {
      found = true;
      CHECK(t.arch.kind != Arch::Kind::UNKNOWN);
    }
  CHECK(found);
}

TEST_CASE("inventory_report groups and orders rows") {
  auto mk = [](const char* ver) {
    TargetBinary t;
    t.component = "busybox";
    t.version = VersionInfo::parse(ver);
    t.content_hash = std::string("h") + ver;
    return t;
  };
  std::vector<TargetBinary> targets = {mk("1.7.2"), mk("1.7.2"), mk("1.10.2")};
  TargetBinary unversioned;
  unversioned.content_hash = "hx";
  targets.push_back(unversioned);

  auto table = inventory_report(targets);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].component == "busybox");
  CHECK(table.rows[0].version == "v1.7.2");
  CHECK(table.rows[0].file_count == 2);
  CHECK(table.rows[0].unique_hash_count == 1);  // same hash twice
  CHECK(table.rows[1].version == "v1.10.2");
  CHECK(table.rows[1].file_count == 1);
  CHECK(table.rows[2].component == "unknown");
  CHECK(table.rows[2].version == "unknown");

  CHECK(table.to_csv() ==
        "component,version,count\n"
        "busybox,v1.7.2,2\n"
        "busybox,v1.10.2,1\n"
        "unknown,unknown,1\n");

  CHECK(inventory_report({}).rows.empty());
}

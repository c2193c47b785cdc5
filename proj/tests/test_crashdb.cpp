#include <signal.h>

#include <fstream>
#include <random>
#include <set>

#include "doctest.h"
#include "fuzzkit/crashdb.hpp"
#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "helpers.hpp"

using namespace fuzzkit;
using testutil::TempDir;

namespace {

CrashMeta meta_for(const std::string& target_hash,
                   const std::string& version = "1.22.1") {
  CrashMeta m;
  m.component = "busybox";
  m.applet = "awk";
  m.source_target_hash = target_hash;
  m.source_version = VersionInfo::parse(version);
  m.source_arch = Arch::from_machine(40);
  m.signal = Signal::from_number(SIGSEGV);
  m.recorded_at = 1000;
  return m;
}

}  // namespace

TEST_CASE("signal naming round-trips") {
  CHECK(Signal::from_number(SIGSEGV).name() == "SIGSEGV");
  CHECK(Signal::from_number(SIGABRT).name() == "SIGABRT");
  CHECK(Signal::from_number(SIGBUS).kind == Signal::Kind::BUS);
  CHECK(Signal::from_number(SIGFPE).kind == Signal::Kind::FPE);
  CHECK(Signal::from_number(SIGILL).kind == Signal::Kind::ILL);
  Signal other = Signal::from_number(17);
  CHECK(other.kind == Signal::Kind::OTHER);
  CHECK(other.name() == "SIG17");
  auto parsed = Signal::from_name("SIG17");
  REQUIRE(parsed);
  CHECK(parsed->number() == 17);
  CHECK(Signal::from_name("SIGSEGV")->kind == Signal::Kind::SEGV);
  CHECK(!Signal::from_name("bogus"));
}

TEST_CASE("insert is idempotent and content-addressed") {
  TempDir dir;
  auto store = CrashStore::open(dir.path / "store");
  auto input = testutil::bytes_of("crashing input");

  auto id1 = store.insert(input, meta_for("target-a"));
  auto id2 = store.insert(input, meta_for("target-a"));
  CHECK(id1 == id2);
  CHECK(store.size() == 1);
  CHECK(id1 == sha256_hex(std::span<const std::uint8_t>(input)) + ":target-a");

  // same input against a different target: new record, shared blob
  auto id3 = store.insert(input, meta_for("target-b"));
  CHECK(id3 != id1);
  CHECK(store.size() == 2);
  std::size_t blobs = 0;
  for (const auto& e :
       std::filesystem::directory_iterator(dir.path / "store" / "blobs"))
    if (e.is_regular_file()) ++blobs;
  CHECK(blobs == 1);

  CHECK(store.load_blob(store.get(id1)->input_hash) == input);
  CHECK_THROWS_AS(store.load_blob("deadbeef"), StoreError);

  CHECK_THROWS_AS(store.insert({}, meta_for("t")), InputError);
  CrashMeta incomplete;
  incomplete.applet = "awk";
  CHECK_THROWS_AS(store.insert(input, incomplete), InputError);
}

TEST_CASE("attach_signature supersedes in the append-only index") {
  TempDir dir;
  std::string id;
  {
    auto store = CrashStore::open(dir.path / "store");
    id = store.insert(testutil::bytes_of("x"), meta_for("t"));
    CrashSignature sig;
    sig.signal = Signal::from_number(SIGSEGV);
    sig.frame_hash = "abcd";
    sig.top_frame = "parse_group";
    store.attach_signature(id, sig);
    CHECK_THROWS_AS(store.attach_signature("missing:id", sig), StoreError);
  }
  // two index lines, one surviving record with the signature
  std::ifstream in(dir.path / "store" / "index.jsonl");
  std::size_t lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 2);

  auto reopened = CrashStore::open(dir.path / "store");
  CHECK(reopened.size() == 1);
  auto rec = reopened.get(id);
  REQUIRE(rec);
  REQUIRE(rec->signature);
  CHECK(rec->signature->frame_hash == "abcd");
  CHECK(rec->signature->top_frame == "parse_group");
}

TEST_CASE("query filters and sorts") {
  TempDir dir;
  auto store = CrashStore::open(dir.path / "store");

  auto m1 = meta_for("t1", "1.22.1");
  m1.recorded_at = 300;
  store.insert(testutil::bytes_of("in1"), m1);

  auto m2 = meta_for("t2", "1.36.0");
  m2.applet = "dc";
  m2.discovery = Discovery::REUSE;
  m2.recorded_at = 100;
  store.insert(testutil::bytes_of("in2"), m2);

  auto m3 = meta_for("t3");
  m3.source_version.reset();
  m3.source_arch = Arch::from_machine(62);
  m3.recorded_at = 200;
  store.insert(testutil::bytes_of("in3"), m3);

  CHECK(store.query().size() == 3);

  // sorted by recorded_at
  auto all = store.query();
  CHECK(all[0].recorded_at == 100);
  CHECK(all[2].recorded_at == 300);

  CrashFilter by_applet;
  by_applet.applet = "dc";
  REQUIRE(store.query(by_applet).size() == 1);
  CHECK(store.query(by_applet)[0].source_target_hash == "t2");

  CrashFilter by_arch;
  by_arch.arch = Arch::Kind::X86_64;
  CHECK(store.query(by_arch).size() == 1);

  CrashFilter by_discovery;
  by_discovery.discovery = Discovery::REUSE;
  CHECK(store.query(by_discovery).size() == 1);

  // half-open version range [1.22.1, 1.36.0) excludes the upper bound and
  // records without a version
  CrashFilter range;
  range.version_lo = VersionInfo::parse("1.22.1");
  range.version_hi = VersionInfo::parse("1.36.0");
  auto hits = store.query(range);
  REQUIRE(hits.size() == 1);
  CHECK(hits[0].source_target_hash == "t1");

  CrashFilter lo_only;
  lo_only.version_lo = VersionInfo::parse("1.30");
  auto hi_hits = store.query(lo_only);
  REQUIRE(hi_hits.size() == 1);
  CHECK(hi_hits[0].source_target_hash == "t2");

  CrashFilter nothing;
  nothing.component = "dropbear";
  CHECK(store.query(nothing).empty());
}

TEST_CASE("import_directory skips README and empty files") {
  TempDir dir;
  auto store = CrashStore::open(dir.path / "store");
  auto crashes = dir.path / "crashes";
  testutil::write_file(crashes / "id:000000", std::string("AAAA"));
  testutil::write_file(crashes / "id:000001", std::string("BBBB"));
  testutil::write_file(crashes / "README.txt", std::string("about"));
  testutil::write_file(crashes / "empty", std::string(""));

  auto ids = store.import_directory(crashes, meta_for("t"));
  CHECK(ids.size() == 2);
  CHECK(store.size() == 2);
  for (const auto& id : ids)
    CHECK(store.get(id)->discovery == Discovery::FUZZING);

  CHECK_THROWS_AS(store.import_directory(dir.path / "nope", meta_for("t")),
                  InputError);
}

TEST_CASE("unique_groups buckets by signature") {
  CrashSignature sig_a;
  sig_a.signal = Signal::from_number(SIGSEGV);
  sig_a.frame_hash = "aaaa";
  CrashSignature sig_b = sig_a;
  sig_b.frame_hash = "bbbb";

  std::vector<CrashRecord> records(4);
  records[0].id = "r0";
  records[0].signature = sig_a;
  records[1].id = "r1";
  records[1].signature = sig_a;
  records[2].id = "r2";
  records[2].signature = sig_b;
  records[3].id = "r3";  // unsigned

  auto groups = unique_groups(records);
  CHECK(groups.groups.size() == 2);
  CHECK(groups.groups.at(sig_a).size() == 2);
  CHECK(groups.groups.at(sig_b).size() == 1);
  REQUIRE(groups.unsigned_ids.size() == 1);
  CHECK(groups.unsigned_ids[0] == "r3");

  // signature equality ignores top_frame and confidence
  CrashSignature sig_a2 = sig_a;
  sig_a2.top_frame = "different";
  sig_a2.low_confidence = true;
  CHECK(sig_a == sig_a2);
}

TEST_CASE("persistence round-trip over many random records") {
  TempDir dir;
  std::mt19937 rng(29);
  std::vector<std::string> ids;
  {
    auto store = CrashStore::open(dir.path / "store");
    for (int i = 0; i < 200; ++i) {
      std::vector<std::uint8_t> input(1 + rng() % 64);
      for (auto& b : input) b = static_cast<std::uint8_t>(rng());
      auto m = meta_for("t" + std::to_string(rng() % 5),
                        rng() % 2 ? "1.22.1" : "1.36.0");
      m.recorded_at = static_cast<std::int64_t>(rng() % 100000);
      if (rng() % 2) m.discovery = Discovery::REUSE;
      ids.push_back(store.insert(input, m));
    }
  }
  auto reopened = CrashStore::open(dir.path / "store");
  auto all = reopened.query();
  std::set<std::string> unique_ids(ids.begin(), ids.end());
  CHECK(reopened.size() == unique_ids.size());
  for (const auto& r : all) {
    CHECK(unique_ids.count(r.id));
    auto blob = reopened.load_blob(r.input_hash);
    CHECK(sha256_hex(std::span<const std::uint8_t>(blob)) == r.input_hash);
    CHECK(blob.size() == r.input_len);
  }
  // idempotent re-insert leaves counts unchanged
  std::size_t before = reopened.size();
  auto blob0 = reopened.load_blob(all[0].input_hash);
  auto m = meta_for(all[0].source_target_hash);
  reopened.insert(blob0, m);
  CHECK(reopened.size() == before);
}

#include <sstream>

#include "doctest.h"
#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "fuzzkit/triage.hpp"
#include "helpers.hpp"

using namespace fuzzkit;
using testutil::TempDir;

namespace {

HarnessSpec toy_harness(int timeout_ms = 5000) {
  HarnessSpec h;
  h.argv_template = {"{target}", "-f", "@@"};
  h.timeout_ms = timeout_ms;
  return h;
}

std::string boom_transcript(const std::string& fault_addr = "0x0") {
  return
      "Program received signal SIGSEGV, Segmentation fault.\n"
      "0x0000555555555169 in bug_null_write () at toyapp.c:19\n"
      "#0  0x0000555555555169 in bug_null_write () at toyapp.c:19\n"
      "#1  0x00005555555551a0 in run_script (s=0x55..., len=7) at toyapp.c:36\n"
      "#2  0x0000555555555220 in main (argc=3, argv=0x7fff...) at toyapp.c:62\n"
      "$1 = {si_signo = 11, si_errno = 0, si_code = 1, _sifields = {_sigfault "
      "= {si_addr = " + fault_addr + "}}}\n";
}

// A recursion transcript with `reps` repetitions of a two-frame cycle.
std::string recursion_transcript(int reps) {
  std::ostringstream out;
  out << "Program received signal SIGSEGV, Segmentation fault.\n";
  int n = 0;
  for (int i = 0; i < reps; ++i) {
    out << "#" << n++ << "  0x0000555555555100 in parse_expr (p=0x1, d=" << i
        << ") at toy.c:10\n";
    out << "#" << n++ << "  0x0000555555555140 in parse_group (p=0x1, d=" << i
        << ") at toy.c:20\n";
  }
  out << "#" << n++ << "  0x0000555555555200 in main () at toy.c:40\n";
  out << "$1 = {si_signo = 11, _sigfault = {si_addr = 0x7ffc10200ff8}}\n";
  return out.str();
}

}  // namespace

TEST_CASE("parse_debug_transcript extracts signal, frames, fault address") {
  auto r = parse_debug_transcript(boom_transcript(), "toyapp_a");
  CHECK(r.signal.kind == Signal::Kind::SEGV);
  REQUIRE(r.fault_address);
  CHECK(*r.fault_address == 0);
  REQUIRE(r.frames.size() == 3);
  CHECK(r.frames[0].normalized() == "bug_null_write");
  CHECK(r.frames[1].normalized() == "run_script");
  CHECK(r.frames[2].normalized() == "main");
  CHECK(r.classification == "null-deref");

  auto far = parse_debug_transcript(boom_transcript("0x7f1200003450"), "t");
  CHECK(far.classification == "invalid-deref");
}

TEST_CASE("parse_debug_transcript classifies aborts and unknowns") {
  std::string abort_text =
      "Program received signal SIGABRT, Aborted.\n"
      "#0  __pthread_kill_implementation (threadid=..., signo=6) at pthread_kill.c:44\n"
      "#1  0x00007ffff7dde476 in __GI_raise (sig=6) at raise.c:26\n"
      "#2  0x00007ffff7dc47f3 in __GI_abort () at abort.c:79\n"
      "#3  0x0000555555555185 in bug_abort () at toyapp.c:22\n"
      "#4  0x0000555555555210 in main () at toyapp.c:62\n";
  auto r = parse_debug_transcript(abort_text, "toyapp_a");
  CHECK(r.signal.kind == Signal::Kind::ABRT);
  CHECK(r.classification == "abort");
  CHECK(r.frames.size() == 5);

  auto none = parse_debug_transcript("no crash happened\n", "t");
  CHECK(none.signal.kind == Signal::Kind::OTHER);
  CHECK(none.signal.code == 0);
  CHECK(none.classification == "other");
}

TEST_CASE("unsymbolized frames resolve through the memory map") {
  std::string text =
      "Program received signal SIGSEGV, Segmentation fault.\n"
      "#0  0x000076f01234 in ?? ()\n"
      "#1  0x0000555555555220 in main () at t.c:5\n"
      "$1 = {_sigfault = {si_addr = 0x76f01234}}\n"
      "process 1234\n"
      "Mapped address spaces:\n"
      "          Start Addr           End Addr       Size     Offset  objfile\n"
      "          0x76f00000         0x76f80000    0x80000        0x0  /lib/libfoo-1.so\n";
  auto r = parse_debug_transcript(text, "toyapp_a");
  REQUIRE(r.frames.size() == 2);
  CHECK(r.frames[0].module == "libfoo-1.so");
  CHECK(r.frames[0].offset == 0x1234);
  CHECK(r.frames[0].normalized() == "libfoo-1.so+0x1234");
  CHECK(r.classification == "invalid-deref");
}

TEST_CASE("recursion transcripts classify as stack exhaustion") {
  auto deep = parse_debug_transcript(recursion_transcript(225), "t");
  CHECK(deep.classification == "stack-exhaustion");

  // shallow recursion stays a plain invalid-deref
  auto shallow = parse_debug_transcript(recursion_transcript(40), "t");
  CHECK(shallow.classification == "invalid-deref");
}

TEST_CASE("cycle collapse makes signatures depth-invariant") {
  auto a = parse_debug_transcript(recursion_transcript(225), "t");
  auto b = parse_debug_transcript(recursion_transcript(260), "t");
  auto sig_a = signature_from(a);
  auto sig_b = signature_from(b);
  CHECK(sig_a == sig_b);
  CHECK(sig_a.top_frame == "parse_expr");

  // a leading leaf-callee frame does not defeat cycle detection
  std::string with_leaf =
      "Program received signal SIGSEGV, Segmentation fault.\n"
      "#0  __memset_avx2 () at memset.S:100\n";
  std::ostringstream rest;
  for (int i = 1; i <= 230; ++i)
    rest << "#" << i << "  0x0000555555555140 in parse_group (d=" << i
         << ") at toy.c:20\n";
  auto leaf = parse_debug_transcript(with_leaf + rest.str(), "t");
  CHECK(leaf.classification == "stack-exhaustion");
  auto sig_leaf = signature_from(leaf);
  CHECK(sig_leaf.top_frame == "parse_group");

  // different crash sites keep different signatures
  auto boom = parse_debug_transcript(boom_transcript(), "t");
  CHECK(!(signature_from(boom) == sig_a));
}

TEST_CASE("signature uses only the top frames") {
  std::string base =
      "Program received signal SIGSEGV, Segmentation fault.\n"
      "#0  f0 () at a.c:1\n#1  f1 () at a.c:2\n#2  f2 () at a.c:3\n"
      "#3  f3 () at a.c:4\n#4  f4 () at a.c:5\n";
  auto a = parse_debug_transcript(base + "#5  tail_x () at a.c:6\n", "t");
  auto b = parse_debug_transcript(base + "#5  tail_y () at a.c:7\n", "t");
  CHECK(signature_from(a) == signature_from(b));  // frame 5 is beyond top-5

  TriageOptions wide;
  wide.top_k_frames = 6;
  CHECK(!(signature_from(a, wide) == signature_from(b, wide)));
}

TEST_CASE("fixture debugger degradation and flaky detection") {
  ExecutionPlan plan;
  auto harness = toy_harness();

  // debugger unavailable -> degraded, signal-only result
  FixtureDebugger unavailable({});
  auto degraded = classify_crash(plan, harness, TOYAPP_A_PATH,
                                 testutil::bytes_of("BOOM"), unavailable);
  CHECK(degraded.degraded);
  CHECK(degraded.signal.kind == Signal::Kind::SEGV);
  CHECK(degraded.frames.empty());

  // non-crashing input is flagged flaky before any debugger work
  FixtureDebugger unused({boom_transcript()});
  CHECK_THROWS_AS(classify_crash(plan, harness, TOYAPP_A_PATH,
                                 testutil::bytes_of("hello"), unused),
                  FlakyInputError);

  // transcript without a signal line means the crash did not reproduce
  FixtureDebugger no_signal({"program exited normally\n"});
  CHECK_THROWS_AS(classify_crash(plan, harness, TOYAPP_A_PATH,
                                 testutil::bytes_of("BOOM"), no_signal),
                  FlakyInputError);
}

TEST_CASE("gdb-backed triage on the toy target" *
          doctest::skip(!GdbDebugger::available())) {
  ExecutionPlan plan;
  auto harness = toy_harness();
  GdbDebugger gdb;

  auto boom = classify_crash(plan, harness, TOYAPP_A_PATH,
                             testutil::bytes_of("BOOM"), gdb);
  CHECK(boom.signal.kind == Signal::Kind::SEGV);
  CHECK(boom.classification == "null-deref");
  bool saw_bug_frame = false;
  for (const auto& f : boom.frames)
    if (f.normalized() == "bug_null_write") saw_bug_frame = true;
  CHECK(saw_bug_frame);

  auto abrt = classify_crash(plan, harness, TOYAPP_A_PATH,
                             testutil::bytes_of("FREE2"), gdb);
  CHECK(abrt.signal.kind == Signal::Kind::ABRT);
  CHECK(abrt.classification == "abort");

  auto rec_a = classify_crash(plan, harness, TOYAPP_A_PATH,
                              testutil::bytes_of(std::string(2600, '(')), gdb);
  CHECK(rec_a.classification == "stack-exhaustion");
  auto rec_b = classify_crash(plan, harness, TOYAPP_A_PATH,
                              testutil::bytes_of(std::string(3500, '(')), gdb);
  CHECK(signature_from(rec_a) == signature_from(rec_b));
  CHECK(!(signature_from(boom) == signature_from(rec_a)));
}

TEST_CASE("triage_batch groups by signature with shortest representative" *
          doctest::skip(!GdbDebugger::available())) {
  ExecutionPlan plan;
  auto harness = toy_harness();
  GdbDebugger gdb;

  std::vector<std::vector<std::uint8_t>> inputs = {
      testutil::bytes_of("xxBOOMxx"),
      testutil::bytes_of("BOOM"),
      testutil::bytes_of("FREE2"),
      testutil::bytes_of("hello"),  // does not crash -> flagged
      testutil::bytes_of(std::string(2600, '(')),
      testutil::bytes_of(std::string(3500, '(')),
  };
  auto report = triage_batch(plan, harness, TOYAPP_A_PATH, inputs, gdb);
  CHECK(report.groups.size() == 3);
  CHECK(report.flagged.size() == 1);

  std::size_t members = 0;
  bool found_boom_group = false;
  for (const auto& g : report.groups) {
    members += g.member_count;
    if (g.classification == "null-deref") {
      found_boom_group = true;
      CHECK(g.member_count == 2);
      CHECK(g.representative_hash ==
            sha256_hex(std::string_view("BOOM")));  // shortest member
    }
  }
  CHECK(members == 5);
  CHECK(found_boom_group);

  auto text = report.to_text();
  CHECK(text.find("crash groups: 3") != std::string::npos);
  auto json = report.to_json();
  CHECK(json.find("\"flagged\"") != std::string::npos);
}

TEST_CASE("ddmin minimizes BOOM-in-noise to the trigger" *
          doctest::skip(!GdbDebugger::available())) {
  ExecutionPlan plan;
  auto harness = toy_harness();
  GdbDebugger gdb;

  auto seed_input = testutil::bytes_of("aaaaaaaaaaaaBOOMbbbbbbbbbbbb");
  auto sig = signature_from(
      classify_crash(plan, harness, TOYAPP_A_PATH, seed_input, gdb));

  auto min = minimize_input(plan, harness, TOYAPP_A_PATH, seed_input, sig, gdb);
  CHECK(min.original_len == seed_input.size());
  CHECK(min.minimized_len <= 8);
  CHECK(!min.budget_exhausted);
  std::string text(min.minimized_input.begin(), min.minimized_input.end());
  CHECK(text.find("BOOM") != std::string::npos);

  // fixed point: minimizing the minimum changes nothing
  auto again = minimize_input(plan, harness, TOYAPP_A_PATH,
                              min.minimized_input, sig, gdb);
  CHECK(again.minimized_input == min.minimized_input);

  // a non-reproducing start input is rejected
  CHECK_THROWS_AS(minimize_input(plan, harness, TOYAPP_A_PATH,
                                 testutil::bytes_of("quiet"), sig, gdb),
                  FlakyInputError);

  // an exhausted budget is reported, not fatal
  TriageOptions tight;
  tight.max_steps = 1;
  auto capped = minimize_input(plan, harness, TOYAPP_A_PATH, seed_input, sig,
                               gdb, tight);
  CHECK(capped.budget_exhausted);
  CHECK(capped.minimized_input == seed_input);
}

#pragma once

#include <set>
#include <string>
#include <vector>

#include "fuzzkit/crashdb.hpp"
#include "fuzzkit/fuzzing.hpp"

namespace fuzzkit {

enum class SeedCondition { WITH_LLM, WITHOUT_LLM };

struct ConditionSeries {
  SeedCondition condition = SeedCondition::WITHOUT_LLM;
  std::vector<FuzzStatsSample> series;  // monotone in relative_time_s
  std::string target_id;
  std::string applet;
};

struct ComparisonRow {
  std::int64_t t = 0;
  std::int64_t crashes_a = 0, crashes_b = 0;
  std::int64_t edges_a = 0, edges_b = 0;
  std::int64_t execs_a = 0, execs_b = 0;
};

struct ComparisonTable {
  std::string label_a, label_b;
  std::string target_id;
  std::string applet;
  std::vector<ComparisonRow> rows;
  ComparisonRow final_row;  // last-observation summary
};

struct OverlapCounts {
  std::size_t only_a = 0;
  std::size_t only_b = 0;
  std::size_t common = 0;
  std::string label_a, label_b;
};

// Aligns the two series on relative_time_s with step interpolation
// (last observation carried forward).
ComparisonTable compare_conditions(const ConditionSeries& a,
                                   const ConditionSeries& b);

OverlapCounts overlap(const std::set<CrashSignature>& a,
                      const std::set<CrashSignature>& b,
                      const std::string& label_a = "a",
                      const std::string& label_b = "b");

enum class EmitFormat { CSV, JSON, GNUPLOT };

// Deterministic byte output: stable column order, LF endings, UTF-8.
std::string emit(const ComparisonTable& table, EmitFormat format);
std::string emit(const OverlapCounts& counts, EmitFormat format);

}  // namespace fuzzkit

#include "fuzzkit/report.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "fuzzkit/errors.hpp"
#include "json.hpp"

using nlohmann::json;

namespace fuzzkit {

namespace {

std::string condition_name(SeedCondition c) {
  return c == SeedCondition::WITH_LLM ? "with-LLM" : "without-LLM";
}

// Value of the series at time t under step interpolation; zero before the
// first sample.
FuzzStatsSample sample_at(const std::vector<FuzzStatsSample>& series,
                          std::int64_t t) {
  FuzzStatsSample last{};
  for (const auto& s : series) {
    if (s.relative_time_s > t) break;
    last = s;
  }
  last.relative_time_s = t;
  return last;
}

}  // namespace

ComparisonTable compare_conditions(const ConditionSeries& a,
                                   const ConditionSeries& b) {
  if (a.target_id != b.target_id || a.applet != b.applet)
    throw InputError("condition series compare requires same target and applet");

  ComparisonTable table;
  table.label_a = condition_name(a.condition);
  table.label_b = condition_name(b.condition);
  table.target_id = a.target_id;
  table.applet = a.applet;

  std::set<std::int64_t> times;
  for (const auto& s : a.series) times.insert(s.relative_time_s);
  for (const auto& s : b.series) times.insert(s.relative_time_s);

  for (std::int64_t t : times) {
    FuzzStatsSample sa = sample_at(a.series, t);
    FuzzStatsSample sb = sample_at(b.series, t);
    ComparisonRow row;
    row.t = t;
    row.crashes_a = sa.crashes_saved;
    row.crashes_b = sb.crashes_saved;
    row.edges_a = sa.edges_found;
    row.edges_b = sb.edges_found;
    row.execs_a = sa.execs_done;
    row.execs_b = sb.execs_done;
    table.rows.push_back(row);
  }
  if (!table.rows.empty()) table.final_row = table.rows.back();
  return table;
}

OverlapCounts overlap(const std::set<CrashSignature>& a,
                      const std::set<CrashSignature>& b,
                      const std::string& label_a, const std::string& label_b) {
  OverlapCounts out;
  out.label_a = label_a;
  out.label_b = label_b;
  for (const auto& s : a)
    if (b.count(s))
      ++out.common;
    else
      ++out.only_a;
  for (const auto& s : b)
    if (!a.count(s)) ++out.only_b;
  return out;
}

std::string emit(const ComparisonTable& table, EmitFormat format) {
  switch (format) {
    case EmitFormat::CSV: {
      std::ostringstream out;
      out << "t,crashes_a,crashes_b,edges_a,edges_b,execs_a,execs_b\n";
      for (const auto& r : table.rows)
        out << r.t << ',' << r.crashes_a << ',' << r.crashes_b << ','
            << r.edges_a << ',' << r.edges_b << ',' << r.execs_a << ','
            << r.execs_b << '\n';
      return out.str();
    }
    case EmitFormat::JSON: {
      json j;
      j["label_a"] = table.label_a;
      j["label_b"] = table.label_b;
      j["target_id"] = table.target_id;
      j["applet"] = table.applet;
      j["rows"] = json::array();
      for (const auto& r : table.rows)
        j["rows"].push_back({{"t", r.t},
                             {"crashes_a", r.crashes_a},
                             {"crashes_b", r.crashes_b},
                             {"edges_a", r.edges_a},
                             {"edges_b", r.edges_b},
                             {"execs_a", r.execs_a},
                             {"execs_b", r.execs_b}});
      j["final"] = {{"t", table.final_row.t},
                    {"crashes_a", table.final_row.crashes_a},
                    {"crashes_b", table.final_row.crashes_b},
                    {"edges_a", table.final_row.edges_a},
                    {"edges_b", table.final_row.edges_b},
                    {"execs_a", table.final_row.execs_a},
                    {"execs_b", table.final_row.execs_b}};
      return j.dump(2) + "\n";
    }
    case EmitFormat::GNUPLOT: {
      std::ostringstream out;
      out << "# t crashes_a crashes_b edges_a edges_b execs_a execs_b\n";
      for (const auto& r : table.rows)
        out << r.t << ' ' << r.crashes_a << ' ' << r.crashes_b << ' '
            << r.edges_a << ' ' << r.edges_b << ' ' << r.execs_a << ' '
            << r.execs_b << '\n';
      return out.str();
    }
  }
  throw InputError("unsupported emit format");
}

std::string emit(const OverlapCounts& counts, EmitFormat format) {
  switch (format) {
    case EmitFormat::CSV: {
      std::ostringstream out;
      out << "only_a,only_b,common\n";
      out << counts.only_a << ',' << counts.only_b << ',' << counts.common
          << '\n';
      return out.str();
    }
    case EmitFormat::JSON: {
      json j = {{"label_a", counts.label_a},
                {"label_b", counts.label_b},
                {"only_a", counts.only_a},
                {"only_b", counts.only_b},
                {"common", counts.common}};
      return j.dump(2) + "\n";
    }
    case EmitFormat::GNUPLOT: {
      std::ostringstream out;
      out << "# only_a only_b common\n";
      out << counts.only_a << ' ' << counts.only_b << ' ' << counts.common
          << '\n';
      return out.str();
    }
  }
  throw InputError("unsupported emit format");
}

}  // namespace fuzzkit

#include "fuzzkit/seedgen.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "fuzzkit/errors.hpp"
#include "fuzzkit/hash.hpp"
#include "json.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace fuzzkit {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string prompt_text(const PromptMessages& messages) {
  std::string s;
  for (const auto& m : messages) s += m.role + ":" + m.content + "\n";
  return s;
}

}  // namespace

void SeedCorpus::add(Seed seed) {
  for (const auto& existing : seeds)
    if (existing.bytes == seed.bytes) return;
  seeds.push_back(std::move(seed));
}

PromptMessages build_prompt(const std::string& applet) {
  if (applet.empty()) throw InputError("applet name must be non-empty");
  PromptMessages msgs;
  msgs.push_back(
      {"system",
       "You are initial seed generator for a fuzzer that has to fuzz BusyBox " +
           applet + " applet. In response only provide the list of " + applet +
           " scripts"});
  msgs.push_back(
      {"user", "Generate initial seed to fuzz BusyBox " + applet + " applet"});
  return msgs;
}

std::vector<Seed> parse_seed_response(const std::string& response_text) {
  std::vector<std::string> candidates;

  // Priority 1: fenced code blocks.
  auto lines = split_lines(response_text);
  bool in_fence = false;
  std::string block;
  bool saw_fence = false;
  for (const auto& line : lines) {
    if (trim(line).rfind("```", 0) == 0) {
      if (in_fence) {
        candidates.push_back(block);
        block.clear();
        saw_fence = true;
      }
      in_fence = !in_fence;
      continue;
    }
    if (in_fence) {
      if (!block.empty()) block += '\n';
      block += line;
    }
  }

  if (!saw_fence) {
    // Priority 2: numbered/bulleted list items; continuation lines attach to
    // the current item.
    static const std::regex item_re(R"(^\s*(?:\d+[.)]|[-*+])\s+(.*)$)");
    std::vector<std::string> items;
    bool any_item = false;
    for (const auto& line : lines) {
      std::smatch m;
      if (std::regex_match(line, m, item_re)) {
        items.push_back(m[1].str());
        any_item = true;
      } else if (any_item && !items.empty() && !trim(line).empty()) {
        items.back() += '\n' + line;
      }
    }
    if (any_item) {
      candidates = std::move(items);
    } else {
      // Priority 3: non-empty lines.
      for (const auto& line : lines)
        if (!trim(line).empty()) candidates.push_back(line);
    }
  }

  std::vector<Seed> seeds;
  std::set<std::vector<std::uint8_t>> seen;
  for (auto& c : candidates) {
    std::string t = trim(c);
    if (t.empty()) continue;
    std::vector<std::uint8_t> bytes(t.begin(), t.end());
    if (!seen.insert(bytes).second) continue;
    Seed s;
    s.bytes = std::move(bytes);
    s.origin = SeedOrigin::LLM;
    seeds.push_back(std::move(s));
  }
  return seeds;
}

SeedCorpus generate_llm_corpus(Provider& provider, const std::string& applet,
                               int min_seeds, int max_attempts) {
  if (min_seeds < 1 || max_attempts < 1)
    throw InputError("min_seeds and max_attempts must be >= 1");

  PromptMessages prompt = build_prompt(applet);
  SeedCorpus corpus;
  corpus.applet = applet;

  int attempts = 0;
  while (attempts < max_attempts &&
         corpus.seeds.size() < static_cast<std::size_t>(min_seeds)) {
    ++attempts;
    std::string response = provider.complete(prompt);
    for (auto& seed : parse_seed_response(response)) corpus.add(std::move(seed));
  }

  if (corpus.seeds.empty())
    throw GenerationError("no seeds after " + std::to_string(attempts) +
                          " attempts for applet " + applet);

  std::size_t i = 0;
  for (auto& s : corpus.seeds) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%s-%03zu", applet.c_str(), i++);
    s.label = buf;
  }
  corpus.generation_metadata["origin"] = "llm";
  corpus.generation_metadata["model_id"] = provider.model_id();
  corpus.generation_metadata["prompt_sha256"] = sha256_hex(prompt_text(prompt));
  corpus.generation_metadata["attempts"] = std::to_string(attempts);
  if (corpus.seeds.size() < static_cast<std::size_t>(min_seeds))
    corpus.generation_metadata["warning"] = "partial_corpus";
  return corpus;
}

SeedCorpus generate_random_corpus(int count, int min_len, int max_len,
                                  std::uint64_t rng_seed) {
  if (count < 1 || min_len < 1 || min_len > max_len)
    throw InputError("bad random-corpus parameters");

  std::mt19937_64 rng(rng_seed);
  std::uniform_int_distribution<int> len_dist(min_len, max_len);
  std::uniform_int_distribution<int> byte_dist(0x20, 0x7e);

  SeedCorpus corpus;
  for (int i = 0; i < count; ++i) {
    Seed s;
    int len = len_dist(rng);
    s.bytes.reserve(static_cast<std::size_t>(len));
    for (int j = 0; j < len; ++j)
      s.bytes.push_back(static_cast<std::uint8_t>(byte_dist(rng)));
    s.origin = SeedOrigin::RANDOM;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "rand-%03d", i);
    s.label = buf;
    corpus.add(std::move(s));
  }
  corpus.generation_metadata["origin"] = "random";
  corpus.generation_metadata["rng_seed"] = std::to_string(rng_seed);
  return corpus;
}

SeedCorpus minimize_corpus(const SeedCorpus& corpus, CoverageOracle& oracle) {
  if (corpus.seeds.empty()) throw InputError("cannot minimize empty corpus");

  struct Measured {
    const Seed* seed;
    std::set<std::uint64_t> edges;
  };
  std::vector<Measured> measured;
  std::vector<std::string> dropped;
  std::set<std::uint64_t> full_union;
  for (const auto& s : corpus.seeds) {
    auto edges = oracle.measure(s.bytes);
    if (!edges || edges->empty()) {
      dropped.push_back(s.label);
      continue;
    }
    full_union.insert(edges->begin(), edges->end());
    measured.push_back({&s, std::move(*edges)});
  }

  SeedCorpus out;
  out.applet = corpus.applet;
  out.generation_metadata = corpus.generation_metadata;
  if (!dropped.empty()) {
    std::string joined;
    for (const auto& l : dropped) joined += (joined.empty() ? "" : ",") + l;
    out.generation_metadata["minimize_dropped"] = joined;
  }

  std::set<std::uint64_t> covered;
  std::vector<bool> taken(measured.size(), false);
  while (covered.size() < full_union.size()) {
    std::size_t best = measured.size();
    std::size_t best_gain = 0;
    for (std::size_t i = 0; i < measured.size(); ++i) {
      if (taken[i]) continue;
      std::size_t gain = 0;
      for (auto e : measured[i].edges)
        if (!covered.count(e)) ++gain;
      if (gain == 0) continue;
      if (best == measured.size() || gain > best_gain) {
        best = i;
        best_gain = gain;
        continue;
      }
      if (gain == best_gain) {
        const Seed* a = measured[i].seed;
        const Seed* b = measured[best].seed;
        if (a->bytes.size() < b->bytes.size() ||
            (a->bytes.size() == b->bytes.size() && a->label < b->label)) {
          best = i;
        }
      }
    }
    if (best == measured.size()) break;
    taken[best] = true;
    covered.insert(measured[best].edges.begin(), measured[best].edges.end());
    out.add(*measured[best].seed);
  }
  return out;
}

void save_corpus(const SeedCorpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& s : corpus.seeds) {
    std::ofstream out(dir / s.label, std::ios::binary);
    out.write(reinterpret_cast<const char*>(s.bytes.data()),
              static_cast<std::streamsize>(s.bytes.size()));
    if (!out) throw StoreError("seed write failed: " + (dir / s.label).string());
  }
  json meta;
  meta["applet"] = corpus.applet;
  for (const auto& [k, v] : corpus.generation_metadata) meta[k] = v;
  if (!meta.contains("created_at")) {
    meta["created_at"] = std::chrono::duration_cast<std::chrono::seconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
  }
  std::ofstream mout(dir / "corpus.meta.json");
  mout << meta.dump(2) << '\n';
}

SeedCorpus load_corpus(const fs::path& dir) {
  SeedCorpus corpus;
  fs::path meta_path = dir / "corpus.meta.json";
  SeedOrigin origin = SeedOrigin::LLM;
  if (fs::exists(meta_path)) {
    std::ifstream in(meta_path);
    json meta = json::parse(in);
    for (auto& [k, v] : meta.items()) {
      if (v.is_string())
        corpus.generation_metadata[k] = v.get<std::string>();
      else
        corpus.generation_metadata[k] = v.dump();
    }
    corpus.applet = meta.value("applet", "");
    if (meta.value("origin", "") == "random") origin = SeedOrigin::RANDOM;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (e.path().filename() == "corpus.meta.json") continue;
    files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    Seed s;
    s.bytes.assign(std::istreambuf_iterator<char>(in),
                   std::istreambuf_iterator<char>());
    if (s.bytes.empty()) continue;
    s.label = p.filename().string();
    s.origin = origin;
    corpus.add(std::move(s));
  }
  return corpus;
}

FixtureProvider::FixtureProvider(const fs::path& dir, std::string model_id)
    : model_id_(std::move(model_id)) {
  if (!fs::is_directory(dir))
    throw ProviderError("fixture directory missing: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& p : files) {
    std::ifstream in(p, std::ios::binary);
    responses_.emplace_back(std::istreambuf_iterator<char>(in),
                            std::istreambuf_iterator<char>());
  }
  if (responses_.empty())
    throw ProviderError("fixture directory has no responses: " + dir.string());
}

std::string FixtureProvider::complete(const PromptMessages&) {
  if (next_ >= responses_.size())
    throw ProviderError("fixture responses exhausted");
  return responses_[next_++];
}

HttpProvider::HttpProvider(ProviderConfig config) : config_(std::move(config)) {
  if (config_.model_id.empty()) throw ConfigError("model_id must be non-empty");
  if (config_.temperature < 0.0 || config_.temperature > 2.0)
    throw ConfigError("temperature out of range [0, 2]");
}

std::string HttpProvider::complete(const PromptMessages& messages) {
  const char* key = std::getenv(config_.credentials_env_var.c_str());
  if (!key)
    throw EnvironmentError("credential env var not set: " +
                           config_.credentials_env_var);

  json body;
  body["model"] = config_.model_id;
  body["temperature"] = config_.temperature;
  body["messages"] = json::array();
  for (const auto& m : messages)
    body["messages"].push_back({{"role", m.role}, {"content", m.content}});

  httplib::Client client(config_.endpoint);
  client.set_connection_timeout(30);
  client.set_read_timeout(120);
  httplib::Headers headers = {
      {"Authorization", std::string("Bearer ") + key}};

  const int kRetries = 3;
  std::string last_error;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    auto res = client.Post("/v1/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->body.size() > config_.max_response_bytes)
      throw ProviderError("response exceeds max_response_bytes");
    try {
      json reply = json::parse(res->body);
      return reply.at("choices").at(0).at("message").at("content")
          .get<std::string>();
    } catch (const std::exception& e) {
      last_error = std::string("malformed response: ") + e.what();
    }
  }
  throw ProviderError("provider failed after retries: " + last_error);
}

}  // namespace fuzzkit

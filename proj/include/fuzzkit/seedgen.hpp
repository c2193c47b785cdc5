#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace fuzzkit {

struct ProviderConfig {
  std::string model_id = "gpt-4-0613";
  double temperature = 0.7;
  std::uint64_t max_response_bytes = 1 << 20;
  std::string endpoint = "https://api.openai.com";
  std::string credentials_env_var = "OPENAI_API_KEY";
};

enum class SeedOrigin { LLM, RANDOM, CRASH_IMPORT };

struct Seed {
  std::vector<std::uint8_t> bytes;  // non-empty
  SeedOrigin origin = SeedOrigin::LLM;
  std::string label;  // e.g. "awk-003"
};

struct SeedCorpus {
  std::vector<Seed> seeds;  // byte-deduplicated
  std::string applet;
  std::map<std::string, std::string> generation_metadata;

  // Appends only seeds whose content is not already present.
  void add(Seed seed);
};

struct PromptMessage {
  std::string role;
  std::string content;
};
using PromptMessages = std::vector<PromptMessage>;

class Provider {
 public:
  virtual ~Provider() = default;
  // Returns the raw completion text; throws ProviderError on failure.
  virtual std::string complete(const PromptMessages& messages) = 0;
  virtual std::string model_id() const = 0;
};

// Replays canned response files ("000.txt", "001.txt", ...) in order.
class FixtureProvider : public Provider {
 public:
  explicit FixtureProvider(const std::filesystem::path& dir,
                           std::string model_id = "fixture");
  std::string complete(const PromptMessages& messages) override;
  std::string model_id() const override { return model_id_; }

 private:
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
  std::string model_id_;
};

// Live chat-completions client. Credential comes from the environment
// variable named in the config, never from config files.
class HttpProvider : public Provider {
 public:
  explicit HttpProvider(ProviderConfig config);
  std::string complete(const PromptMessages& messages) override;
  std::string model_id() const override { return config_.model_id; }

 private:
  ProviderConfig config_;
};

// (seed bytes) -> set of edge ids; nullopt signals measurement failure.
class CoverageOracle {
 public:
  virtual ~CoverageOracle() = default;
  virtual std::optional<std::set<std::uint64_t>> measure(
      std::span<const std::uint8_t> seed_bytes) = 0;
};

class FunctionCoverageOracle : public CoverageOracle {
 public:
  using Fn = std::function<std::optional<std::set<std::uint64_t>>(
      std::span<const std::uint8_t>)>;
  explicit FunctionCoverageOracle(Fn fn) : fn_(std::move(fn)) {}
  std::optional<std::set<std::uint64_t>> measure(
      std::span<const std::uint8_t> bytes) override {
    return fn_(bytes);
  }

 private:
  Fn fn_;
};

PromptMessages build_prompt(const std::string& applet);

std::vector<Seed> parse_seed_response(const std::string& response_text);

SeedCorpus generate_llm_corpus(Provider& provider, const std::string& applet,
                               int min_seeds, int max_attempts);

SeedCorpus generate_random_corpus(int count, int min_len, int max_len,
                                  std::uint64_t rng_seed);

SeedCorpus minimize_corpus(const SeedCorpus& corpus, CoverageOracle& oracle);

void save_corpus(const SeedCorpus& corpus, const std::filesystem::path& dir);
SeedCorpus load_corpus(const std::filesystem::path& dir);

}  // namespace fuzzkit

#pragma once

#include <atomic>
#include <cctype>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyspec/dataset.hpp"
#include "polyspec/errors.hpp"
#include "polyspec/rng.hpp"

namespace polyspec {

enum class PromptVariant { vanilla, cot, vote, hybrid };

inline std::string to_string(PromptVariant v) {
  switch (v) {
    case PromptVariant::vanilla: return "vanilla";
    case PromptVariant::cot: return "cot";
    case PromptVariant::vote: return "vote";
    case PromptVariant::hybrid: return "hybrid";
  }
  return "?";
}

inline PromptVariant parse_prompt_variant(const std::string& s) {
  if (s == "vanilla") return PromptVariant::vanilla;
  if (s == "cot") return PromptVariant::cot;
  if (s == "vote") return PromptVariant::vote;
  if (s == "hybrid") return PromptVariant::hybrid;
  throw ConfigError("unknown prompt strategy '" + s + "'");
}

/// Prompting strategy: reasoning controls the step-by-step suffix, voting
/// controls how many queries are issued per edge (odd, so a majority always
/// exists).
struct PromptStrategy {
  PromptVariant variant = PromptVariant::hybrid;
  int votes = 5;

  bool uses_reasoning() const {
    return variant == PromptVariant::cot || variant == PromptVariant::hybrid;
  }
  bool uses_voting() const {
    return variant == PromptVariant::vote || variant == PromptVariant::hybrid;
  }

  void validate() const {
    if (votes < 1) throw ConfigError("PromptStrategy: votes must be >= 1");
    if (votes > 1 && votes % 2 == 0) {
      throw ConfigError("PromptStrategy: vote count must be odd");
    }
    if (!uses_voting() && votes != 1) {
      throw ConfigError("PromptStrategy: " + to_string(variant) + " issues a single query");
    }
  }

  static PromptStrategy make(PromptVariant v, int votes = 0) {
    PromptStrategy s;
    s.variant = v;
    s.votes = votes > 0 ? votes : (s.uses_voting() ? 5 : 1);
    s.validate();
    return s;
  }
};

struct ChatRequest {
  std::string system;
  std::string user;
  std::string model;  // empty -> client default
  double temperature = 0.0;
};

struct ChatResponse {
  std::string text;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  bool has_usage = true;
};

/// Edge identity attached to each query so deterministic offline clients can
/// derive their randomness from (seed, edge, query index). Transport-backed
/// clients ignore it.
struct QueryMeta {
  int u = -1;
  int v = -1;
  int query_index = 0;
};

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& request, const QueryMeta& meta) = 0;
};

struct PromptOptions {
  std::size_t char_budget = 4000;  // per rendered node payload
};

struct VoteOptions {
  // Extra queries allowed per edge to replace unparseable answers. Off by
  // default: an unparseable answer then simply counts as not-same, keeping
  // the query count fixed.
  int requery_budget = 0;
};

/// Render the two-node classification prompt. Reasoning strategies append
/// the step-by-step suffix; the others ask for the verdict directly.
/// Voting strategies sample at temperature 1 (distinct answers are the
/// point); single-query strategies run greedy at temperature 0.
inline ChatRequest build_prompt(const NodeText& node_u, const NodeText& node_v,
                                const std::vector<std::string>& categories,
                                const PromptStrategy& strategy,
                                const PromptOptions& opts = {}) {
  strategy.validate();
  if (categories.empty()) throw PromptError("build_prompt: empty category list");
  auto render = [&opts](const NodeText& t) {
    if (t.title.empty() && t.text.empty()) {
      throw PromptError("build_prompt: node has no text");
    }
    std::string payload = t.title + ", " + t.text;
    if (payload.size() > opts.char_budget) payload.resize(opts.char_budget);
    return payload;
  };
  std::string cats;
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (i) cats += ", ";
    cats += categories[i];
  }
  ChatRequest req;
  req.system = "You are a chatbot expert in text classification.";
  req.user = "We have two node texts from the following categories: " + cats +
             ". The texts are as follows:\n"
             "Node v_i → {" + render(node_u) + "}.\n"
             "Node v_j → {" + render(node_v) + "}.\n"
             "Please tell me whether they belong to the same category or not";
  req.user += strategy.uses_reasoning() ? " after reasoning step by step." : ".";
  req.temperature = strategy.uses_voting() ? 1.0 : 0.0;
  return req;
}

enum class Verdict { same, different, unparseable };

namespace detail {

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline bool matches_at(const std::string& s, std::size_t pos, const std::string& needle) {
  return s.compare(pos, needle.size(), needle) == 0;
}

inline bool word_at(const std::string& s, std::size_t pos, const std::string& needle) {
  if (!matches_at(s, pos, needle)) return false;
  if (pos > 0 && is_word_char(s[pos - 1])) return false;
  const std::size_t end = pos + needle.size();
  return end >= s.size() || !is_word_char(s[end]);
}

// Look back within the current sentence for a negation in front of a
// "same category" match.
inline bool negated_before(const std::string& s, std::size_t pos) {
  const std::size_t window = pos > 64 ? pos - 64 : 0;
  for (std::size_t i = pos; i-- > window;) {
    if (s[i] == '.' || s[i] == '!' || s[i] == '?') return false;
    if (word_at(s, i, "not") || matches_at(s, i, "n't")) return true;
  }
  return false;
}

}  // namespace detail

/// Scan the response for a verdict. The cues are "same category"/"yes" for
/// a homophilic answer and "not the same"/"different"/"no" for the
/// opposite; the last cue in the text wins, so the conclusion of a
/// step-by-step answer overrides earlier hedging. "yes"/"no" must be whole
/// words, and "same category" respects a leading negation in the same
/// sentence. Anything cue-free is unparseable.
inline Verdict parse_verdict(const std::string& response) {
  std::string s;
  s.reserve(response.size());
  for (char c : response) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));

  Verdict last = Verdict::unparseable;
  std::size_t i = 0;
  while (i < s.size()) {
    if (detail::matches_at(s, i, "not the same")) {
      last = Verdict::different;
      i += 12;
    } else if (detail::matches_at(s, i, "different")) {
      last = Verdict::different;
      i += 9;
    } else if (detail::matches_at(s, i, "same category")) {
      last = detail::negated_before(s, i) ? Verdict::different : Verdict::same;
      i += 13;
    } else if (detail::word_at(s, i, "yes")) {
      last = Verdict::same;
      i += 3;
    } else if (detail::word_at(s, i, "no")) {
      last = Verdict::different;
      i += 2;
    } else {
      ++i;
    }
  }
  return last;
}

struct CostRates {
  double input_per_million = 0.0;
  double output_per_million = 0.0;
};

struct Usage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  double cost_usd = 0.0;
  int missing_usage = 0;  // responses that carried no token counts

  void add(const ChatResponse& r) {
    if (r.has_usage) {
      prompt_tokens += r.prompt_tokens;
      completion_tokens += r.completion_tokens;
    } else {
      ++missing_usage;
    }
  }
  void merge(const Usage& other) {
    prompt_tokens += other.prompt_tokens;
    completion_tokens += other.completion_tokens;
    missing_usage += other.missing_usage;
  }
  void price(const CostRates& rates) {
    cost_usd = prompt_tokens * rates.input_per_million / 1e6 +
               completion_tokens * rates.output_per_million / 1e6;
  }
};

/// Sum provider-reported token counts and price them. Responses without
/// usage fields count as zero and bump the missing_usage counter.
inline Usage accumulate_usage(const std::vector<ChatResponse>& responses,
                              const CostRates& rates = {}) {
  Usage u;
  for (const auto& r : responses) u.add(r);
  u.price(rates);
  return u;
}

/// Outcome of querying one edge `votes` times. same_count is the number of
/// homophilic verdicts; label is the majority decision (unparseable counts
/// against homophily so the query count stays fixed).
struct EdgeVote {
  int u = 0, v = 0;
  std::vector<Verdict> responses;
  int same_count = 0;  // r
  int label = 0;       // y
  Usage usage;
  int transport_failures = 0;
};

inline int majority_threshold(int votes) { return (votes + 1) / 2; }

/// Issue the strategy's query count for one edge and take the majority.
/// Individual transport failures count as unparseable; if every query fails
/// the edge is reported as an error so the caller can exclude it.
inline EdgeVote vote_edge(ChatClient& client, std::pair<int, int> edge,
                          const NodeText& text_u, const NodeText& text_v,
                          const std::vector<std::string>& categories,
                          const PromptStrategy& strategy, const CostRates& rates = {},
                          const PromptOptions& opts = {}, const VoteOptions& vopts = {}) {
  strategy.validate();
  const ChatRequest request = build_prompt(text_u, text_v, categories, strategy, opts);
  EdgeVote vote;
  vote.u = edge.first;
  vote.v = edge.second;
  vote.responses.reserve(strategy.votes);
  int requeries_left = vopts.requery_budget;
  int next_query_index = strategy.votes;  // indices past the base set
  for (int q = 0; q < strategy.votes; ++q) {
    int query_index = q;
    Verdict verdict = Verdict::unparseable;
    for (;;) {
      bool failed = false;
      try {
        const ChatResponse response =
            client.complete(request, {edge.first, edge.second, query_index});
        vote.usage.add(response);
        verdict = parse_verdict(response.text);
      } catch (const TransportError&) {
        failed = true;
      }
      if (failed) {
        if (query_index == q) ++vote.transport_failures;
        break;
      }
      if (verdict != Verdict::unparseable || requeries_left <= 0) break;
      --requeries_left;
      query_index = next_query_index++;
    }
    vote.responses.push_back(verdict);
    if (verdict == Verdict::same) ++vote.same_count;
  }
  if (vote.transport_failures == strategy.votes) {
    throw EdgeVoteError("vote_edge: all " + std::to_string(strategy.votes) +
                        " queries failed for edge (" + std::to_string(edge.first) + "," +
                        std::to_string(edge.second) + ")");
  }
  vote.label = vote.same_count >= majority_threshold(strategy.votes) ? 1 : 0;
  vote.usage.price(rates);
  return vote;
}

/// Estimated homophily with its full evidence trail.
struct HomophilyEstimate {
  double h_hat = 0.0;
  std::vector<EdgeVote> votes;
  Usage usage;
  std::vector<std::pair<int, int>> failed_edges;   // transport-dead edges
  std::vector<std::pair<int, int>> skipped_edges;  // no text available
};

/// h = (# edges voted homophilic) / (# voted edges).
inline HomophilyEstimate estimate_homophily(std::vector<EdgeVote> votes,
                                            const CostRates& rates = {}) {
  if (votes.empty()) throw EstimationError("estimate_homophily: no edge votes");
  HomophilyEstimate est;
  std::size_t same = 0;
  for (const auto& v : votes) {
    same += v.label == 1 ? 1 : 0;
    est.usage.merge(v.usage);
  }
  est.usage.price(rates);
  est.h_hat = std::clamp(static_cast<double>(same) / static_cast<double>(votes.size()),
                         0.0, 1.0);
  est.votes = std::move(votes);
  return est;
}

/// Offline stand-in for the chat endpoint: answers with the true verdict
/// 1(y_u = y_v), flipped independently with probability flip_prob. The coin
/// depends only on (seed, edge, query index), so results are identical
/// under any concurrency or query order.
class MockClient : public ChatClient {
 public:
  MockClient(std::vector<int> labels, double flip_prob, std::uint64_t seed)
      : labels_(std::move(labels)), flip_prob_(flip_prob), seed_(seed) {
    if (flip_prob < 0.0 || flip_prob >= 0.5) {
      throw InvalidInputError("MockClient: flip probability must lie in [0, 0.5)");
    }
  }

  ChatResponse complete(const ChatRequest& request, const QueryMeta& meta) override {
    if (meta.u < 0 || meta.v < 0 || meta.u >= static_cast<int>(labels_.size()) ||
        meta.v >= static_cast<int>(labels_.size())) {
      throw InvalidInputError("MockClient: query lacks valid edge metadata");
    }
    const int lo = std::min(meta.u, meta.v), hi = std::max(meta.u, meta.v);
    std::uint64_t key = hash_combine(seed_, static_cast<std::uint64_t>(lo));
    key = hash_combine(key, static_cast<std::uint64_t>(hi));
    key = hash_combine(key, static_cast<std::uint64_t>(meta.query_index));
    const bool flip = bits_to_unit_double(splitmix64(key)) < flip_prob_;
    const bool same = (labels_[meta.u] == labels_[meta.v]) != flip;
    ChatResponse r;
    r.text = same ? "They belong to the same category."
                  : "They belong to different categories.";
    r.prompt_tokens = static_cast<long>((request.system.size() + request.user.size()) / 4);
    r.completion_tokens = static_cast<long>(r.text.size() / 4);
    return r;
  }

 private:
  std::vector<int> labels_;
  double flip_prob_;
  std::uint64_t seed_;
};

struct EstimationOptions {
  PromptStrategy strategy = PromptStrategy::make(PromptVariant::hybrid);
  CostRates rates{};
  int parallelism = 1;
  PromptOptions prompt{};
  VoteOptions vote{};
};

namespace detail {

inline NodeText placeholder_text(int node) {
  return {"Node " + std::to_string(node), "node " + std::to_string(node)};
}

}  // namespace detail

/// Vote every edge of the sample and aggregate. Edges without usable text
/// are skipped; edges whose every query dies in transport are reported as
/// failed. Both shrink the sample the ratio is taken over. Datasets without
/// texts get neutral placeholders (useful with offline clients, which
/// ignore prompt content).
inline HomophilyEstimate run_estimation(ChatClient& client, const Dataset& ds,
                                        const EdgeSample& sample,
                                        const EstimationOptions& opts = {}) {
  opts.strategy.validate();
  std::vector<std::string> categories = ds.categories;
  if (categories.empty()) {
    categories.resize(ds.num_classes);
    for (int c = 0; c < ds.num_classes; ++c) categories[c] = "class_" + std::to_string(c);
  }

  const auto& edges = sample.edges;
  std::vector<EdgeVote> votes(edges.size());
  std::vector<int> status(edges.size(), 0);  // 0 ok, 1 failed, 2 skipped

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto [u, v] = edges[i];
      NodeText tu = ds.has_texts() ? ds.texts[u] : detail::placeholder_text(u);
      NodeText tv = ds.has_texts() ? ds.texts[v] : detail::placeholder_text(v);
      if ((tu.title.empty() && tu.text.empty()) || (tv.title.empty() && tv.text.empty())) {
        status[i] = 2;
        continue;
      }
      try {
        votes[i] = vote_edge(client, edges[i], tu, tv, categories, opts.strategy,
                             opts.rates, opts.prompt, opts.vote);
      } catch (const EdgeVoteError&) {
        status[i] = 1;
      }
    }
  };

  const int workers = std::max(1, opts.parallelism);
  if (workers == 1 || edges.size() < 2) {
    work(0, edges.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (edges.size() + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      if (begin >= edges.size()) break;
      pool.emplace_back(work, begin, std::min(edges.size(), begin + chunk));
    }
    for (auto& t : pool) t.join();
  }

  std::vector<EdgeVote> ok;
  ok.reserve(edges.size());
  HomophilyEstimate est;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (status[i] == 0) {
      ok.push_back(std::move(votes[i]));
    } else if (status[i] == 1) {
      est.failed_edges.push_back(edges[i]);
    } else {
      est.skipped_edges.push_back(edges[i]);
    }
  }
  if (ok.empty()) {
    throw EstimationError("run_estimation: no edge produced a usable vote");
  }
  auto base = estimate_homophily(std::move(ok), opts.rates);
  base.failed_edges = std::move(est.failed_edges);
  base.skipped_edges = std::move(est.skipped_edges);
  return base;
}

/// JSON artifact written by the estimation pipeline.
inline nlohmann::json estimate_to_json(const HomophilyEstimate& est, int sample_size,
                                       int votes_per_edge, const std::string& strategy) {
  nlohmann::json per_edge = nlohmann::json::array();
  for (const auto& v : est.votes) {
    per_edge.push_back({{"u", v.u}, {"v", v.v}, {"r", v.same_count}, {"y", v.label}});
  }
  nlohmann::json failed = nlohmann::json::array();
  for (const auto& [u, v] : est.failed_edges) failed.push_back({{"u", u}, {"v", v}});
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& [u, v] : est.skipped_edges) skipped.push_back({{"u", u}, {"v", v}});
  return nlohmann::json{
      {"h_hat", est.h_hat},
      {"sample_size", sample_size},
      {"votes_per_edge", votes_per_edge},
      {"strategy", strategy},
      {"per_edge", per_edge},
      {"failed_edges", failed},
      {"skipped_edges", skipped},
      {"usage",
       {{"prompt_tokens", est.usage.prompt_tokens},
        {"completion_tokens", est.usage.completion_tokens},
        {"cost_usd", est.usage.cost_usd},
        {"missing_usage", est.usage.missing_usage}}},
  };
}

}  // namespace polyspec

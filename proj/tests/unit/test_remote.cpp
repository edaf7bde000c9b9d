#include <future>
#include <vector>

#include <gtest/gtest.h>

#include "primelens/error.hpp"
#include "primelens/remote.hpp"
#include "stub_server.hpp"

using namespace primelens;
using primelens::testing::StubOptions;
using primelens::testing::StubServer;
using nlohmann::json;

namespace {

EndpointConfig fast_config(const StubServer& server) {
  EndpointConfig c;
  c.url = server.url();
  c.timeout_s = 5.0;
  c.retry.base_delay_s = 0.01;
  c.retry.jitter = 0.0;
  c.empty_context_prefix = "<|endoftext|>";
  return c;
}

json echo_body(const std::vector<std::string>& tokens, const std::vector<json>& logprobs,
               const std::vector<int>& offsets) {
  return {{"choices", json::array({{{"logprobs",
                                     {{"tokens", tokens}, {"token_logprobs", logprobs}, {"text_offset", offsets}}}}})}};
}

}  // namespace

TEST(Remote, PromptJoinsContextWithSeparator) {
  EndpointConfig c;
  auto p = build_prompt({"A b .", "The c .", "m"}, c);
  EXPECT_EQ(p.text, "A b . The c .");
  EXPECT_EQ(p.continuation_begin, 6u);
  c.empty_context_prefix = "<s>";
  p = build_prompt({"", "The c .", "m"}, c);
  EXPECT_EQ(p.text, "<s>The c .");
  EXPECT_EQ(p.continuation_begin, 3u);
}

TEST(Remote, FixedLogprobsPassThrough) {
  Prompt p{"ctx ab", 4};
  auto seq = parse_completion_response(echo_body({"ctx", " a", "b"}, {nullptr, -1.0, -2.0}, {0, 3, 5}), p, 0.0, "x");
  ASSERT_EQ(seq.tokens.size(), 2u);
  EXPECT_EQ(seq.total_logprob, -3.0);
  // The first token absorbed the separator, so it starts the continuation.
  EXPECT_EQ(seq.tokens[0].span, (CharSpan{0, 1}));
  EXPECT_EQ(seq.tokens[1].span, (CharSpan{1, 2}));
}

TEST(Remote, HalfCoverageRaises) {
  Prompt p{"ctx abcd", 4};
  EXPECT_THROW(parse_completion_response(echo_body({"ctx", " ab"}, {nullptr, -1.0}, {0, 3}), p, 0.0, "x"),
               CoverageError);
}

TEST(Remote, MalformedResponsesRaiseProtocolErrors) {
  Prompt p{"ctx ab", 4};
  EXPECT_THROW(parse_completion_response(json::object(), p, 0.0, "x"), ProtocolError);
  EXPECT_THROW(parse_completion_response(echo_body({"ctx", " ab"}, {nullptr, nullptr}, {0, 3}), p, 0.0, "x"),
               ProtocolError);
  EXPECT_THROW(parse_completion_response(echo_body({"ctx", " ab"}, {nullptr}, {0, 3}), p, 0.0, "x"),
               ProtocolError);
}

TEST(Remote, BaseTwoLogprobsConvertToNats) {
  Prompt p{"c ab", 2};
  auto seq = parse_completion_response(echo_body({"c", " ab"}, {nullptr, -1.0}, {0, 1}), p, 2.0, "x");
  EXPECT_DOUBLE_EQ(seq.total_logprob, -std::log(2.0));
}

TEST(Remote, StubRoundTripMatchesStubScores) {
  StubServer server;
  auto cfg = fast_config(server);
  const std::string ctx = "A teacher handed a letter to a nurse .";
  const std::string cont = "The architect gave the map to the king .";
  auto seq = fetch_remote({ctx, cont, "m"}, cfg);
  EXPECT_NO_THROW(validate_sequence(seq, cont.size()));

  const std::string prompt = ctx + " " + cont;
  double expected = 0.0;
  for (const auto& piece : primelens::testing::stub_tokenize(prompt)) {
    if (piece.offset + piece.text.size() <= ctx.size()) continue;
    expected += primelens::testing::stub_logprob(prompt.substr(0, piece.offset), piece.text);
  }
  EXPECT_NEAR(seq.total_logprob, expected, 1e-12);
  EXPECT_EQ(server.prompts().at(0), prompt);
}

TEST(Remote, TransientFailuresAreRetried) {
  StubOptions opts;
  opts.transient_failures = 2;
  StubServer server(opts);
  FetchStats stats;
  auto seq = fetch_remote({"", "The girl .", "m"}, fast_config(server), &stats);
  EXPECT_EQ(stats.retries, 2u);
  EXPECT_EQ(stats.attempts, 3u);
  EXPECT_EQ(server.requests(), 3u);
  EXPECT_EQ(seq.tokens.size(), 3u);
}

TEST(Remote, PersistentFailureGivesUp) {
  StubOptions opts;
  opts.fail_substrings = {"girl"};
  StubServer server(opts);
  auto cfg = fast_config(server);
  cfg.retry.max_attempts = 3;
  EXPECT_THROW(fetch_remote({"", "The girl .", "m"}, cfg), BackendUnavailable);
  EXPECT_EQ(server.requests(), 3u);
}

TEST(Remote, UnreachableEndpointIsUnavailable) {
  EndpointConfig cfg;
  cfg.url = "http://127.0.0.1:1";
  cfg.timeout_s = 1.0;
  cfg.retry.base_delay_s = 0.0;
  cfg.retry.max_attempts = 2;
  EXPECT_THROW(fetch_remote({"x", "y", "m"}, cfg), BackendUnavailable);
  cfg.url.clear();
  EXPECT_THROW(fetch_remote({"x", "y", "m"}, cfg), ConfigError);
}

TEST(Remote, InFlightCapIsRespected) {
  StubOptions opts;
  opts.delay_ms = 30;
  StubServer server(opts);
  auto cfg = fast_config(server);
  cfg.max_in_flight = 2;
  RemoteScorer scorer(cfg, "stub");
  std::vector<std::future<ScoredSequence>> futures;
  for (int i = 0; i < 8; ++i) {
    futures.push_back(std::async(std::launch::async, [&scorer, i] {
      return scorer.score({"", "The girl number " + std::to_string(i) + " .", "m"});
    }));
  }
  for (auto& f : futures) f.get();
  EXPECT_LE(scorer.peak_in_flight(), 2u);
  EXPECT_LE(server.peak_concurrency(), 2u);
  EXPECT_EQ(server.requests(), 8u);
}

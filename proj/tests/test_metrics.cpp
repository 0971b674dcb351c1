#include <doctest.h>

#include <cmath>

#include "oracle.hpp"
#include "raftlab/error.hpp"
#include "raftlab/metrics.hpp"

using namespace raftlab;

TEST_CASE("mean test reward hand values") {
  const RewardTable table(1, 4, {0.0, 1.0, 2.0, 3.0}, 3.0);
  const PromptId prompts[] = {0};
  CHECK(mean_test_reward(BanditPolicy(1, 4), table, prompts) == 1.5);
  const Policy sharp = BanditPolicy(1, 4, {-900.0, -900.0, 900.0, -900.0});
  CHECK(mean_test_reward(sharp, table, prompts) == 2.0);
}

TEST_CASE("Monte-Carlo test reward is within 3 sigma of exact") {
  const Policy p = BanditPolicy(2, 3, {0.3, -0.2, 1.0, 0.0, 2.0, -1.0});
  const RewardTable table(2, 3, {0.2, 0.9, 0.4, 0.1, 0.5, 1.0}, 1.0);
  const std::vector<PromptId> prompts{0, 1};
  const double exact = mean_test_reward(p, table, prompts);
  MonteCarlo mc;
  mc.samples_per_prompt = 10000;
  mc.seed = 3;
  const double est = mean_test_reward(p, table, prompts, mc);
  double var = 0.0;
  for (PromptId x : prompts) {
    const auto d = exact_distribution(p, x, 1.0);
    double m1 = 0, m2 = 0;
    for (std::size_t y = 0; y < 3; ++y) {
      m1 += d[y] * table.score(x, y);
      m2 += d[y] * table.score(x, y) * table.score(x, y);
    }
    var += (m2 - m1 * m1) / 4.0 / 10000.0;
  }
  CHECK(std::abs(est - exact) <= 3 * std::sqrt(var));
}

TEST_CASE("perplexity oracles") {
  const SeqPolicy uniform(3, 7, 4);
  const std::vector<Example> refs{{0, 0}, {1, 55}, {2, 2400}};
  CHECK(perplexity(uniform, refs).value == 7.0);
  CHECK(perplexity(BanditPolicy(2, 32), std::vector<Example>{{0, 3}, {1, 9}}).value == 32.0);

  const Policy certain = BanditPolicy(1, 2, {0.0, -2000.0});
  CHECK(perplexity(certain, std::vector<Example>{{0, 0}}).value == 1.0);

  // Two-token policy: position 0 has p(0) = 0.8; position 1 has p(1 | prev)
  // = 0.5 after 0 and 0.9 after 1.
  const double l8 = std::log(4.0), l9 = std::log(9.0);
  const SeqPolicy two(1, 2, 2, {0.0, -l8, 0.0, 0.0, 0.0, l9});
  const std::vector<Example> hand{{0, two.encode(std::vector<Token>{0, 1})}, {0, two.encode(std::vector<Token>{1, 1})}};
  const double nll = -(std::log(0.8) + std::log(0.5) + std::log(0.2) + std::log(0.9)) / 4.0;
  CHECK(perplexity(two, hand).value == doctest::Approx(std::exp(nll)).epsilon(1e-12));
  CHECK_THROWS_AS(perplexity(two, std::vector<Example>{}), DomainError);
}

TEST_CASE("KL hand values and properties") {
  const std::vector<double> p{0.5, 0.5}, q{0.75, 0.25};
  const double expect = 0.5 * std::log(2.0 / 3.0) + 0.5 * std::log(2.0);
  CHECK(kl_divergence(p, q).value == doctest::Approx(expect).epsilon(1e-14));
  CHECK(kl_divergence(p, q).value == doctest::Approx(0.1438).epsilon(1e-3));
  const std::vector<double> zero{1.0, 0.0};
  CHECK(kl_divergence(p, zero).infinite);
  CHECK(kl_divergence(zero, p).value == doctest::Approx(std::log(2.0)));

  const Policy a = BanditPolicy(1, 2);
  const Policy b = BanditPolicy(1, 2, {std::log(3.0), 0.0});
  const PromptId prompts[] = {0};
  CHECK(kl_to_reference(a, b, prompts).value == doctest::Approx(expect).epsilon(1e-12));
  CHECK(kl_to_reference(b, b, prompts).value == 0.0);
}

TEST_CASE("diversity hand corpora") {
  const std::vector<std::vector<Token>> aaaa{{0, 0, 0, 0}};
  const auto d1 = diversity(aaaa);
  CHECK(d1.distinct_1 == 0.25);
  CHECK(d1.unique_1 == 0);
  CHECK(d1.short_corpus);
  CHECK(d1.msttr_100 == 0.25);

  std::vector<Token> hundred(100);
  for (Token i = 0; i < 100; ++i) hundred[i] = i;
  const auto d2 = diversity(std::vector<std::vector<Token>>{hundred});
  CHECK(d2.msttr_100 == 1.0);
  CHECK(d2.unique_1 == 100);
  CHECK_FALSE(d2.short_corpus);

  const std::vector<std::vector<Token>> abab{{0, 1, 0, 1}};
  const auto d3 = diversity(abab);
  CHECK(d3.distinct_2 == 2.0 / 3.0);
  CHECK(d3.unique_2 == 1);
  CHECK(d3.mean_length == 4.0);
}

TEST_CASE("MSTTR drops the partial tail and n-grams stay within texts") {
  std::vector<std::vector<Token>> texts;
  for (int i = 0; i < 25; ++i) texts.push_back({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});  // 250 tokens
  const auto d = diversity(texts);
  CHECK(d.msttr_100 == 0.1);
  CHECK(d.mean_length == 10.0);
  // 9 bigrams per text, none crossing texts: (9, 0) never appears.
  CHECK(d.distinct_2 == 9.0 / 225.0);

  const std::vector<std::vector<Token>> singles{{3}, {4}, {3}};
  const auto s = diversity(singles);
  CHECK(s.distinct_2 == 0.0);
  CHECK(s.unique_2 == 0);
  CHECK(s.unique_1 == 1);
  CHECK_THROWS_AS(diversity(std::vector<std::vector<Token>>{}), DomainError);
}

TEST_CASE("eval report row has a fixed field order") {
  EvalReport r;
  r.mean_test_reward = 0.5;
  r.perplexity = 2;
  r.kl_to_initial = 0.25;
  r.diversity.msttr_100 = 1;
  r.diversity.distinct_1 = 0.5;
  r.diversity.distinct_2 = 0.75;
  r.diversity.unique_1 = 3;
  r.diversity.unique_2 = 4;
  r.diversity.mean_length = 6;
  CHECK(eval_report_row(r) == "0.5,2,0.25,1,0.5,0.75,3,4,6");
  CHECK(std::string(kEvalReportHeader).find("mean_test_reward,perplexity") == 0);
}

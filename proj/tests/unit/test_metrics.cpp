#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "gen.hpp"
#include "oracles.hpp"
#include "synthdial/error.hpp"
#include "synthdial/metrics.hpp"

using namespace synthdial;
using namespace synthdial::metrics;

namespace {

std::string join(const Tokens& t) {
  std::string out;
  for (const auto& s : t) out += (out.empty() ? "" : " ") + s;
  return out;
}

Lexicon tiny_lexicon() {
  return Lexicon({{"cough", "C1", "cough", SemanticGroup::parse("DISO")},
                  {"aspirin", "C2", "aspirin", SemanticGroup::parse("CHEM")},
                  {"knee", "C3", "knee", SemanticGroup::parse("ANAT")}});
}

}  // namespace

TEST(Tokenize, Rules) {
  EXPECT_EQ(tokenize("Doctor: Hi, Brian!"), (Tokens{"doctor", "hi", "brian"}));
  EXPECT_EQ(tokenize("20 mg/day"), (Tokens{"20", "mg", "day"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("caf\xc3\xa9 au"), (Tokens{"caf", "au"}));
}

TEST(SplitSentences, Boundaries) {
  EXPECT_EQ(split_sentences("a b. c d!\ne f? g"),
            (std::vector<std::string>{"a b.", "c d!", "e f?", "g"}));
  EXPECT_EQ(split_sentences("3.5 mg"), (std::vector<std::string>{"3.5 mg"}));
  EXPECT_TRUE(split_sentences(" \n ").empty());
}

TEST(Rouge, CatMat) {
  const auto r1 = rouge_n("the cat sat on the mat", "the cat is on the mat", 1);
  EXPECT_DOUBLE_EQ(r1.precision, 5.0 / 6);
  EXPECT_DOUBLE_EQ(r1.recall, 5.0 / 6);
  EXPECT_DOUBLE_EQ(r1.f1, 5.0 / 6);
  const auto r2 = rouge_n("the cat sat on the mat", "the cat is on the mat", 2);
  EXPECT_DOUBLE_EQ(r2.precision, 3.0 / 5);
  EXPECT_DOUBLE_EQ(r2.recall, 3.0 / 5);
  EXPECT_DOUBLE_EQ(r2.f1, 3.0 / 5);
  const auto rl = rouge_l("the cat sat on the mat", "the cat is on the mat");
  EXPECT_DOUBLE_EQ(rl.f1, 5.0 / 6);
}

TEST(Rouge, Degenerate) {
  const auto z = rouge_l("a b", "c d");
  EXPECT_EQ(z.precision, 0);
  EXPECT_EQ(z.recall, 0);
  EXPECT_EQ(z.f1, 0);
  EXPECT_EQ(rouge_n("", "", 1).f1, 0);
  EXPECT_EQ(rouge_l("x a y b", "a b").recall, 1.0);
  EXPECT_THROW(rouge_n("a", "a", 0), Error);
}

TEST(Rouge, LsumWorkedExample) {
  const auto s = rouge_lsum("the cat sat. dogs bark", "the cat sat");
  EXPECT_DOUBLE_EQ(s.recall, 1.0);
  EXPECT_DOUBLE_EQ(s.precision, 3.0 / 5);
  EXPECT_DOUBLE_EQ(s.f1, 0.75);
  EXPECT_DOUBLE_EQ(rouge_lsum("a b c", "a b c").f1, 1.0);
}

TEST(Rouge, LsumSingleSentenceEqualsRougeL) {
  gen::Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto a = join(gen::tokens(rng, 5, 0, 20));
    const auto b = join(gen::tokens(rng, 5, 0, 20));
    const auto l = rouge_l(a, b);
    const auto s = rouge_lsum(a, b);
    EXPECT_NEAR(l.f1, s.f1, 1e-12) << a << " | " << b;
  }
}

TEST(Rouge, SymmetryAndBounds) {
  gen::Rng rng(12);
  for (int i = 0; i < 300; ++i) {
    const auto a = gen::tokens(rng, 5, 0, 30);
    const auto b = gen::tokens(rng, 5, 0, 30);
    for (int n = 1; n <= 3; ++n) {
      EXPECT_DOUBLE_EQ(rouge_n(a, b, n).precision, rouge_n(b, a, n).recall);
    }
    for (const auto& s : {rouge_n(a, b, 1), rouge_l(a, b)}) {
      EXPECT_GE(s.f1, 0);
      EXPECT_LE(s.f1, 1);
    }
    Tokens ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    if (!b.empty()) EXPECT_DOUBLE_EQ(rouge_l(ab, b).recall, 1.0);
  }
}

TEST(Rouge, MatchesOracle) {
  gen::Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const auto a = gen::tokens(rng, 5, 0, 30);
    const auto b = gen::tokens(rng, 5, 0, 30);
    for (int n = 1; n <= 2; ++n) {
      const auto got = rouge_n(a, b, n);
      const auto want = oracle::rouge_n(a, b, n);
      ASSERT_NEAR(got.precision, want.p, 1e-9);
      ASSERT_NEAR(got.recall, want.r, 1e-9);
      ASSERT_NEAR(got.f1, want.f, 1e-9);
    }
    const auto l = rouge_l(a, b);
    const auto ol = oracle::rouge_l(a, b);
    ASSERT_NEAR(l.f1, ol.f, 1e-9);
    ASSERT_EQ(lcs_length(a, b), oracle::lcs(a, b));
  }
}

TEST(Rouge, LsumMatchesOracle) {
  gen::Rng rng(14);
  for (int i = 0; i < 500; ++i) {
    const auto cs = gen::sentences(rng, 5, 4, 8);
    const auto rs = gen::sentences(rng, 5, 4, 8);
    const auto got = rouge_lsum(gen::join_sentences(rng, cs),
                                gen::join_sentences(rng, rs));
    const auto want = oracle::rouge_lsum(cs, rs);
    ASSERT_NEAR(got.precision, want.p, 1e-9);
    ASSERT_NEAR(got.recall, want.r, 1e-9);
    ASSERT_NEAR(got.f1, want.f, 1e-9);
    ASSERT_LE(got.f1, 1.0);
  }
}

TEST(Bleu, BrevityPenalty) {
  const double b = corpus_bleu(std::vector<std::string>{"the cat"},
                               {{"the cat sat"}}, 1, Smoothing::none());
  EXPECT_NEAR(b, std::exp(-0.5), 1e-15);
}

TEST(Bleu, ZeroOverlapAndIdentity) {
  EXPECT_EQ(corpus_bleu(std::vector<std::string>{"w x"}, {{"a b"}}, 1), 0.0);
  EXPECT_DOUBLE_EQ(
      corpus_bleu(std::vector<std::string>{"a b c d e", "f g h i"},
                  {{"a b c d e"}, {"f g h i"}}),
      1.0);
  EXPECT_EQ(corpus_bleu(std::vector<std::string>{""}, {{"a"}}), 0.0);
  EXPECT_THROW(corpus_bleu(std::vector<std::string>{"a"}, {}), Error);
}

TEST(Bleu, ClosestReferencePrefersShorterOnTie) {
  const Tokens c = {"a", "b", "c"};
  const Tokens r2 = {"a", "b"};
  const Tokens r4 = {"a", "b", "c", "d"};
  EXPECT_EQ(bleu_stats(c, {&r4, &r2}, 1).ref_len, 2);
}

TEST(Bleu, SmoothingLiftsZeroOrders) {
  const std::vector<Tokens> c = {{"a", "b", "x"}};
  const std::vector<std::vector<Tokens>> r = {{{"a", "y", "b"}}};
  EXPECT_EQ(corpus_bleu(c, r, 2, Smoothing::none()), 0.0);
  EXPECT_NEAR(corpus_bleu(c, r, 2, Smoothing::add_epsilon()),
              std::sqrt(2.0 / 3 * 0.1 / 2), 1e-12);
}

TEST(Bleu, MatchesOracle) {
  gen::Rng rng(15);
  for (int i = 0; i < 500; ++i) {
    std::vector<Tokens> cands;
    std::vector<std::vector<Tokens>> refs;
    const std::size_t pairs = gen::uniform(rng, 1, 3);
    for (std::size_t p = 0; p < pairs; ++p) {
      cands.push_back(gen::tokens(rng, 5, 0, 30));
      auto& set = refs.emplace_back();
      const std::size_t k = gen::uniform(rng, 1, 3);
      for (std::size_t r = 0; r < k; ++r) set.push_back(gen::tokens(rng, 5, 0, 30));
    }
    const int max_n = static_cast<int>(gen::uniform(rng, 1, 4));
    ASSERT_NEAR(corpus_bleu(cands, refs, max_n, Smoothing::none()),
                oracle::bleu(cands, refs, max_n), 1e-9);
    ASSERT_NEAR(corpus_bleu(cands, refs, max_n, Smoothing::add_epsilon()),
                oracle::bleu(cands, refs, max_n, 0.1), 1e-9);
  }
}

TEST(SelfBleu, WorkedExample) {
  const std::vector<std::string> docs = {"a b c d", "a b c d", "w x y z"};
  EXPECT_NEAR(self_bleu(docs, 1, Smoothing::none()), 2.0 / 3, 1e-15);
  const std::vector<std::string> same(3, "p q r s t");
  EXPECT_DOUBLE_EQ(self_bleu(same), 1.0);
  EXPECT_THROW(self_bleu(std::vector<std::string>{"a"}), Error);
}

TEST(SelfBleu, DisjointReplacementDecreases) {
  std::vector<std::string> docs(4, "the patient has a cough and fever");
  const double all = self_bleu(docs);
  docs[2] = "zz yy xx ww vv uu";
  EXPECT_LT(self_bleu(docs), all);
}

TEST(SelfBleu, ParallelEqualsSerialAndOracle) {
  gen::Rng rng(16);
  for (int i = 0; i < 40; ++i) {
    std::vector<Tokens> docs;
    const std::size_t n = gen::uniform(rng, 2, 12);
    for (std::size_t d = 0; d < n; ++d) docs.push_back(gen::tokens(rng, 6, 0, 25));
    const double par = self_bleu(docs, 4, Smoothing::add_epsilon());
    const double ser = self_bleu_serial(docs, 4, Smoothing::add_epsilon());
    EXPECT_EQ(par, ser);
    EXPECT_NEAR(par, oracle::self_bleu(docs, 4, 0.1), 1e-9);
  }
}

TEST(AvgUtterances, Basics) {
  EXPECT_DOUBLE_EQ(avg_utterances(std::vector<std::size_t>{3, 5}), 4.0);
  EXPECT_DOUBLE_EQ(avg_utterances(std::vector<std::size_t>{40}), 40.0);
  EXPECT_THROW(avg_utterances(std::vector<std::size_t>{}), Error);
}

TEST(EvaluateRun, IdentityAndErrors) {
  const auto lex = tiny_lexicon();
  const std::vector<IdText> refs = {
      {"a", "Doctor: Any cough?\nPatient: Yes, and I took aspirin."},
      {"b", "Doctor: How is the knee?\nPatient: It hurts when I walk."}};
  const auto r = evaluate_run(refs, refs, lex);
  EXPECT_EQ(r.n_pairs, 2u);
  EXPECT_DOUBLE_EQ(r.rouge1.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.rouge2.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.rougeL.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.rougeLsum.f1, 1.0);
  EXPECT_DOUBLE_EQ(r.bleu, 1.0);
  EXPECT_DOUBLE_EQ(r.concept_recall, 1.0);
  EXPECT_DOUBLE_EQ(r.avg_utterances, 2.0);
  ASSERT_TRUE(r.self_bleu.has_value());

  try {
    evaluate_run({{"a", "x"}, {"zz", "y"}}, refs, lex);
    FAIL();
  } catch (const IdError& e) {
    EXPECT_EQ(e.code(), Errc::MissingReference);
    EXPECT_EQ(e.id(), "zz");
  }
  try {
    evaluate_run({{"a", "x"}, {"a", "y"}}, refs, lex);
    FAIL();
  } catch (const IdError& e) {
    EXPECT_EQ(e.code(), Errc::DuplicateId);
  }
  EXPECT_FALSE(evaluate_run({{"a", "x"}}, refs, lex).self_bleu.has_value());
}

TEST(EvaluateRun, ParallelEqualsSerialAndOracle) {
  const auto lex = tiny_lexicon();
  gen::Rng rng(17);
  std::vector<IdText> gen_texts, refs;
  std::vector<Tokens> g_tok;
  std::vector<std::vector<Tokens>> paired;
  for (int i = 0; i < 5; ++i) {
    g_tok.push_back(gen::tokens(rng, 5, 1, 30));
    paired.push_back({gen::tokens(rng, 5, 1, 30)});
    gen_texts.push_back({"id" + std::to_string(i), join(g_tok.back())});
  }
  // References stored in reverse order; evaluation must pair them by id.
  for (int i = 4; i >= 0; --i) {
    refs.push_back({"id" + std::to_string(i), join(paired[i][0])});
  }
  double want_r1 = 0, want_r2 = 0, want_rl = 0, want_lsum = 0;
  for (int i = 0; i < 5; ++i) {
    want_r1 += oracle::rouge_n(g_tok[i], paired[i][0], 1).f / 5;
    want_r2 += oracle::rouge_n(g_tok[i], paired[i][0], 2).f / 5;
    want_rl += oracle::rouge_l(g_tok[i], paired[i][0]).f / 5;
    want_lsum += oracle::rouge_lsum({g_tok[i]}, {paired[i][0]}).f / 5;
  }
  const auto par = evaluate_run(gen_texts, refs, lex);
  const auto ser = evaluate_run_serial(gen_texts, refs, lex);
  EXPECT_EQ(to_json(par).dump(), to_json(ser).dump());
  EXPECT_NEAR(par.rouge1.f1, want_r1, 1e-9);
  EXPECT_NEAR(par.rouge2.f1, want_r2, 1e-9);
  EXPECT_NEAR(par.rougeL.f1, want_rl, 1e-9);
  EXPECT_NEAR(par.rougeLsum.f1, want_lsum, 1e-9);
  EXPECT_NEAR(par.bleu, oracle::bleu(g_tok, paired, 4), 1e-9);
  EXPECT_NEAR(*par.self_bleu, oracle::self_bleu(g_tok, 4, 0.1), 1e-9);
}

TEST(Report, TableAndJson) {
  EvalReport r;
  r.rouge1.f1 = 0.5418;
  r.bleu = 0.0662;
  r.self_bleu = 0.013;
  r.concept_recall = 0.4719;
  r.avg_utterances = 45.1;
  const std::string t = render_table(r);
  EXPECT_EQ(t.substr(0, t.find('\n')),
            "R-1    R-2   R-L   R-L-Sum  C-R    BLEU  SBLEU  Len");
  EXPECT_NE(t.find("54.18"), std::string::npos);
  EXPECT_NE(t.find("47.19"), std::string::npos);
  EXPECT_NE(t.find("6.62"), std::string::npos);
  EXPECT_NE(t.find("0.013"), std::string::npos);
  EXPECT_NE(t.find("45.1"), std::string::npos);
  EXPECT_TRUE(to_json(EvalReport{}).at("self_bleu").is_null());
}

TEST(ReadIdTexts, TextAndDialogueForms) {
  std::istringstream in(
      "{\"id\":\"a\",\"text\":\"hello\"}\n\n"
      "{\"id\":\"b\",\"dialogue\":[{\"speaker\":\"doctor\",\"text\":\"Hi\"},"
      "{\"speaker\":\"patient\",\"text\":\"Hello\"}]}\n");
  const auto items = read_id_texts(in);
  ASSERT_EQ(items.size(), 2u);
  EXPECT_EQ(items[1].text, "Doctor: Hi\nPatient: Hello");
  std::istringstream bad("{\"id\":1}\n");
  EXPECT_THROW(read_id_texts(bad), LineError);
}

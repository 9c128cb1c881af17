#include "geocpet/text.hpp"

#include <random>

#include <gtest/gtest.h>

namespace geocpet {
namespace {

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("Beta-Blocker, beta blocker."), (Tokens{"beta", "blocker", "beta", "blocker"}));
  EXPECT_EQ(tokenize("ASD closure 2009; Fontan"), (Tokens{"asd", "closure", "2009", "fontan"}));
}

TEST(Tokenize, DropsShortTokensAndNonAscii) {
  EXPECT_EQ(tokenize("a I x2 ok\tdone\n"), (Tokens{"x2", "ok", "done"}));
  EXPECT_EQ(tokenize("caf\xc3\xa9 au"), (Tokens{"caf", "au"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize("... , ;").empty());
}

TEST(LetterDocument, KeepsOnlyListLines) {
  const std::string letter =
      "Name: Alex\nPostcode: AB12\nDiagnosis List: tetralogy, repair\n"
      "  intervention list: valve\nMedication List: aspirin\nKind regards\n";
  const auto tokens = tokenize(letter_document(letter, LetterMode::lists));
  EXPECT_EQ(tokens, (Tokens{"tetralogy", "repair", "valve", "aspirin"}));
  EXPECT_EQ(letter_document(letter, LetterMode::raw), letter);
}

TEST(LetterDocument, FallsBackToRawText) {
  const std::string letter = "Seen today. Doing well.";
  EXPECT_EQ(letter_document(letter, LetterMode::lists), letter);
}

TEST(Vocabulary, SortedUniqueTerms) {
  const auto v = build_vocabulary({{"b", "a"}, {"a", "c"}}, 3);
  EXPECT_EQ(v.terms(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(v.fold_id(), 3);
  EXPECT_EQ(v.find("b"), 1u);
  EXPECT_FALSE(v.find("z"));
}

TEST(Vocabulary, EmptyCorpus) {
  try {
    build_vocabulary({{}, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::empty_corpus);
  }
}

TEST(Vocabulary, IdDependsOnTerms) {
  EXPECT_EQ(build_vocabulary({{"a", "b"}}).id(), build_vocabulary({{"b", "a", "a"}}).id());
  EXPECT_NE(build_vocabulary({{"ab"}}).id(), build_vocabulary({{"a", "b"}}).id());
}

TEST(Vectorize, CountsInVocabularyTokens) {
  const auto v = build_vocabulary({{"a", "b", "c"}});
  const auto tv = vectorize({"a", "b", "b", "z"}, v);
  EXPECT_EQ(tv.values, (std::vector<double>{1, 2, 0}));
  EXPECT_EQ(tv.vocab_id, v.id());
}

TEST(MixTermVectors, Examples) {
  const TermVector a{{2, 0}, 7};
  const TermVector b{{0, 4}, 7};
  EXPECT_EQ(mix_term_vectors(a, b, 0.5).values, (std::vector<double>{1, 2}));
  EXPECT_EQ(mix_term_vectors(a, b, 0.0), a);
  EXPECT_EQ(mix_term_vectors(a, b, 1.0), b);
  EXPECT_EQ(mix_term_vectors(a, a, 0.37), a);
}

TEST(MixTermVectors, VocabularyMismatch) {
  try {
    mix_term_vectors(TermVector{{1}, 1}, TermVector{{1}, 2}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::vocabulary_mismatch);
  }
  EXPECT_THROW(mix_term_vectors(TermVector{{1}, 1}, TermVector{{1, 2}, 1}, 0.5), Error);
  EXPECT_THROW(mix_term_vectors(TermVector{{1}, 1}, TermVector{{1}, 1}, 1.5), Error);
}

TEST(MixTermVectors, NonnegativeAndBetweenParents) {
  Rng rng(11);
  std::uniform_int_distribution<int> count(0, 9);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    TermVector a{std::vector<double>(20), 1}, b{std::vector<double>(20), 1};
    for (int i = 0; i < 20; ++i) {
      a.values[i] = count(rng);
      b.values[i] = count(rng);
    }
    const double alpha = ud(rng);
    const auto m = mix_term_vectors(a, b, alpha);
    for (int i = 0; i < 20; ++i) {
      EXPECT_GE(m[i], 0.0);
      EXPECT_GE(m[i], std::min(a[i], b[i]) - 1e-12);
      EXPECT_LE(m[i], std::max(a[i], b[i]) + 1e-12);
    }
  }
}

}  // namespace
}  // namespace geocpet

#include <gtest/gtest.h>

#include "prx/hashing.hpp"
#include "prx/rng.hpp"
#include "prx/text.hpp"

using namespace prx;

namespace {

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  for (const auto& t : text::tokenize(s)) out.emplace_back(s.substr(t.start, t.end - t.start));
  return out;
}

}  // namespace

TEST(Tokenize, DetachesEdgePunctuation) {
  EXPECT_EQ(words("Pain (8/10), worse."), (std::vector<std::string>{"Pain", "(", "8/10", ")", ",", "worse", "."}));
  EXPECT_EQ(words("  y/o  c/o\n"), (std::vector<std::string>{"y/o", "c/o"}));
  EXPECT_EQ(words("\"quoted\""), (std::vector<std::string>{"\"", "quoted", "\""}));
  EXPECT_EQ(words("..."), (std::vector<std::string>{".", ".", "."}));
  EXPECT_TRUE(text::tokenize("").empty());
  EXPECT_EQ(text::count_tokens("a b, c."), 5u);
}

TEST(Tokenize, OffsetsAndFlags) {
  const std::string s = "Chief Complaint:\nknee";
  const auto toks = text::tokenize(s);
  ASSERT_EQ(toks.size(), 4u);
  EXPECT_TRUE(toks[2].punctuation);
  EXPECT_FALSE(toks[1].newline_before);
  EXPECT_TRUE(toks[3].newline_before);
  EXPECT_EQ(s.substr(toks[3].start, toks[3].end - toks[3].start), "knee");
}

TEST(Tokenize, UnicodeWhitespaceSeparates) {
  // NBSP, em space, ideographic space, line separator.
  const std::string s = "a\xC2\xA0" "b\xE2\x80\x83" "c\xE3\x80\x80" "d\xE2\x80\xA8" "e";
  EXPECT_EQ(words(s), (std::vector<std::string>{"a", "b", "c", "d", "e"}));
  EXPECT_TRUE(text::tokenize(s)[4].newline_before);
  EXPECT_EQ(text::whitespace_length(s, 1), 2u);
  EXPECT_EQ(text::whitespace_length("x", 0), 0u);
}

TEST(Text, CaseAndTrim) {
  EXPECT_EQ(text::to_lower_ascii("AbC1"), "abc1");
  EXPECT_EQ(text::to_upper_ascii("m19.90"), "M19.90");
  EXPECT_EQ(text::trim(" \t x y \n"), "x y");
  EXPECT_EQ(text::split("a\tb\t", '\t'), (std::vector<std::string>{"a", "b", ""}));
}

TEST(Hashing, Fnv1aKnownVectors) {
  EXPECT_EQ(hashing::fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(hashing::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(hashing::fnv1a64("foobar"), 0x85944171f73967e8ull);
}

TEST(Hashing, Sha256KnownVectors) {
  EXPECT_EQ(hashing::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(hashing::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Hashing, HmacRfc4231Case2) {
  EXPECT_EQ(hashing::hmac_sha256_hex("Jefe", "what do ya want for nothing?"),
            "5bdcc146bf60754e6a042426089575c75a003f089d2739839dec58b964ec3843");
}

TEST(Rng, DeterministicAndBounded) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next(), b.next());
  Rng r(1);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const int v = r.range(3, 9);
    ASSERT_GE(v, 3);
    ASSERT_LE(v, 9);
    ++hist[static_cast<std::size_t>(v - 3)];
  }
  for (int h : hist) EXPECT_GT(h, 800);
  EXPECT_NE(derive_seed(7, 0), derive_seed(7, 1));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Rng, WeightedRespectsZeroWeights) {
  Rng r(5);
  for (int i = 0; i < 1000; ++i) EXPECT_NE(r.weighted({0.5, 0.0, 0.5}), 1u);
}

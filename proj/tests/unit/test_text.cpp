#include <gtest/gtest.h>

#include "forge/error.hpp"
#include "forge/text.hpp"

using namespace forge;

TEST(Text, NfcComposes) {
  EXPECT_EQ(text::nfc("Cafe\xCC\x81"), "Caf\xC3\xA9");
  EXPECT_THROW(text::nfc("\xFF\xFE"), Error);
}

TEST(Text, TrimAndSplit) {
  EXPECT_EQ(text::trim("  a b \t\n"), "a b");
  EXPECT_EQ(text::trim("\xC2\xA0x\xC2\xA0"), "x");  // no-break space
  auto parts = text::split_whitespace(" one  two\tthree\n");
  ASSERT_EQ(parts.size(), 3u);
  EXPECT_EQ(parts[2], "three");
  EXPECT_EQ(text::word_count(""), 0u);
  EXPECT_EQ(text::word_count("A cat sits on a red mat."), 7u);
}

TEST(Text, WordTokens) {
  auto t = text::word_tokens("Left-of THE mat, 3rd! \xC3\x89t\xC3\xA9");
  std::vector<std::string> want = {"left", "of", "the", "mat", "3rd", "\xC3\xA9t\xC3\xA9"};
  EXPECT_EQ(t, want);
}

TEST(Text, Sha256KnownVector) {
  EXPECT_EQ(text::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(text::sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Text, Fnv1a) {
  EXPECT_EQ(text::fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(text::fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Text, JoinAndLower) {
  EXPECT_EQ(text::join({"a", "b", "c"}, ", "), "a, b, c");
  EXPECT_EQ(text::to_lower("\xC3\x89T\xC3\x89 Ok"), "\xC3\xA9t\xC3\xA9 ok");
}

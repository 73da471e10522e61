#include <gtest/gtest.h>

#include <set>

#include "adaudit/common/digest.hpp"
#include "adaudit/common/error.hpp"
#include "adaudit/common/public_suffix.hpp"
#include "adaudit/common/rng.hpp"
#include "adaudit/common/time.hpp"
#include "adaudit/common/url.hpp"

namespace adaudit {
namespace {

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a(), b());
}

TEST(Rng, DeriveSeparatesLabels) {
  auto a = Rng::derive(7, "swap");
  auto b = Rng::derive(7, "survey");
  EXPECT_NE(a(), b());
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(1);
  for (std::uint64_t n : {1ULL, 2ULL, 3ULL, 7ULL, 1000ULL}) {
    for (int i = 0; i < 1000; ++i) ASSERT_LT(rng.below(n), n);
  }
}

TEST(Rng, SampleIndicesDistinct) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto picks = sample_indices(50, 20, rng);
    std::set<std::size_t> unique(picks.begin(), picks.end());
    ASSERT_EQ(unique.size(), 20u);
    for (auto i : picks) ASSERT_LT(i, 50u);
  }
  EXPECT_EQ(sample_indices(5, 9, rng).size(), 5u);
}

TEST(Rng, UniformMeanAndNormalMoments) {
  Rng rng(11);
  double su = 0, sn = 0, sn2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / n, 0.5, 0.005);
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
}

TEST(Time, FormatParseRoundTrip) {
  const auto t = parse_iso8601("2024-03-05T07:08:09Z");
  EXPECT_EQ(format_iso8601(t), "2024-03-05T07:08:09Z");
  EXPECT_EQ(format_iso8601(parse_iso8601("2024-02-29")), "2024-02-29T00:00:00Z");
  EXPECT_THROW(parse_iso8601("2024-02-30"), Error);
  EXPECT_THROW(parse_iso8601("yesterday"), Error);
}

TEST(Time, Window) {
  const auto w = parse_iso_window("2024-01-01T00:00:00Z/2024-01-08T00:00:00Z");
  EXPECT_TRUE(w.contains(parse_iso8601("2024-01-07T23:59:59Z")));
  EXPECT_FALSE(w.contains(w.to));
  EXPECT_THROW(parse_iso_window("2024-01-08/2024-01-01"), Error);
}

TEST(Url, ParsesComponents) {
  const auto u = Url::parse("HTTPS://User@Ads.Example.com:8443/a/b?x=1#f");
  EXPECT_EQ(u.scheme, "https");
  EXPECT_EQ(u.host, "ads.example.com");
  EXPECT_EQ(u.port, 8443);
  EXPECT_EQ(u.target, "/a/b?x=1#f");
  EXPECT_EQ(Url::parse("http://x.org").target, "/");
  EXPECT_THROW(Url::parse("not a url"), Error);
  EXPECT_THROW(Url::parse("http:///path"), Error);
}

TEST(Url, ResolvesRedirectReferences) {
  const auto base = Url::parse("http://a.com/dir/page?q=1");
  EXPECT_EQ(base.resolve("/x").str(), "http://a.com/x");
  EXPECT_EQ(base.resolve("next").str(), "http://a.com/dir/next");
  EXPECT_EQ(base.resolve("//b.com/y").str(), "http://b.com/y");
  EXPECT_EQ(base.resolve("https://c.com/").str(), "https://c.com/");
}

TEST(Digest, KnownVector) {
  EXPECT_EQ(sha256_hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(PublicSuffix, RegistrableDomains) {
  const auto& rules = SuffixRules::embedded();
  EXPECT_EQ(rules.registrable_domain("www.ads.google.com"), "google.com");
  EXPECT_EQ(rules.registrable_domain("localhost"), "localhost");
  EXPECT_EQ(rules.registrable_domain("foo.co.uk"), "foo.co.uk");
  EXPECT_EQ(rules.registrable_domain("a.b.foo.co.uk"), "foo.co.uk");
  EXPECT_EQ(rules.registrable_domain("192.168.0.1"), "192.168.0.1");
  EXPECT_EQ(rules.registrable_domain("x.y.unknowntld"), "y.unknowntld");
  EXPECT_THROW(rules.registrable_domain("com"), Error);
  EXPECT_THROW(rules.registrable_domain("co.uk"), Error);
}

TEST(PublicSuffix, WildcardAndException) {
  const auto rules = SuffixRules::parse("// test\n*.ck\n!www.ck\ncom\n");
  EXPECT_EQ(rules.registrable_domain("a.b.ck"), "a.b.ck");
  EXPECT_EQ(rules.registrable_domain("www.ck"), "www.ck");
  EXPECT_EQ(rules.registrable_domain("x.www.ck"), "www.ck");
  EXPECT_THROW(rules.registrable_domain("b.ck"), Error);
}

}  // namespace
}  // namespace adaudit

#include <gtest/gtest.h>
#include <sodium.h>

#include <filesystem>
#include <fstream>
#include <future>
#include <map>

#include "adaudit/common/digest.hpp"
#include "adaudit/common/error.hpp"
#include "adaudit/common/rng.hpp"
#include "adaudit/core/json.hpp"
#include "adaudit/pipeline/blob_store.hpp"
#include "adaudit/pipeline/detect.hpp"
#include "adaudit/pipeline/domains.hpp"
#include "adaudit/pipeline/jobs.hpp"
#include "adaudit/pipeline/links.hpp"
#include "fixture_server.hpp"

namespace fs = std::filesystem;
using namespace adaudit;
using namespace adaudit::pipeline;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("adaudit-pipeline-" + name + "-" +
                                            std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kInvalidArgument;
}

std::string independent_sha256(const std::string& bytes) {
  unsigned char out[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(out, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  char hex[2 * crypto_hash_sha256_BYTES + 1];
  sodium_bin2hex(hex, sizeof hex, out, sizeof out);
  return hex;
}

AdRecord make_ad(const std::string& id, const std::string& owner, Instant at) {
  AdRecord ad;
  ad.id = AdId(id);
  ad.participant_id = ParticipantId(owner);
  ad.client_ad_id = "c-" + id;
  ad.captured_at = at;
  ad.slot = {300, 250};
  return ad;
}

const Instant kT0 = parse_iso8601("2024-03-01T00:00:00Z");
const TimeWindow kDay0{kT0, kT0 + kDay};

/// Fetcher that refuses every request, for exercising the retry path.
class DeadFetcher final : public Fetcher {
 public:
  HttpResponse get(const std::string& url) override {
    throw Error(ErrorCode::kRetryable, "unreachable " + url);
  }
};

}  // namespace

// --- registrable domains --------------------------------------------------

TEST(RegistrableDomain, SpecExamples) {
  EXPECT_EQ(registrable_domain("https://www.ads.google.com/x"), "google.com");
  EXPECT_EQ(registrable_domain("https://localhost/x"), "localhost");
  EXPECT_EQ(registrable_domain("https://foo.co.uk/"), "foo.co.uk");
  EXPECT_EQ(registrable_domain("https://a.b.foo.co.uk/"), "foo.co.uk");
  EXPECT_EQ(registrable_domain("http://192.168.1.20:8080/p"), "192.168.1.20");
  EXPECT_EQ(code_of([] { registrable_domain("https://com/"); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(code_of([] { registrable_domain("not a url"); }), ErrorCode::kInvalidArgument);
}

TEST(AggregateDomains, FourAdExample) {
  std::vector<AdRecord> ads;
  const char* sources[] = {"https://a.com/1", "https://www.a.com/2", "https://b.com/",
                           "https://c.com/x"};
  for (int i = 0; i < 4; ++i) {
    auto ad = make_ad("ad" + std::to_string(i), i < 2 ? "p1" : "p2", kT0);
    ad.source_page_url = sources[i];
    ads.push_back(ad);
  }
  const auto t = aggregate_domains(ads, DomainKind::kSource);
  ASSERT_EQ(t.rows.size(), 3u);
  EXPECT_EQ(t.rows[0].domain, "a.com");
  EXPECT_DOUBLE_EQ(t.rows[0].share, 0.5);
  EXPECT_EQ(t.rows[1].domain, "b.com");
  EXPECT_DOUBLE_EQ(t.rows[1].share, 0.25);
  EXPECT_DOUBLE_EQ(t.rows[2].share, 0.25);
  EXPECT_EQ(t.errors, 0u);
  // a.com only in p1's set; b.com and c.com only in p2's.
  for (const auto& r : t.presence) EXPECT_DOUBLE_EQ(r.share, 0.5) << r.domain;
}

TEST(AggregateDomains, EmptyAndErrors) {
  EXPECT_TRUE(aggregate_domains({}, DomainKind::kTarget).rows.empty());
  auto ad = make_ad("x", "p", kT0);
  ad.target_url = "https://com/";
  auto redacted = make_ad("y", "p", kT0);
  redacted.target_url = "https://z.com/";
  redacted.redacted = true;
  std::vector<AdRecord> ads{ad, redacted, make_ad("z", "p", kT0)};
  const auto t = aggregate_domains(ads, DomainKind::kTarget);
  EXPECT_TRUE(t.rows.empty());
  EXPECT_EQ(t.errors, 2u);
  EXPECT_EQ(aggregate_domains(ads, DomainKind::kResolvedTarget).errors, 2u);
}

TEST(AggregateDomains, PlantedDominantSourceRecoveredExactly) {
  // One source at 234 of 1000 ads, a mid tier and a long tail of singletons.
  std::map<std::string, int> planted{{"reddit.com", 234}, {"nytimes.com", 61},
                                     {"weather.com", 45}, {"espn.com", 30}};
  int used = 234 + 61 + 45 + 30;
  for (int i = 0; used < 1000; ++i, ++used) planted["tail" + std::to_string(i) + ".org"] = 1;

  std::vector<std::string> urls;
  for (const auto& [d, n] : planted) {
    for (int k = 0; k < n; ++k) urls.push_back("https://www." + d + "/page" + std::to_string(k));
  }
  Rng rng(7);
  shuffle(urls, rng);
  std::vector<AdRecord> ads;
  for (std::size_t i = 0; i < urls.size(); ++i) {
    auto ad = make_ad("a" + std::to_string(i), "p" + std::to_string(i % 50), kT0);
    ad.source_page_url = urls[i];
    ads.push_back(ad);
  }
  const auto t = aggregate_domains(ads, DomainKind::kSource);
  ASSERT_EQ(t.rows.size(), planted.size());
  EXPECT_EQ(t.rows[0].domain, "reddit.com");
  EXPECT_DOUBLE_EQ(t.rows[0].share, 0.234);
  double sum = 0;
  for (const auto& r : t.rows) {
    EXPECT_EQ(static_cast<int>(r.count), planted.at(r.domain));
    sum += r.share;
  }
  EXPECT_NEAR(sum, 1.0, 1e-12);
  // reddit.com's 234 ads reach every participant; a singleton reaches one.
  const auto presence_of = [&](const std::string& d) {
    return std::find_if(t.presence.begin(), t.presence.end(),
                        [&](const PresenceRow& r) { return r.domain == d; })->share;
  };
  EXPECT_DOUBLE_EQ(presence_of("reddit.com"), 1.0);
  EXPECT_DOUBLE_EQ(presence_of("tail0.org"), 1.0 / 50);
  EXPECT_DOUBLE_EQ(t.presence[0].share, 1.0);
}

// --- link resolution --------------------------------------------------------

class LinkTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto& s = server_.http();
    s.Get("/final", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("landing", "text/plain");
    });
    auto redirect = [](std::string to) {
      return [to](const httplib::Request&, httplib::Response& res) { res.set_redirect(to); };
    };
    s.Get("/r1", redirect("/r2"));
    s.Get("/r2", redirect("final"));  // relative to /r2
    s.Get("/a", redirect("/b"));
    s.Get("/b", redirect("/a"));
    s.Get("/self", redirect("/self"));
    s.Get(R"(/hop/(\d+))", [](const httplib::Request& req, httplib::Response& res) {
      const int n = std::stoi(req.matches[1]);
      res.set_redirect(n == 0 ? "/final" : "/hop/" + std::to_string(n - 1), 302);
    });
    s.Get("/nolocation", [](const httplib::Request&, httplib::Response& res) {
      res.status = 301;
    });
    server_.start();
  }

  fixtures::FixtureServer server_;
  HttpFetcher fetcher_{std::chrono::seconds(5)};
};

TEST_F(LinkTest, NonRedirectingUrlIsItself) {
  const auto r = resolve_link(server_.url("/final"), fetcher_);
  EXPECT_EQ(r.final_url, server_.url("/final"));
  EXPECT_EQ(r.hops, 0);
}

TEST_F(LinkTest, TwoHopChain) {
  const auto r = resolve_link(server_.url("/r1"), fetcher_);
  EXPECT_EQ(r.final_url, server_.url("/final"));
  EXPECT_EQ(r.hops, 2);
}

TEST_F(LinkTest, LoopDetected) {
  EXPECT_EQ(code_of([&] { resolve_link(server_.url("/a"), fetcher_); }),
            ErrorCode::kRedirectLoop);
  EXPECT_EQ(code_of([&] { resolve_link(server_.url("/self"), fetcher_); }),
            ErrorCode::kRedirectLoop);
}

TEST_F(LinkTest, HopLimit) {
  // /hop/9 reaches /final after exactly 10 redirects.
  EXPECT_EQ(resolve_link(server_.url("/hop/9"), fetcher_).hops, 10);
  EXPECT_EQ(code_of([&] { resolve_link(server_.url("/hop/10"), fetcher_); }),
            ErrorCode::kTooManyRedirects);
  EXPECT_EQ(code_of([&] { resolve_link(server_.url("/hop/3"), fetcher_, 3); }),
            ErrorCode::kTooManyRedirects);
}

TEST_F(LinkTest, RedirectWithoutLocationEndsChain) {
  const auto r = resolve_link(server_.url("/nolocation"), fetcher_);
  EXPECT_EQ(r.hops, 0);
}

TEST_F(LinkTest, NetworkFailureIsRetryable) {
  const std::string dead = server_.url("/final");
  server_.stop();
  EXPECT_EQ(code_of([&] { resolve_link(dead, fetcher_); }), ErrorCode::kRetryable);
  EXPECT_EQ(code_of([&] { resolve_link("relative/path", fetcher_); }),
            ErrorCode::kInvalidArgument);
}

// --- image persistence ------------------------------------------------------

class PersistTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ASSERT_GE(sodium_init(), 0);
    auto& s = server_.http();
    s.Get("/img/one.png", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(png_, "image/png");
    });
    s.Get("/img/copy.png", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(png_, "image/png");
    });
    s.Get("/img/other.png", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(std::string("\x89PNG other", 10), "image/png");
    });
    s.Get("/img/moved.png", [](const httplib::Request&, httplib::Response& res) {
      res.set_redirect("/img/one.png");
    });
    server_.start();
  }

  std::string png_ = std::string("\x89PNG\r\n\x1a\n\0\0\0\rIHDR fixture", 25);
  fixtures::FixtureServer server_;
  HttpFetcher fetcher_{std::chrono::seconds(5)};
  fs::path dir_ = scratch_dir("persist");
};

TEST_F(PersistTest, DigestNamedFileMatchesIndependentHash) {
  BlobStore store(dir_);
  RetryQueue retries;
  auto ad = make_ad("a1", "p", kT0);
  ad.image_url = server_.url("/img/one.png");
  ASSERT_EQ(persist_image(ad, fetcher_, store, retries), PersistOutcome::kStored);
  const std::string hex = independent_sha256(png_);
  EXPECT_EQ(*ad.stored_image_ref, "sha256:" + hex);
  const fs::path file = store.path_of(*ad.stored_image_ref);
  EXPECT_EQ(file.filename().string(), hex);
  EXPECT_EQ(*store.get(*ad.stored_image_ref), png_);
  EXPECT_EQ(persist_image(ad, fetcher_, store, retries), PersistOutcome::kAlreadyStored);
}

TEST_F(PersistTest, IdenticalBytesDeduplicate) {
  BlobStore store(dir_);
  RetryQueue retries;
  auto a = make_ad("a1", "p", kT0);
  auto b = make_ad("a2", "q", kT0);
  auto c = make_ad("a3", "q", kT0);
  a.image_url = server_.url("/img/one.png");
  b.image_url = server_.url("/img/copy.png");
  c.image_url = server_.url("/img/moved.png");
  persist_image(a, fetcher_, store, retries);
  persist_image(b, fetcher_, store, retries);
  persist_image(c, fetcher_, store, retries);
  EXPECT_EQ(store.count(), 1u);
  EXPECT_EQ(a.stored_image_ref, b.stored_image_ref);
  EXPECT_EQ(a.stored_image_ref, c.stored_image_ref);

  auto d = make_ad("a4", "q", kT0);
  d.image_url = server_.url("/img/other.png");
  persist_image(d, fetcher_, store, retries);
  EXPECT_EQ(store.count(), 2u);
  EXPECT_NE(d.stored_image_ref, a.stored_image_ref);
}

TEST_F(PersistTest, NotFoundQueuesRetryAndLeavesAdUnmodified) {
  BlobStore store(dir_);
  RetryQueue retries;
  auto ad = make_ad("a1", "p", kT0);
  ad.image_url = server_.url("/img/gone.png");
  const auto before = to_json(ad).dump();
  EXPECT_EQ(persist_image(ad, fetcher_, store, retries, 3), PersistOutcome::kFailed);
  EXPECT_EQ(to_json(ad).dump(), before);
  ASSERT_NE(retries.find(ad.id), nullptr);
  EXPECT_EQ(retries.find(ad.id)->attempts, 1);
  EXPECT_EQ(retries.find(ad.id)->last_error, "HTTP 404");
  EXPECT_FALSE(retries.unretrievable(ad.id));

  persist_image(ad, fetcher_, store, retries, 3);
  persist_image(ad, fetcher_, store, retries, 3);
  EXPECT_TRUE(retries.unretrievable(ad.id));
  EXPECT_EQ(persist_image(ad, fetcher_, store, retries, 3), PersistOutcome::kSkipped);
  EXPECT_EQ(retries.find(ad.id)->attempts, 3);
  EXPECT_EQ(store.count(), 0u);

  const auto round = RetryQueue::from_json(retries.to_json());
  EXPECT_EQ(round.to_json(), retries.to_json());
}

TEST(BlobStore, RefsAreContentAddressed) {
  BlobStore store(scratch_dir("cas"));
  Rng rng(3);
  std::map<std::string, std::string> by_ref;
  for (int i = 0; i < 200; ++i) {
    std::string bytes(rng.below(40), '\0');
    for (auto& ch : bytes) ch = static_cast<char>(rng.below(3));
    const auto ref = store.put(bytes);
    EXPECT_EQ(ref, BlobStore::ref_for(bytes));
    auto [it, fresh] = by_ref.emplace(ref, bytes);
    EXPECT_EQ(it->second, bytes);  // equal ref implies equal bytes
  }
  EXPECT_EQ(store.count(), by_ref.size());
  EXPECT_EQ(code_of([&] { store.path_of("md5:abc"); }), ErrorCode::kInvalidArgument);
}

// --- detection --------------------------------------------------------------

TEST(Detection, CategoryList) {
  const auto& c = coco_categories();
  EXPECT_EQ(c.size(), 80u);
  EXPECT_EQ(c.front(), "person");
  EXPECT_EQ(c.back(), "toothbrush");
  EXPECT_EQ(std::set<std::string_view>(c.begin(), c.end()).size(), 80u);
  EXPECT_TRUE(is_known_category("traffic_light"));
  EXPECT_FALSE(is_known_category("traffic light"));
}

TEST(Detection, StubThreshold) {
  StubAdapter person({{"person", 0.9, {0, 0, 1, 1}}});
  EXPECT_TRUE(has_people(person.detect("x"), 0.5));
  StubAdapter bottle({{"bottle", 0.99, {0, 0, 1, 1}}});
  EXPECT_FALSE(has_people(bottle.detect("x"), 0.5));
  EXPECT_TRUE(has_people({{"person", 0.5, {}}}, 0.5));
  EXPECT_FALSE(has_people({{"person", 0.4999, {}}}, 0.5));
  EXPECT_FALSE(has_people({}, 0.5));
}

TEST(Detection, RecordGrammar) {
  const std::string text = "det person 0.91 0.1 0.2 0.3 0.4\ndet tie 0.6 0 0 1 1\nend\n";
  const auto ds = parse_detection_records(text);
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds[0].category, "person");
  EXPECT_DOUBLE_EQ(ds[0].confidence, 0.91);
  EXPECT_DOUBLE_EQ(ds[0].box.h, 0.4);
  EXPECT_EQ(format_detection_records(ds), text);
  EXPECT_TRUE(parse_detection_records("end").empty());
  EXPECT_TRUE(parse_detection_records("end\n").empty());

  for (const char* bad : {"", "det person 0.9 0 0 1 1\n", "det person 0.9 0 0 1 1\nend\nend\n",
                          "det persona 0.9 0 0 1 1\nend\n", "det person 1.2 0 0 1 1\nend\n",
                          "det person 0.9 0 0 1\nend\n", "det person 0.9  0 0 1 1\nend\n",
                          "det person 0.9 0.5 0 0.6 1\nend\n", "det person 9e-1 0 0 1 1\nend\n",
                          "\nend\n", "end\r\n", "det person -0 0 0 1 1\r\nend\n"}) {
    EXPECT_EQ(code_of([&] { parse_detection_records(bad); }), ErrorCode::kAdapterFailure)
        << '"' << bad << '"';
  }
}

TEST(Detection, RecordRoundTripProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> ds(rng.below(6));
    for (auto& d : ds) {
      d.category = std::string(coco_categories()[rng.below(80)]);
      d.confidence = rng.uniform();
      d.box.x = rng.uniform() * 0.5;
      d.box.y = rng.uniform() * 0.5;
      d.box.w = rng.uniform() * 0.5;
      d.box.h = rng.uniform() * 0.5;
    }
    const auto back = parse_detection_records(format_detection_records(ds));
    ASSERT_EQ(back.size(), ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      EXPECT_EQ(back[i].category, ds[i].category);
      EXPECT_EQ(back[i].confidence, ds[i].confidence);  // shortest round-trip form
      EXPECT_EQ(back[i].box.w, ds[i].box.w);
    }
  }
}

class ProcessAdapterTest : public ::testing::Test {
 protected:
  fs::path image(const std::string& name, const std::string& bytes) {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << bytes;
    return p;
  }
  fs::path dir_ = scratch_dir("proc");
  ProcessAdapter adapter_{{ADAUDIT_FAKE_DETECTOR}, std::chrono::milliseconds(1500)};
};

TEST_F(ProcessAdapterTest, ParsesOutput) {
  auto ds = adapter_.detect(image("p", "...PERSON..."));
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_TRUE(has_people(ds));
  EXPECT_FALSE(has_people(adapter_.detect(image("b", "plain"))));
}

TEST_F(ProcessAdapterTest, CrashTimeoutAndGarbageFail) {
  EXPECT_EQ(code_of([&] { adapter_.detect(image("c", "CRASH")); }), ErrorCode::kAdapterFailure);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(code_of([&] { adapter_.detect(image("h", "HANG")); }), ErrorCode::kAdapterFailure);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, std::chrono::seconds(10));
  EXPECT_EQ(code_of([&] { adapter_.detect(image("g", "GARBAGE")); }),
            ErrorCode::kAdapterFailure);
  EXPECT_EQ(code_of([&] { adapter_.detect(dir_ / "missing"); }), ErrorCode::kAdapterFailure);
  ProcessAdapter missing({"/nonexistent/detector"}, std::chrono::seconds(1));
  EXPECT_EQ(code_of([&] { missing.detect(image("p2", "PERSON")); }),
            ErrorCode::kAdapterFailure);
}

// --- jobs -------------------------------------------------------------------

namespace {

struct World {
  fs::path dir;
  BlobStore blobs;
  MemoryAdRepository repo;
  PipelineState state;
  ManualClock clock{kT0 + 2 * kDay};

  World(const std::string& name, std::vector<AdRecord> ads)
      : dir(scratch_dir(name)), blobs(dir / "blobs"), repo(std::move(ads)) {}

  /// Digest over everything a job may write.
  std::string digest() const {
    nlohmann::ordered_json j;
    j["state"] = state.to_json();
    auto arr = nlohmann::ordered_json::array();
    for (const auto& ad : repo.all()) arr.push_back(to_json(ad));
    j["ads"] = arr;
    std::vector<std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      files.push_back(fs::relative(e.path(), dir).string());
    }
    std::sort(files.begin(), files.end());
    j["files"] = files;
    return sha256_hex(j.dump());
  }
};

}  // namespace

TEST(PlantedDetection, OracleRecoversPersonRate) {
  // 350 distinct images, 81 labelled with a person above threshold; some of
  // the rest carry low-confidence persons or other objects.
  const fs::path dir = scratch_dir("planted");
  BlobStore blobs(dir / "blobs");
  std::vector<AdRecord> ads;
  std::ofstream labels(dir / "labels.txt");
  labels << "# image-digest record\n";
  Rng rng(2024);
  std::vector<int> order(350);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, rng);
  for (int i = 0; i < 350; ++i) {
    const std::string ref = blobs.put("image-bytes-" + std::to_string(i));
    const std::string file = blobs.path_of(ref).filename().string();
    const int rank = order[i];
    if (rank < 81) {
      labels << file << " det person " << (0.5 + 0.49 * rng.uniform()) << " 0.1 0.1 0.5 0.5\n";
    } else if (rank < 120) {
      labels << file << " det person 0.3 0 0 0.2 0.2\n";
    }
    labels << file << " det " << coco_categories()[1 + rng.below(79)] << " 0.7 0 0 1 1\n";
    auto ad = make_ad("img" + std::to_string(i), "p" + std::to_string(i % 40), kT0 + Seconds(i));
    ad.stored_image_ref = ref;
    ads.push_back(ad);
  }
  labels.close();

  MemoryAdRepository repo(ads);
  PipelineState state;
  ManualClock clock(kT0);
  DeadFetcher fetcher;
  auto oracle = OracleAdapter::from_file(dir / "labels.txt");
  Pipeline pipe(repo, fetcher, blobs, oracle, state, clock);
  const auto run = pipe.run("detect", kDay0);
  EXPECT_EQ(run.processed, 350u);
  EXPECT_EQ(run.failed, 0u);
  int people = 0;
  for (const auto& ad : repo.all()) {
    ASSERT_TRUE(ad.has_people.has_value());
    people += *ad.has_people;
  }
  const double rate = people / 350.0;
  EXPECT_NEAR(rate, 0.231, 0.02);
  EXPECT_EQ(people, 81);
}

TEST(Jobs, FailedDetectionLeavesAdUnlabeled) {
  std::vector<AdRecord> ads;
  World w("detfail", {});
  for (int i = 0; i < 3; ++i) {
    auto ad = make_ad("d" + std::to_string(i), "p", kT0);
    ad.stored_image_ref = w.blobs.put(i == 1 ? "CRASH" : "PERSON " + std::to_string(i));
    ads.push_back(ad);
  }
  MemoryAdRepository repo(ads);
  DeadFetcher fetcher;
  ProcessAdapter adapter({ADAUDIT_FAKE_DETECTOR}, std::chrono::seconds(5));
  Pipeline pipe(repo, fetcher, w.blobs, adapter, w.state, w.clock);
  const auto run = pipe.run("detect", kDay0);
  EXPECT_EQ(run.processed, 2u);
  EXPECT_EQ(run.failed, 1u);
  const auto all = repo.all();
  EXPECT_EQ(all[0].has_people, true);
  EXPECT_FALSE(all[1].has_people.has_value());
  EXPECT_EQ(w.state.detect_failures.count(AdId("d1")), 1u);
  EXPECT_EQ(w.state.detections.at(AdId("d0")).size(), 2u);
}

class JobsTest : public ::testing::Test {
 protected:
  void SetUp() override {
    auto& s = server_.http();
    s.Get(R"(/img/(\d+)\.png)", [](const httplib::Request& req, httplib::Response& res) {
      const int n = std::stoi(req.matches[1]);
      res.set_content(n % 5 == 0 ? "PERSON shared" : "img " + std::to_string(n % 17),
                      "image/png");
    });
    s.Get(R"(/click/(\d+))", [](const httplib::Request& req, httplib::Response& res) {
      res.set_redirect("/landing/" + std::string(req.matches[1]) + "?utm=1");
    });
    s.Get(R"(/landing/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });
    server_.start();
  }

  std::vector<AdRecord> ads(int n) {
    std::vector<AdRecord> out;
    for (int i = 0; i < n; ++i) {
      auto ad = make_ad("j" + std::to_string(1000 + i), "p" + std::to_string(i % 7),
                        kT0 + Seconds(60 * i));
      ad.image_url = server_.url(i % 9 == 4 ? "/missing/" + std::to_string(i)
                                            : "/img/" + std::to_string(i) + ".png");
      ad.target_url = i % 11 == 3 ? "" : server_.url("/click/" + std::to_string(i));
      ad.source_page_url = "https://www.site" + std::to_string(i % 4) + ".com/";
      ad.redacted = i % 13 == 12;
      out.push_back(ad);
    }
    return out;
  }

  void run_all(Pipeline& p, const TimeWindow& w) {
    for (const char* job : {"resolve", "persist", "detect", "domains"}) p.run(job, w);
  }

  fixtures::FixtureServer server_;
  HttpFetcher fetcher_{std::chrono::seconds(5)};
  ProcessAdapter detector_{{ADAUDIT_FAKE_DETECTOR}, std::chrono::seconds(5)};
};

TEST_F(JobsTest, FullRunPopulatesFields) {
  World w("full", ads(40));
  Pipeline pipe(w.repo, fetcher_, w.blobs, detector_, w.state, w.clock, {.workers = 3});
  run_all(pipe, kDay0);
  for (const auto& ad : w.repo.all()) {
    const int i = std::stoi(ad.id.str().substr(1)) - 1000;
    if (ad.redacted) {
      EXPECT_FALSE(ad.stored_image_ref || ad.resolved_target_url || ad.has_people);
      continue;
    }
    EXPECT_EQ(ad.resolved_target_url.has_value(), i % 11 != 3) << i;
    if (ad.resolved_target_url) {
      EXPECT_EQ(*ad.resolved_target_url, server_.url("/landing/" + std::to_string(i) + "?utm=1"));
    }
    EXPECT_EQ(ad.stored_image_ref.has_value(), i % 9 != 4) << i;
    if (ad.stored_image_ref) {
      EXPECT_EQ(*ad.has_people, i % 5 == 0) << i;
    }
  }
  const auto tables = pipe.last_domains();
  ASSERT_EQ(tables.size(), 3u);
  EXPECT_EQ(tables[2].rows.size(), 1u);  // all landings on 127.0.0.1
  EXPECT_EQ(tables[2].rows[0].domain, "127.0.0.1");
  const auto hist = pipe.scheduler().history();
  ASSERT_EQ(hist.size(), 4u);
  EXPECT_EQ(hist[1].job, "persist");
  EXPECT_EQ(hist[1].failed, 4u);  // i = 4, 13, 22, 31
}

TEST_F(JobsTest, RerunOverProcessedWindowChangesNothing) {
  World w("idem", ads(30));
  Pipeline pipe(w.repo, fetcher_, w.blobs, detector_, w.state, w.clock,
                {.max_image_attempts = 1});
  run_all(pipe, kDay0);
  const std::string once = w.digest();
  run_all(pipe, kDay0);
  EXPECT_EQ(w.digest(), once);
  run_all(pipe, {kT0 + Seconds(600), kT0 + Seconds(1200)});  // a sub-window
  EXPECT_EQ(w.digest(), once);
  const auto second = pipe.scheduler().history().at(5);
  EXPECT_EQ(second.job, "persist");
  EXPECT_EQ(second.processed, 0u);
  EXPECT_EQ(second.failed, 0u);
}

TEST_F(JobsTest, WindowBoundsAndWorkerCountInvariance) {
  World a("w1", ads(24));
  World b("w8", ads(24));
  Pipeline p1(a.repo, fetcher_, a.blobs, detector_, a.state, a.clock, {.workers = 1});
  Pipeline p8(b.repo, fetcher_, b.blobs, detector_, b.state, b.clock, {.workers = 8});
  const TimeWindow half{kT0, kT0 + Seconds(60 * 12)};
  p1.run("persist", half);
  p8.run("persist", half);
  const auto ra = a.repo.all();
  const auto rb = b.repo.all();
  for (std::size_t i = 0; i < ra.size(); ++i) {
    EXPECT_EQ(to_json(ra[i]), to_json(rb[i]));
    if (i >= 12) {
      EXPECT_FALSE(ra[i].stored_image_ref.has_value());
    }
  }
  EXPECT_EQ(a.state.to_json(), b.state.to_json());
}

TEST(Scheduler, SameJobNeverRunsConcurrently) {
  ManualClock clock(kT0);
  JobScheduler s(clock);
  std::promise<void> entered;
  std::promise<void> release;
  auto gate = release.get_future().share();
  s.add("slow", [&](const TimeWindow&) {
    entered.set_value();
    gate.wait();
    return JobCounts{1, 0, 0};
  });
  s.add("fast", [](const TimeWindow&) { return JobCounts{}; });
  auto first = std::async(std::launch::async, [&] { return s.run("slow", kDay0); });
  entered.get_future().wait();
  EXPECT_EQ(code_of([&] { s.run("slow", kDay0); }), ErrorCode::kConflict);
  EXPECT_NO_THROW(s.run("fast", kDay0));
  release.set_value();
  EXPECT_EQ(first.get().processed, 1u);
  EXPECT_EQ(code_of([&] { s.run("nope", kDay0); }), ErrorCode::kNotFound);
  EXPECT_EQ(s.history().size(), 2u);
}

TEST(PipelineState, JsonRoundTrip) {
  PipelineState s;
  s.image_retries.record_failure(AdId("a"), "HTTP 404", 3);
  s.detections[AdId("b")] = {{"person", 0.75, {0.1, 0.2, 0.3, 0.4}}};
  s.detect_failures[AdId("c")] = "timeout";
  s.link_failures[AdId("d")] = "redirect_loop";
  EXPECT_EQ(PipelineState::from_json(s.to_json()).to_json(), s.to_json());
}

#pragma once

#include <string>
#include <vector>

#include "adaudit/common/rng.hpp"
#include "adaudit/core/types.hpp"

namespace adaudit::fixtures {

/// A participant and partner with ads in both phases and swap deliveries,
/// drawn at random; used to exercise survey sampling.
struct SurveyWorld {
  Participant self;
  Participant partner;
  std::vector<AdRecord> own_ads;
  std::vector<AdRecord> partner_ads;
  std::vector<SwapDelivery> deliveries;
};

inline AdRecord fixture_ad(const std::string& id, const ParticipantId& owner, AdPhase phase,
                           std::int64_t views, std::optional<bool> people) {
  AdRecord a;
  a.id = AdId(id);
  a.participant_id = owner;
  a.phase = phase;
  a.view_count = views;
  a.has_people = people;
  a.slot = {300, 250};
  return a;
}

inline SurveyWorld random_survey_world(Rng& rng, int obs_ads, int interv_ads, int deliveries,
                                       double view_p = 0.3, double redact_p = 0.05) {
  SurveyWorld w;
  w.self.id = ParticipantId("self");
  w.partner.id = ParticipantId("partner");
  w.self.partner_id = w.partner.id;
  w.partner.partner_id = w.self.id;
  const auto make = [&](std::vector<AdRecord>& into, const ParticipantId& owner, AdPhase phase,
                        int n, const std::string& prefix) {
    for (int i = 0; i < n; ++i) {
      std::optional<bool> people;
      if (rng.below(20) != 0) people = rng.bernoulli(0.4);
      auto a = fixture_ad(prefix + std::to_string(i), owner, phase,
                          rng.bernoulli(view_p) ? 1 + static_cast<std::int64_t>(rng.below(3)) : 0,
                          people);
      a.redacted = rng.bernoulli(redact_p);
      into.push_back(std::move(a));
    }
  };
  make(w.own_ads, w.self.id, AdPhase::kObservational, obs_ads, "s-obs-");
  make(w.own_ads, w.self.id, AdPhase::kInterventionOriginal, interv_ads, "s-int-");
  make(w.partner_ads, w.partner.id, AdPhase::kObservational, obs_ads, "p-obs-");
  make(w.partner_ads, w.partner.id, AdPhase::kInterventionOriginal, interv_ads, "p-int-");
  for (int i = 0; i < deliveries && obs_ads > 0; ++i) {
    SwapDelivery d;
    d.id = DeliveryId("d" + std::to_string(i));
    d.recipient_id = w.self.id;
    d.source_owner_id = w.partner.id;
    d.source_ad_id = AdId("p-obs-" + std::to_string(rng.below(static_cast<std::uint64_t>(obs_ads))));
    d.view_count = rng.bernoulli(view_p) ? 1 : 0;
    w.deliveries.push_back(std::move(d));
  }
  return w;
}

}  // namespace adaudit::fixtures

#include "adaudit/core/redaction.hpp"

#include "adaudit/common/error.hpp"

namespace adaudit {

void erase_payload(AdRecord& ad) {
  ad.client_ad_id.clear();
  ad.image_url.reset();
  ad.stored_image_ref.reset();
  ad.text.reset();
  ad.target_url.clear();
  ad.resolved_target_url.reset();
  ad.source_page_url.clear();
  ad.slot = {};
  ad.view_count = 0;
  ad.click_count = 0;
  ad.has_people.reset();
  ad.redacted = true;
}

RedactionReceipt redact_ads(Participant& owner, std::span<AdRecord* const> targets) {
  for (const auto* ad : targets) {
    if (ad->participant_id != owner.id) {
      throw Error(ErrorCode::kRefused,
                  "ad " + ad->id.str() + " does not belong to participant " + owner.id.str());
    }
  }
  RedactionReceipt receipt;
  for (auto* ad : targets) {
    if (ad->redacted) continue;
    erase_payload(*ad);
    ++receipt.count;
  }
  owner.redaction_count += receipt.count;
  return receipt;
}

}  // namespace adaudit

#pragma once

#include <span>

#include "adaudit/core/types.hpp"

namespace adaudit {

/// Erase everything but id, owner, phase and capture time.
void erase_payload(AdRecord& ad);

/// Redact `targets` for `owner`. All targets are checked for ownership
/// before any is touched, so a foreign ad aborts the whole request.
/// Already-redacted ads are not counted twice.
RedactionReceipt redact_ads(Participant& owner, std::span<AdRecord* const> targets);

}  // namespace adaudit

#pragma once

#include <json.hpp>

#include "adaudit/core/types.hpp"

namespace adaudit {

using Json = nlohmann::ordered_json;

/// Field order of every record below is part of the export format.
Json to_json(const Demographics& d);
Json to_json(const Participant& p);
Json to_json(const AdRecord& ad);
Json to_json(const SwapDelivery& d);

Demographics demographics_from_json(const Json& j);
Participant participant_from_json(const Json& j);
AdRecord ad_from_json(const Json& j);
SwapDelivery delivery_from_json(const Json& j);

/// One JSON object per line, participant field order fixed.
std::string export_participants_jsonl(const std::vector<Participant>& participants);

}  // namespace adaudit

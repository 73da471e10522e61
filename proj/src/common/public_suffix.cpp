#include "adaudit/common/public_suffix.hpp"

#include <vector>

#include "adaudit/common/error.hpp"
#include "adaudit/common/url.hpp"

namespace adaudit {

namespace {

// Snapshot "2024.1-desk": generic TLDs plus the country-code second levels
// seen in ad traffic. Extend by shipping a rules file; see docs.
constexpr std::string_view kEmbeddedRules = R"(// adaudit public-suffix snapshot 2024.1-desk
com
net
org
edu
gov
mil
int
info
biz
io
co
me
tv
ai
app
dev
xyz
online
site
shop
us
ca
de
fr
nl
es
it
eu
ch
se
no
dk
fi
pl
ru
uk
co.uk
org.uk
ac.uk
gov.uk
ltd.uk
plc.uk
jp
co.jp
ne.jp
or.jp
au
com.au
net.au
org.au
edu.au
nz
co.nz
br
com.br
mx
com.mx
in
co.in
cn
com.cn
kr
co.kr
za
co.za
*.ck
!www.ck
github.io
blogspot.com
cloudfront.net
herokuapp.com
appspot.com
)";

std::vector<std::string_view> split_labels(std::string_view host) {
  std::vector<std::string_view> labels;
  std::size_t start = 0;
  while (true) {
    const auto dot = host.find('.', start);
    labels.push_back(host.substr(start, dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return labels;
}

}  // namespace

SuffixRules SuffixRules::parse(std::string_view text) {
  SuffixRules rules;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    // A rule ends at the first whitespace.
    const auto ws = line.find_first_of(" \t\r");
    line = line.substr(0, ws);
    if (line.empty() || line.starts_with("//")) continue;
    const auto rule = to_lower(line);
    if (rule.starts_with("!")) {
      rules.exceptions_.insert(rule.substr(1));
    } else if (rule.starts_with("*.")) {
      rules.wildcards_.insert(rule.substr(2));
    } else {
      rules.rules_.insert(rule);
    }
  }
  return rules;
}

const SuffixRules& SuffixRules::embedded() {
  static const SuffixRules rules = parse(kEmbeddedRules);
  return rules;
}

std::string_view SuffixRules::embedded_text() { return kEmbeddedRules; }

std::size_t SuffixRules::suffix_labels(std::string_view host) const {
  const auto labels = split_labels(host);
  const std::size_t k = labels.size();
  // Offsets of each label so suffixes can be taken as substrings.
  std::vector<std::size_t> offset(k);
  for (std::size_t i = 0, off = 0; i < k; ++i) {
    offset[i] = off;
    off += labels[i].size() + 1;
  }
  auto suffix = [&](std::size_t i) { return std::string(host.substr(offset[i])); };

  for (std::size_t i = 0; i < k; ++i) {
    if (exceptions_.contains(suffix(i))) return k - i - 1;
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t len = k - i;
    if (len <= best) break;
    if (rules_.contains(suffix(i)) || (i + 1 < k && wildcards_.contains(suffix(i + 1)))) {
      best = len;
    }
  }
  return best;
}

std::string SuffixRules::registrable_domain(std::string_view host_in) const {
  std::string host = to_lower(host_in);
  while (!host.empty() && host.back() == '.') host.pop_back();
  if (host.empty()) throw Error(ErrorCode::kInvalidArgument, "empty hostname");
  if (is_ip_literal(host)) return host;
  const auto labels = split_labels(host);
  std::size_t n = suffix_labels(host);
  if (n == 0) {
    if (labels.size() == 1) return host;
    n = 1;
  }
  if (n >= labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "host is a public suffix: " + host);
  }
  std::string out;
  for (std::size_t i = labels.size() - n - 1; i < labels.size(); ++i) {
    if (!out.empty()) out += '.';
    out += labels[i];
  }
  return out;
}

}  // namespace adaudit

#include "labguard/audit.hpp"

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "labguard/error.hpp"

namespace labguard {

namespace {

std::string to_hex(const unsigned char* data, unsigned int len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xF]);
  }
  return out;
}

void reject_non_finite(const Json& j) {
  if (j.is_number_float() && !std::isfinite(j.get<double>())) throw InvalidArgument("non-finite number in audit payload");
  if (j.is_structured()) {
    for (const auto& v : j) reject_non_finite(v);
  }
}

}  // namespace

std::string canonical_json(const Json& j) {
  reject_non_finite(j);
  return j.dump();
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  return to_hex(md, len);
}

std::string hmac_sha256_hex(const std::string& key, const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (HMAC(EVP_sha256(), key.data(), static_cast<int>(key.size()), reinterpret_cast<const unsigned char*>(bytes.data()),
           bytes.size(), md, &len) == nullptr) {
    throw Error("hmac failed");
  }
  return to_hex(md, len);
}

const std::string& genesis_hash() {
  static const std::string zero(64, '0');
  return zero;
}

std::string entry_hash_of(std::uint64_t seq, const std::string& txn, const std::string& event,
                          const std::string& payload_digest, const std::string& prev_hash) {
  return sha256_hex(std::to_string(seq) + "|" + txn + "|" + event + "|" + payload_digest + "|" + prev_hash);
}

Json AuditEntry::to_json() const {
  Json j{{"seq", seq},
         {"txn", txn},
         {"event", event},
         {"payload", payload},
         {"payload_digest", payload_digest},
         {"prev_hash", prev_hash},
         {"entry_hash", entry_hash}};
  if (mac) j["mac"] = *mac;
  return j;
}

AuditEntry AuditEntry::from_json(const Json& j) {
  AuditEntry e;
  e.seq = j.at("seq").get<std::uint64_t>();
  e.txn = j.at("txn").get<std::string>();
  e.event = j.at("event").get<std::string>();
  e.payload = j.at("payload");
  e.payload_digest = j.at("payload_digest").get<std::string>();
  e.prev_hash = j.at("prev_hash").get<std::string>();
  e.entry_hash = j.at("entry_hash").get<std::string>();
  if (j.contains("mac")) e.mac = j.at("mac").get<std::string>();
  const std::size_t expected_keys = e.mac ? 8 : 7;
  if (j.size() != expected_keys) throw MalformedRequest("audit record has unexpected fields");
  return e;
}

const AuditEntry& AuditLog::append(const std::string& txn, const std::string& event, const Json& payload) {
  AuditEntry e;
  e.seq = entries_.size();
  e.txn = txn;
  e.event = event;
  e.payload = payload;
  e.payload_digest = sha256_hex(canonical_json(payload));
  e.prev_hash = entries_.empty() ? genesis_hash() : entries_.back().entry_hash;
  e.entry_hash = entry_hash_of(e.seq, e.txn, e.event, e.payload_digest, e.prev_hash);
  if (key_) e.mac = hmac_sha256_hex(*key_, e.entry_hash);
  entries_.push_back(std::move(e));
  return entries_.back();
}

ChainReport verify_entries(const std::vector<AuditEntry>& entries, const std::optional<std::string>& mac_key) {
  ChainReport r;
  std::string prev = genesis_hash();
  auto fail = [&](std::size_t i, std::string why) {
    r.intact = false;
    r.first_break = i;
    r.reason = std::move(why);
    return r;
  };
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const AuditEntry& e = entries[i];
    r.length = i + 1;
    if (e.seq != i) return fail(i, "sequence number out of order");
    std::string digest;
    try {
      digest = sha256_hex(canonical_json(e.payload));
    } catch (const std::exception&) {
      return fail(i, "payload cannot be canonicalized");
    }
    if (digest != e.payload_digest) return fail(i, "payload digest mismatch");
    if (e.prev_hash != prev) return fail(i, "previous-hash link broken");
    if (entry_hash_of(e.seq, e.txn, e.event, e.payload_digest, e.prev_hash) != e.entry_hash) {
      return fail(i, "entry hash mismatch");
    }
    if (mac_key) {
      if (!e.mac || hmac_sha256_hex(*mac_key, e.entry_hash) != *e.mac) return fail(i, "authentication code mismatch");
    }
    prev = e.entry_hash;
  }
  return r;
}

ChainReport AuditLog::verify() const { return verify_entries(entries_, key_); }

std::string AuditLog::serialize() const {
  std::string out;
  for (const auto& e : entries_) {
    const std::string body = canonical_json(e.to_json());
    const auto n = static_cast<std::uint32_t>(body.size());
    out.push_back(static_cast<char>((n >> 24) & 0xFF));
    out.push_back(static_cast<char>((n >> 16) & 0xFF));
    out.push_back(static_cast<char>((n >> 8) & 0xFF));
    out.push_back(static_cast<char>(n & 0xFF));
    out += body;
  }
  return out;
}

void AuditLog::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open " + path + " for writing");
  const std::string bytes = serialize();
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("failed writing " + path);
}

ChainReport verify_serialized(const std::string& bytes, const std::optional<std::string>& mac_key) {
  std::vector<AuditEntry> entries;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t index = entries.size();
    auto broken = [&](std::string why) {
      // Records before the damaged one still have to chain correctly.
      ChainReport prior = verify_entries(entries, mac_key);
      if (!prior.intact) return prior;
      prior.intact = false;
      prior.first_break = index;
      prior.length = index + 1;
      prior.reason = std::move(why);
      return prior;
    };
    if (bytes.size() - pos < 4) return broken("truncated length prefix");
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    const std::uint32_t n = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
    pos += 4;
    if (n > bytes.size() - pos) return broken("record length runs past end of log");
    const std::string body = bytes.substr(pos, n);
    pos += n;
    try {
      const Json j = Json::parse(body);
      if (j.dump() != body) return broken("record is not in canonical form");
      entries.push_back(AuditEntry::from_json(j));
    } catch (const std::exception&) {
      return broken("record does not parse");
    }
  }
  return verify_entries(entries, mac_key);
}

ChainReport verify_file(const std::string& path, const std::optional<std::string>& mac_key) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    ChainReport r;
    r.intact = false;
    r.first_break = 0;
    r.reason = "cannot open " + path;
    return r;
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return verify_serialized(ss.str(), mac_key);
}

}  // namespace labguard

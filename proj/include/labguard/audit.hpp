#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace labguard {

using Json = nlohmann::json;

// Compact dump with sorted keys. Non-finite numbers are rejected.
std::string canonical_json(const Json& j);

std::string sha256_hex(const std::string& bytes);
std::string hmac_sha256_hex(const std::string& key, const std::string& bytes);

struct AuditEntry {
  std::uint64_t seq = 0;
  std::string txn;
  std::string event;
  Json payload;
  std::string payload_digest;  // sha256 of canonical payload
  std::string prev_hash;
  std::string entry_hash;      // sha256(seq | txn | event | payload_digest | prev_hash)
  std::optional<std::string> mac;  // hmac-sha256 of entry_hash

  Json to_json() const;
  static AuditEntry from_json(const Json& j);
};

// Hash of the (absent) entry before the first one.
const std::string& genesis_hash();

std::string entry_hash_of(std::uint64_t seq, const std::string& txn, const std::string& event,
                          const std::string& payload_digest, const std::string& prev_hash);

struct ChainReport {
  bool intact = true;
  std::size_t length = 0;  // records read
  std::optional<std::size_t> first_break;
  std::string reason;
};

class AuditLog {
 public:
  AuditLog() = default;
  explicit AuditLog(std::optional<std::string> mac_key) : key_(std::move(mac_key)) {}

  const AuditEntry& append(const std::string& txn, const std::string& event, const Json& payload);
  const std::vector<AuditEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const std::optional<std::string>& mac_key() const { return key_; }

  ChainReport verify() const;

  // Length-prefixed records: 4-byte big-endian size, then canonical JSON.
  std::string serialize() const;
  void save(const std::string& path) const;

 private:
  std::optional<std::string> key_;
  std::vector<AuditEntry> entries_;
};

// Verifies a serialized log. Never throws; framing, canonical-form, digest,
// linkage, sequence and MAC failures are all reported as a break.
ChainReport verify_serialized(const std::string& bytes, const std::optional<std::string>& mac_key = std::nullopt);
ChainReport verify_file(const std::string& path, const std::optional<std::string>& mac_key = std::nullopt);

ChainReport verify_entries(const std::vector<AuditEntry>& entries, const std::optional<std::string>& mac_key);

}  // namespace labguard

#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "curie/crypto/paillier.hpp"
#include "curie/data/dataset.hpp"
#include "curie/data/design.hpp"
#include "curie/error.hpp"
#include "json.hpp"

namespace curie::aggregation {

CURIE_DEFINE_ERROR(EmptyRelease);
CURIE_DEFINE_ERROR(OverflowAbort);
CURIE_DEFINE_ERROR(TransportError);

// Sufficient statistics for least squares: O = X^T X, V = X^T y, n rows.
struct LocalStats {
  Eigen::MatrixXd o;
  Eigen::VectorXd v;
  double n = 0.0;

  static LocalStats zeros(std::size_t m);
  std::size_t width() const { return static_cast<std::size_t>(v.size()); }
};

LocalStats local_stats(const data::DesignMatrix& design);
// Applies the released selections, encodes and accumulates. Throws
// EmptyRelease when nothing survives the filters.
LocalStats local_stats(const data::Dataset& ds, std::span<const data::RowFilter> selections);

LocalStats operator+(const LocalStats& a, const LocalStats& b);

// Row vector carried through the ring: upper triangle of O (row-major,
// diagonal included), then V, then n.
Eigen::MatrixXd pack(const LocalStats& s);
LocalStats unpack(const Eigen::MatrixXd& packed, std::size_t m);
std::size_t packed_width(std::size_t m);

enum class Phase : std::uint8_t { kKeyBroadcast = 1, kAccumulate = 2 };

// Wire format: version u8, session id u64 (big-endian), phase u8, sender
// (u8 length + bytes), payload (rest).
struct Envelope {
  static constexpr std::uint8_t kVersion = 1;
  std::uint8_t version = kVersion;
  std::uint64_t session_id = 0;
  Phase phase = Phase::kKeyBroadcast;
  std::string sender;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_envelope(const Envelope& e);
// Throws TransportError on malformed input or an unknown version.
Envelope decode_envelope(std::span<const std::uint8_t> bytes);

struct TranscriptEntry {
  std::string sender;
  std::string receiver;
  Phase phase = Phase::kKeyBroadcast;
  std::vector<std::uint8_t> bytes;  // the encoded envelope
};

// Append-only record of every message of one session.
struct Transcript {
  std::uint64_t session_id = 0;
  std::string initiator;
  std::vector<std::string> ring;
  std::vector<TranscriptEntry> entries;

  nlohmann::json to_json() const;
};

struct RingParty {
  std::string member_id;
  // Empty when the member's agreement released nothing; it then contributes
  // encrypted zeros so that ring positions do not reveal participation.
  std::optional<LocalStats> stats;
};

struct SessionOptions {
  crypto::HEParams he;
  std::uint64_t seed = 1;
  std::optional<crypto::SessionBounds> bounds;  // validated before keygen
  std::chrono::microseconds hop_latency{0};
  unsigned threads = 1;
  // Negative control for the audit: no encryption and zero masks.
  bool insecure = false;
};

struct SessionTiming {
  double keygen = 0.0;
  double encrypt = 0.0;
  double evaluate = 0.0;
  double decrypt = 0.0;

  double encrypted_phase() const { return encrypt + evaluate + decrypt; }
};

struct SessionResult {
  LocalStats pooled;
  Transcript transcript;
  SessionTiming timing;
  std::size_t key_messages = 0;
  std::size_t ring_messages = 0;
};

// Ring order is `parties` as given; parties[0] is the initiator. The
// initiator generates the session key, broadcasts it (n - 1 messages), sends
// its encrypted random masks to its successor, every member adds its own
// encrypted statistics and forwards, and the last member returns the total
// to the initiator (n ring messages). The initiator removes the masks and
// adds its own statistics in the clear.
SessionResult run_ring_session(std::span<const RingParty> parties,
                               const SessionOptions& options = {});

struct Finding {
  std::string kind;    // "plaintext-in-payload" or "recoverable-input"
  std::string member;  // whose input is exposed
  std::string detail;
};

struct LeakageReport {
  bool payload_clean = true;
  std::vector<Finding> findings;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

// (a) Scans every payload for the non-initiators' plaintext statistics, both
// as raw bytes (serialised fixed-point residues and IEEE doubles) and by
// decoding ring payloads and looking for unencrypted cells. (b) With the
// initiator corrupted, flags each honest member whose ring predecessor and
// successor are both corrupted; longer honest runs only expose their sum and
// are reported as notes.
LeakageReport audit_transcript(const Transcript& transcript,
                               const std::set<std::string>& corrupted,
                               std::span<const RingParty> inputs = {},
                               unsigned scale_bits = 20);

}  // namespace curie::aggregation

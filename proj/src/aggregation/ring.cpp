#include "curie/aggregation/ring.hpp"

#include <algorithm>
#include <chrono>
#include <cstring>
#include <memory>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "curie/simd/kernels.hpp"

namespace curie::aggregation {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 15]);
  }
  return out;
}

std::string_view phase_name(Phase p) {
  return p == Phase::kKeyBroadcast ? "key-broadcast" : "accumulate";
}

std::vector<std::uint8_t> key_payload(const crypto::PublicKey& pk, unsigned scale_bits,
                                      std::size_t m) {
  std::vector<std::uint8_t> out;
  crypto::append_bigint(out, pk.n());
  crypto::append_bigint(out, scale_bits);
  crypto::append_bigint(out, m);
  return out;
}

struct KeyInfo {
  mpz_class n;
  unsigned scale_bits = 0;
  std::size_t m = 0;
};

KeyInfo read_key_payload(std::span<const std::uint8_t> payload) {
  std::size_t pos = 0;
  KeyInfo k;
  k.n = crypto::read_bigint(payload, pos);
  k.scale_bits = static_cast<unsigned>(crypto::read_bigint(payload, pos).get_ui());
  k.m = crypto::read_bigint(payload, pos).get_ui();
  if (pos != payload.size()) throw TransportError("trailing bytes in key broadcast");
  return k;
}

// One ring participant. It only ever sees envelopes.
class Member {
 public:
  Member(const RingParty& party, std::size_t m, std::uint64_t seed, bool insecure)
      : party_(party), m_(m), rng_(seed), insecure_(insecure) {}

  void on_key(const Envelope& e) {
    const KeyInfo info = read_key_payload(e.payload);
    if (info.m != m_) throw TransportError("key broadcast announces a different width");
    pk_ = crypto::PublicKey(info.n);
    scale_bits_ = info.scale_bits;
  }

  std::vector<std::uint8_t> on_accumulate(const Envelope& e, SessionTiming& timing) {
    crypto::CipherMatrix running = crypto::deserialize_cipher(e.payload);
    const LocalStats own = party_.stats ? *party_.stats : LocalStats::zeros(m_);
    if (own.width() != m_) throw TransportError(party_.member_id + ": width mismatch");
    std::vector<mpz_class> residues;
    try {
      residues = crypto::encode_matrix(pack(own), pk_, scale_bits_);
    } catch (const crypto::Overflow& err) {
      throw OverflowAbort(party_.member_id + ": " + err.what());
    }
    if (insecure_) {
      auto start = Clock::now();
      for (std::size_t i = 0; i < residues.size(); ++i) {
        running.cells[i] = (running.cells[i] + residues[i]) % pk_.n();
      }
      timing.evaluate += seconds_since(start);
      return crypto::serialize(running);
    }
    auto start = Clock::now();
    const crypto::CipherMatrix mine =
        crypto::encrypt_residues(pk_, 1, residues.size(), residues, scale_bits_, rng_);
    timing.encrypt += seconds_since(start);
    start = Clock::now();
    running = crypto::add_cipher(pk_, running, mine);
    timing.evaluate += seconds_since(start);
    return crypto::serialize(running);
  }

 private:
  const RingParty& party_;
  std::size_t m_;
  crypto::Random rng_;
  bool insecure_;
  crypto::PublicKey pk_;
  unsigned scale_bits_ = 0;
};

std::uint64_t party_seed(std::uint64_t seed, std::size_t index) {
  return seed ^ (0x9e3779b97f4a7c15ULL * (index + 1));
}

}  // namespace

LocalStats LocalStats::zeros(std::size_t m) {
  return {Eigen::MatrixXd::Zero(m, m), Eigen::VectorXd::Zero(m), 0.0};
}

LocalStats local_stats(const data::DesignMatrix& design) {
  const std::size_t m = design.cols;
  std::vector<double> gram(m * m, 0.0);
  std::vector<double> cross(m, 0.0);
  simd::active().gram_accumulate(design.x.data(), design.y.data(), design.rows, m,
                                 gram.data(), cross.data());
  LocalStats s = LocalStats::zeros(m);
  for (std::size_t i = 0; i < m; ++i) {
    s.v(i) = cross[i];
    for (std::size_t j = 0; j < m; ++j) s.o(i, j) = gram[i * m + j];
  }
  s.n = static_cast<double>(design.rows);
  return s;
}

LocalStats local_stats(const data::Dataset& ds, std::span<const data::RowFilter> selections) {
  const data::Dataset released = data::apply_selections(ds, selections);
  if (released.rows() == 0) {
    throw EmptyRelease("no rows of '" + ds.provenance() + "' survive the selections");
  }
  return local_stats(data::to_design_matrix(released));
}

LocalStats operator+(const LocalStats& a, const LocalStats& b) {
  return {a.o + b.o, a.v + b.v, a.n + b.n};
}

std::size_t packed_width(std::size_t m) { return m * (m + 1) / 2 + m + 1; }

Eigen::MatrixXd pack(const LocalStats& s) {
  const std::size_t m = s.width();
  Eigen::MatrixXd out(1, packed_width(m));
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) out(0, k++) = s.o(i, j);
  }
  for (std::size_t i = 0; i < m; ++i) out(0, k++) = s.v(i);
  out(0, k) = s.n;
  return out;
}

LocalStats unpack(const Eigen::MatrixXd& packed, std::size_t m) {
  if (static_cast<std::size_t>(packed.size()) != packed_width(m)) {
    throw TransportError("packed statistics have the wrong width");
  }
  LocalStats s = LocalStats::zeros(m);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      s.o(i, j) = packed(k);
      s.o(j, i) = packed(k);
      ++k;
    }
  }
  for (std::size_t i = 0; i < m; ++i) s.v(i) = packed(k++);
  s.n = packed(k);
  return s;
}

std::vector<std::uint8_t> encode_envelope(const Envelope& e) {
  if (e.sender.size() > 255) throw TransportError("sender id longer than 255 bytes");
  std::vector<std::uint8_t> out;
  out.reserve(11 + e.sender.size() + e.payload.size());
  out.push_back(e.version);
  for (int shift = 56; shift >= 0; shift -= 8) {
    out.push_back(static_cast<std::uint8_t>(e.session_id >> shift));
  }
  out.push_back(static_cast<std::uint8_t>(e.phase));
  out.push_back(static_cast<std::uint8_t>(e.sender.size()));
  out.insert(out.end(), e.sender.begin(), e.sender.end());
  out.insert(out.end(), e.payload.begin(), e.payload.end());
  return out;
}

Envelope decode_envelope(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 11) throw TransportError("envelope shorter than its header");
  Envelope e;
  e.version = bytes[0];
  if (e.version != Envelope::kVersion) {
    throw TransportError("unsupported envelope version " + std::to_string(e.version));
  }
  for (int i = 1; i <= 8; ++i) e.session_id = (e.session_id << 8) | bytes[i];
  const std::uint8_t phase = bytes[9];
  if (phase != 1 && phase != 2) throw TransportError("unknown phase tag");
  e.phase = static_cast<Phase>(phase);
  const std::size_t len = bytes[10];
  if (11 + len > bytes.size()) throw TransportError("truncated sender id");
  e.sender.assign(bytes.begin() + 11, bytes.begin() + 11 + static_cast<std::ptrdiff_t>(len));
  e.payload.assign(bytes.begin() + 11 + static_cast<std::ptrdiff_t>(len), bytes.end());
  return e;
}

nlohmann::json Transcript::to_json() const {
  nlohmann::json messages = nlohmann::json::array();
  for (const TranscriptEntry& m : entries) {
    messages.push_back({{"sender", m.sender},
                        {"receiver", m.receiver},
                        {"phase", std::string(phase_name(m.phase))},
                        {"bytes", hex(m.bytes)}});
  }
  return {{"session_id", session_id},
          {"initiator", initiator},
          {"ring", ring},
          {"messages", messages}};
}

SessionResult run_ring_session(std::span<const RingParty> parties,
                               const SessionOptions& options) {
  if (parties.size() < 2) throw ConfigError("a ring session needs at least 2 members");
  std::optional<std::size_t> width;
  for (const RingParty& p : parties) {
    if (!p.stats) continue;
    if (width && *width != p.stats->width()) {
      throw ConfigError("members disagree on the design width");
    }
    width = p.stats->width();
  }
  if (!width) throw EmptyRelease("no member contributes any rows");
  const std::size_t m = *width;
  if (options.bounds) {
    try {
      crypto::validate_params(options.he, *options.bounds);
    } catch (const crypto::ParamError& e) {
      throw OverflowAbort(e.what());
    }
  }

  SessionResult result;
  Transcript& t = result.transcript;
  t.session_id = options.seed * 0x2545f4914f6cdd1dULL + parties.size();
  t.initiator = parties[0].member_id;
  for (const RingParty& p : parties) t.ring.push_back(p.member_id);

  auto send = [&](const std::string& from, const std::string& to, Phase phase,
                  std::vector<std::uint8_t> payload) {
    Envelope e{Envelope::kVersion, t.session_id, phase, from, std::move(payload)};
    t.entries.push_back({from, to, phase, encode_envelope(e)});
    if (options.hop_latency.count() > 0) std::this_thread::sleep_for(options.hop_latency);
    return decode_envelope(t.entries.back().bytes);
  };

  // Initiator: session key.
  crypto::Random rng(options.seed);
  auto start = Clock::now();
  const crypto::KeyPair keys = crypto::keygen(options.he, rng);
  result.timing.keygen = seconds_since(start);

  std::vector<std::unique_ptr<Member>> members;
  for (std::size_t i = 0; i < parties.size(); ++i) {
    members.push_back(std::make_unique<Member>(parties[i], m, party_seed(options.seed, i),
                                               options.insecure));
  }
  const auto key_bytes = key_payload(keys.pk, options.he.scale_bits, m);
  for (std::size_t i = 1; i < parties.size(); ++i) {
    members[i]->on_key(send(t.initiator, parties[i].member_id, Phase::kKeyBroadcast, key_bytes));
    ++result.key_messages;
  }

  // Initiator: uniform masks mod n, so removing them is exact.
  const std::size_t width_packed = packed_width(m);
  std::vector<mpz_class> masks(width_packed);
  for (auto& mask : masks) mask = options.insecure ? mpz_class(0) : rng.below(keys.pk.n());
  crypto::CipherMatrix running;
  start = Clock::now();
  if (options.insecure) {
    running = {1, width_packed, options.he.scale_bits, "plaintext", masks};
  } else {
    running = crypto::encrypt_residues(keys.pk, 1, width_packed, masks,
                                       options.he.scale_bits, rng, options.threads);
  }
  result.timing.encrypt += seconds_since(start);

  Envelope in = send(t.initiator, parties[1].member_id, Phase::kAccumulate,
                     crypto::serialize(running));
  ++result.ring_messages;
  for (std::size_t i = 1; i < parties.size(); ++i) {
    auto out = members[i]->on_accumulate(in, result.timing);
    const std::string& next = parties[(i + 1) % parties.size()].member_id;
    in = send(parties[i].member_id, next, Phase::kAccumulate, std::move(out));
    ++result.ring_messages;
  }

  // Initiator: decrypt, unmask, add its own statistics.
  running = crypto::deserialize_cipher(in.payload);
  start = Clock::now();
  std::vector<mpz_class> total =
      options.insecure ? running.cells
                       : crypto::decrypt_residues(keys.sk, running, options.threads);
  result.timing.decrypt += seconds_since(start);
  const mpz_class& n = keys.pk.n();
  const LocalStats own = parties[0].stats ? *parties[0].stats : LocalStats::zeros(m);
  std::vector<mpz_class> own_residues;
  try {
    own_residues = crypto::encode_matrix(pack(own), keys.pk, options.he.scale_bits);
  } catch (const crypto::Overflow& e) {
    throw OverflowAbort(t.initiator + ": " + e.what());
  }
  for (std::size_t i = 0; i < width_packed; ++i) {
    total[i] = crypto::to_residue(total[i] - masks[i] + own_residues[i], n);
  }
  result.pooled = unpack(crypto::decode_matrix(total, 1, width_packed, n, options.he.scale_bits), m);
  return result;
}

nlohmann::json LeakageReport::to_json() const {
  nlohmann::json f = nlohmann::json::array();
  for (const Finding& x : findings) {
    f.push_back({{"kind", x.kind}, {"member", x.member}, {"detail", x.detail}});
  }
  return {{"payload_clean", payload_clean}, {"findings", f}, {"notes", notes}};
}

LeakageReport audit_transcript(const Transcript& transcript,
                               const std::set<std::string>& corrupted,
                               std::span<const RingParty> inputs, unsigned scale_bits) {
  LeakageReport report;
  const double scale = static_cast<double>(std::uint64_t{1} << scale_bits);

  // Modulus from the key broadcast; needed to form residues and spot
  // unencrypted cells.
  std::optional<KeyInfo> key;
  for (const TranscriptEntry& e : transcript.entries) {
    if (e.phase != Phase::kKeyBroadcast) continue;
    key = read_key_payload(decode_envelope(e.bytes).payload);
    break;
  }

  // Byte patterns of every non-initiator's plaintext entries.
  std::unordered_map<std::uint32_t, std::unordered_map<std::string, std::string>> by_length;
  std::unordered_map<std::uint64_t, std::string> doubles;
  std::map<std::string, std::string> residue_owner;  // residue (hex) -> member
  for (const RingParty& p : inputs) {
    if (p.member_id == transcript.initiator || !p.stats) continue;
    const Eigen::MatrixXd packed = pack(*p.stats);
    for (Eigen::Index i = 0; i < packed.size(); ++i) {
      const double v = packed(i);
      if (v == 0.0) continue;
      std::uint64_t bits = 0;
      std::memcpy(&bits, &v, sizeof(bits));
      doubles.emplace(bits, p.member_id);
      if (!key) continue;
      const mpz_class r =
          crypto::to_residue(mpz_class(static_cast<long>(crypto::encode_fixed(v, scale))), key->n);
      std::vector<std::uint8_t> ser;
      crypto::append_bigint(ser, r);
      const std::uint32_t len = static_cast<std::uint32_t>(ser.size() - 4);
      by_length[len].emplace(std::string(ser.begin() + 4, ser.end()), p.member_id);
      residue_owner.emplace(r.get_str(16), p.member_id);
    }
  }

  std::set<std::pair<std::string, std::string>> reported;
  auto flag = [&](const std::string& member, const std::string& detail) {
    if (!reported.emplace(member, detail).second) return;
    report.payload_clean = false;
    report.findings.push_back({"plaintext-in-payload", member, detail});
  };

  for (std::size_t idx = 0; idx < transcript.entries.size(); ++idx) {
    const TranscriptEntry& e = transcript.entries[idx];
    const std::string where = "message " + std::to_string(idx) + " (" + e.sender +
                              " -> " + e.receiver + ")";
    const auto& b = e.bytes;
    for (std::size_t pos = 0; pos + 8 <= b.size(); ++pos) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, b.data() + pos, sizeof(bits));
      if (auto it = doubles.find(bits); it != doubles.end()) {
        flag(it->second, where + ": raw floating-point entry");
      }
      const std::uint32_t len = (std::uint32_t{b[pos]} << 24) |
                                (std::uint32_t{b[pos + 1]} << 16) |
                                (std::uint32_t{b[pos + 2]} << 8) | b[pos + 3];
      auto bucket = by_length.find(len);
      if (bucket == by_length.end() || pos + 4 + len > b.size()) continue;
      const std::string window(b.begin() + static_cast<std::ptrdiff_t>(pos + 4),
                               b.begin() + static_cast<std::ptrdiff_t>(pos + 4 + len));
      if (auto hit = bucket->second.find(window); hit != bucket->second.end()) {
        flag(hit->second, where + ": fixed-point entry bytes");
      }
    }
    if (e.phase != Phase::kAccumulate || !key) continue;
    const crypto::CipherMatrix c = crypto::deserialize_cipher(decode_envelope(b).payload);
    std::size_t clear = 0;
    for (const mpz_class& cell : c.cells) {
      if (cell < key->n) ++clear;
      if (auto it = residue_owner.find(cell.get_str(16)); it != residue_owner.end()) {
        flag(it->second, where + ": decoded cell equals a plaintext entry");
      }
    }
    if (clear == c.cells.size() && !c.cells.empty()) {
      report.payload_clean = false;
      report.findings.push_back(
          {"plaintext-in-payload", "", where + ": payload is not encrypted"});
    }
  }

  // Corruption analysis.
  const auto& ring = transcript.ring;
  const std::size_t n = ring.size();
  if (!corrupted.contains(transcript.initiator)) {
    report.notes.push_back("initiator honest: corrupted members only see ciphertexts");
    return report;
  }
  auto is_corrupt = [&](std::size_t i) { return corrupted.contains(ring[i % n]); };
  for (std::size_t i = 1; i < n; ++i) {
    if (is_corrupt(i)) continue;
    const std::size_t pred = i - 1;
    const std::size_t succ = (i + 1) % n;
    if (is_corrupt(pred) && is_corrupt(succ)) {
      report.findings.push_back(
          {"recoverable-input", ring[i],
           "predecessor " + ring[pred] + " and successor " + ring[succ] +
               " are corrupted and the initiator holds the key"});
    }
  }
  // Runs of two or more honest members between corrupted neighbours.
  std::size_t i = 1;
  while (i < n) {
    if (is_corrupt(i)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && !is_corrupt(j)) ++j;
    if (j - i >= 2) {
      std::string names;
      for (std::size_t k = i; k < j; ++k) names += (k > i ? ", " : "") + ring[k];
      report.notes.push_back("only the sum of {" + names + "} is exposed");
    }
    i = j;
  }
  return report;
}

}  // namespace curie::aggregation

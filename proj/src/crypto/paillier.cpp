#include "curie/crypto/paillier.hpp"

#include <sodium.h>

#include <chrono>
#include <cmath>
#include <functional>
#include <thread>

namespace curie::crypto {
namespace {

constexpr double kEncodeLimit = 4611686018427387904.0;  // 2^62

void parallel_for(std::size_t count, unsigned threads,
                  const std::function<void(std::size_t)>& body) {
  if (threads <= 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (count + threads - 1) / threads;
  for (unsigned t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&, begin, end] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

std::string modulus_id(const mpz_class& n) {
  static const int sodium_ready = sodium_init();
  (void)sodium_ready;
  std::vector<std::uint8_t> bytes;
  append_bigint(bytes, n);
  unsigned char digest[8];
  crypto_generichash(digest, sizeof(digest), bytes.data(), bytes.size(), nullptr, 0);
  std::string hex(sizeof(digest) * 2 + 1, '\0');
  sodium_bin2hex(hex.data(), hex.size(), digest, sizeof(digest));
  hex.pop_back();
  return hex;
}

mpz_class random_prime(unsigned bits, Random& rng) {
  mpz_class candidate = rng.bits(bits);
  // Top two bits set so that p * q has exactly 2 * bits bits.
  mpz_setbit(candidate.get_mpz_t(), bits - 1);
  mpz_setbit(candidate.get_mpz_t(), bits - 2);
  mpz_class prime;
  mpz_nextprime(prime.get_mpz_t(), candidate.get_mpz_t());
  return prime;
}

mpz_class powm(const mpz_class& b, const mpz_class& e, const mpz_class& m) {
  mpz_class r;
  mpz_powm(r.get_mpz_t(), b.get_mpz_t(), e.get_mpz_t(), m.get_mpz_t());
  return r;
}

}  // namespace

class EncryptionTable {
 public:
  static constexpr unsigned kWindow = 8;

  EncryptionTable(const mpz_class& n, const mpz_class& n2) : n2_(n2) {
    // h = -x^2 mod n for a generator-like x derived from the modulus.
    gmp_randclass rng(gmp_randinit_mt);
    rng.seed(n);
    mpz_class x;
    do {
      x = rng.get_z_range(n);
    } while (x < 2);
    const mpz_class h = n - (x * x) % n;
    mpz_class base = powm(h, n, n2);
    const unsigned windows = (PublicKey::kAlphaBits + kWindow - 1) / kWindow;
    table_.resize(windows);
    for (auto& row : table_) {
      row.resize(std::size_t{1} << kWindow);
      row[0] = 1;
      for (std::size_t j = 1; j < row.size(); ++j) row[j] = (row[j - 1] * base) % n2;
      base = (row.back() * base) % n2;
    }
  }

  mpz_class pow(const mpz_class& alpha) const {
    mpz_class acc = 1;
    for (std::size_t w = 0; w < table_.size(); ++w) {
      const unsigned long digit = extract(alpha, w * kWindow);
      if (digit) acc = (acc * table_[w][digit]) % n2_;
    }
    return acc;
  }

 private:
  static unsigned long extract(const mpz_class& v, std::size_t bit) {
    unsigned long d = 0;
    for (unsigned i = 0; i < kWindow; ++i) {
      d |= static_cast<unsigned long>(mpz_tstbit(v.get_mpz_t(), bit + i)) << i;
    }
    return d;
  }

  mpz_class n2_;
  std::vector<std::vector<mpz_class>> table_;
};

void validate_params(const HEParams& params, const SessionBounds& bounds) {
  if (params.key_bits < 128 || params.key_bits % 2 != 0) {
    throw ParamError("key size must be an even number of bits >= 128");
  }
  if (params.scale_bits == 0 || params.scale_bits > 52) {
    throw ParamError("scale must be 2^1 .. 2^52");
  }
  if (bounds.n_max < 0 || bounds.m_max < 0 || bounds.v_max < 0) {
    throw ParamError("session bounds must be non-negative");
  }
  const double sv = params.scale() * bounds.v_max;
  const double needed = std::log2(std::max(1.0, bounds.n_max)) +
                        2.0 * std::log2(std::max(1.0, sv)) +
                        std::log2(std::max(1.0, bounds.m_max));
  if (needed >= static_cast<double>(params.key_bits - 2)) {
    throw ParamError("session needs " + std::to_string(needed) +
                     " plaintext bits but the key offers " +
                     std::to_string(params.key_bits - 2));
  }
}

Random::Random(std::uint64_t seed) : state_(gmp_randinit_mt) {
  mpz_class s;
  mpz_import(s.get_mpz_t(), 1, 1, sizeof(seed), 0, 0, &seed);
  state_.seed(s);
}

mpz_class Random::below(const mpz_class& bound) { return state_.get_z_range(bound); }

mpz_class Random::bits(unsigned count) { return state_.get_z_bits(count); }

PublicKey::PublicKey(mpz_class n)
    : n_(std::move(n)),
      n2_(n_ * n_),
      id_(modulus_id(n_)),
      table_(std::make_shared<EncryptionTable>(n_, n2_)) {}

mpz_class PublicKey::encrypt(const mpz_class& m, Random& rng) const {
  return encrypt_alpha(m, rng.bits(kAlphaBits));
}

mpz_class PublicKey::encrypt_alpha(const mpz_class& m, const mpz_class& alpha) const {
  if (m < 0 || m >= n_) throw Overflow("plaintext outside [0, n)");
  return ((1 + m * n_) * table_->pow(alpha)) % n2_;
}

mpz_class PublicKey::encrypt_with(const mpz_class& m, const mpz_class& r) const {
  if (m < 0 || m >= n_) throw Overflow("plaintext outside [0, n)");
  // g = n + 1, so g^m = 1 + m * n (mod n^2).
  mpz_class gm = (1 + m * n_) % n2_;
  mpz_class rn;
  mpz_powm(rn.get_mpz_t(), r.get_mpz_t(), n_.get_mpz_t(), n2_.get_mpz_t());
  return (gm * rn) % n2_;
}

mpz_class PublicKey::add(const mpz_class& c1, const mpz_class& c2) const {
  return (c1 * c2) % n2_;
}

SecretKey::SecretKey(const mpz_class& p, const mpz_class& q)
    : n_(p * q), p_(p), q_(q), p2_(p * p), q2_(q * q) {
  // hp = L_p(g^(p-1) mod p^2)^-1 mod p with g = n + 1; likewise for q.
  auto h = [&](const mpz_class& f, const mpz_class& f2) {
    const mpz_class l = (powm(n_ + 1, f - 1, f2) - 1) / f;
    mpz_class inv;
    if (mpz_invert(inv.get_mpz_t(), l.get_mpz_t(), f.get_mpz_t()) == 0) {
      throw ParamError("degenerate prime factor");
    }
    return inv;
  };
  hp_ = h(p_, p2_);
  hq_ = h(q_, q2_);
  if (mpz_invert(q_inv_p_.get_mpz_t(), q_.get_mpz_t(), p_.get_mpz_t()) == 0) {
    throw ParamError("p and q are not coprime");
  }
}

mpz_class SecretKey::decrypt(const mpz_class& c) const {
  const mpz_class mp = ((powm(c % p2_, p_ - 1, p2_) - 1) / p_ * hp_) % p_;
  const mpz_class mq = ((powm(c % q2_, q_ - 1, q2_) - 1) / q_ * hq_) % q_;
  mpz_class diff = ((mp - mq) * q_inv_p_) % p_;
  if (diff < 0) diff += p_;
  return mq + q_ * diff;
}

KeyPair keygen(const HEParams& params, Random& rng) {
  if (params.key_bits < 128 || params.key_bits % 2 != 0) {
    throw ParamError("key size must be an even number of bits >= 128");
  }
  const auto start = std::chrono::steady_clock::now();
  const unsigned half = params.key_bits / 2;
  mpz_class p, q;
  do {
    p = random_prime(half, rng);
    q = random_prime(half, rng);
  } while (p == q);
  KeyPair kp{PublicKey(p * q), SecretKey(p, q), 0.0};
  kp.keygen_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return kp;
}

std::int64_t encode_fixed(double x, double scale) {
  const double scaled = std::round(x * scale);
  if (!std::isfinite(scaled) || std::abs(scaled) >= kEncodeLimit) {
    throw Overflow("value " + std::to_string(x) + " does not fit the fixed-point range");
  }
  return static_cast<std::int64_t>(scaled);
}

double decode_fixed(std::int64_t k, double scale) { return static_cast<double>(k) / scale; }

double decode_fixed(const mpz_class& k, double scale) {
  return mpz_get_d(k.get_mpz_t()) / scale;
}

mpz_class to_residue(const mpz_class& k, const mpz_class& n) {
  mpz_class r;
  mpz_mod(r.get_mpz_t(), k.get_mpz_t(), n.get_mpz_t());
  return r;
}

mpz_class from_residue(const mpz_class& r, const mpz_class& n) {
  return r > n / 2 ? mpz_class(r - n) : r;
}

CipherMatrix encrypt_residues(const PublicKey& pk, std::size_t rows, std::size_t cols,
                              std::span<const mpz_class> residues, unsigned scale_bits,
                              Random& rng, unsigned threads) {
  if (residues.size() != rows * cols) throw DimMismatch("residue count != rows * cols");
  std::vector<mpz_class> alpha(residues.size());
  for (auto& a : alpha) a = rng.bits(PublicKey::kAlphaBits);
  CipherMatrix c{rows, cols, scale_bits, pk.id(), std::vector<mpz_class>(residues.size())};
  parallel_for(residues.size(), threads,
               [&](std::size_t i) { c.cells[i] = pk.encrypt_alpha(residues[i], alpha[i]); });
  return c;
}

std::vector<mpz_class> decrypt_residues(const SecretKey& sk, const CipherMatrix& c,
                                        unsigned threads) {
  std::vector<mpz_class> out(c.cells.size());
  parallel_for(c.cells.size(), threads,
               [&](std::size_t i) { out[i] = sk.decrypt(c.cells[i]); });
  return out;
}

std::vector<mpz_class> encode_matrix(const Eigen::MatrixXd& m, const PublicKey& pk,
                                     unsigned scale_bits) {
  const double scale = static_cast<double>(std::uint64_t{1} << scale_bits);
  const mpz_class half = pk.n() / 2;
  std::vector<mpz_class> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const mpz_class k(static_cast<long>(encode_fixed(m(i, j), scale)));
      if (abs(k) >= half) throw Overflow("encoded value exceeds n / 2");
      out.push_back(to_residue(k, pk.n()));
    }
  }
  return out;
}

Eigen::MatrixXd decode_matrix(std::span<const mpz_class> residues, std::size_t rows,
                              std::size_t cols, const mpz_class& n, unsigned scale_bits) {
  if (residues.size() != rows * cols) throw DimMismatch("residue count != rows * cols");
  const double scale = static_cast<double>(std::uint64_t{1} << scale_bits);
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      m(i, j) = decode_fixed(from_residue(residues[i * cols + j], n), scale);
    }
  }
  return m;
}

CipherMatrix encrypt_matrix(const PublicKey& pk, const Eigen::MatrixXd& m,
                            unsigned scale_bits, Random& rng, unsigned threads) {
  const auto residues = encode_matrix(m, pk, scale_bits);
  return encrypt_residues(pk, static_cast<std::size_t>(m.rows()),
                          static_cast<std::size_t>(m.cols()), residues, scale_bits, rng,
                          threads);
}

Eigen::MatrixXd decrypt_matrix(const SecretKey& sk, const CipherMatrix& c,
                               unsigned threads) {
  const auto residues = decrypt_residues(sk, c, threads);
  return decode_matrix(residues, c.rows, c.cols, sk.n(), c.scale_bits);
}

CipherMatrix add_cipher(const PublicKey& pk, const CipherMatrix& a, const CipherMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw DimMismatch(std::to_string(a.rows) + "x" + std::to_string(a.cols) + " vs " +
                      std::to_string(b.rows) + "x" + std::to_string(b.cols));
  }
  if (a.key_id != b.key_id || a.key_id != pk.id()) {
    throw KeyMismatch("ciphertexts are under different keys");
  }
  if (a.scale_bits != b.scale_bits) throw KeyMismatch("ciphertexts use different scales");
  CipherMatrix out{a.rows, a.cols, a.scale_bits, a.key_id,
                   std::vector<mpz_class>(a.cells.size())};
  for (std::size_t i = 0; i < a.cells.size(); ++i) out.cells[i] = pk.add(a.cells[i], b.cells[i]);
  return out;
}

void append_bigint(std::vector<std::uint8_t>& out, const mpz_class& v) {
  if (v < 0) throw DecodeError("negative integers are not serialised");
  std::size_t count = 0;
  std::vector<std::uint8_t> mag((mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8 + 1);
  mpz_export(mag.data(), &count, 1, 1, 1, 0, v.get_mpz_t());
  mag.resize(count);
  const auto len = static_cast<std::uint32_t>(count);
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(len >> shift));
  out.insert(out.end(), mag.begin(), mag.end());
}

mpz_class read_bigint(std::span<const std::uint8_t> in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw DecodeError("truncated length prefix");
  std::uint32_t len = 0;
  for (int i = 0; i < 4; ++i) len = (len << 8) | in[pos + i];
  pos += 4;
  if (pos + len > in.size()) throw DecodeError("truncated integer");
  mpz_class v;
  if (len > 0) mpz_import(v.get_mpz_t(), len, 1, 1, 1, 0, in.data() + pos);
  pos += len;
  return v;
}

std::vector<std::uint8_t> serialize(const CipherMatrix& c) {
  std::vector<std::uint8_t> out;
  append_bigint(out, c.rows);
  append_bigint(out, c.cols);
  append_bigint(out, c.scale_bits);
  out.push_back(static_cast<std::uint8_t>(c.key_id.size()));
  out.insert(out.end(), c.key_id.begin(), c.key_id.end());
  for (const mpz_class& v : c.cells) append_bigint(out, v);
  return out;
}

CipherMatrix deserialize_cipher(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  CipherMatrix c;
  c.rows = read_bigint(bytes, pos).get_ui();
  c.cols = read_bigint(bytes, pos).get_ui();
  c.scale_bits = static_cast<unsigned>(read_bigint(bytes, pos).get_ui());
  if (pos >= bytes.size()) throw DecodeError("missing key id");
  const std::size_t id_len = bytes[pos++];
  if (pos + id_len > bytes.size()) throw DecodeError("truncated key id");
  c.key_id.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                  bytes.begin() + static_cast<std::ptrdiff_t>(pos + id_len));
  pos += id_len;
  c.cells.reserve(c.rows * c.cols);
  for (std::size_t i = 0; i < c.rows * c.cols; ++i) c.cells.push_back(read_bigint(bytes, pos));
  if (pos != bytes.size()) throw DecodeError("trailing bytes after ciphertext matrix");
  return c;
}

}  // namespace curie::crypto

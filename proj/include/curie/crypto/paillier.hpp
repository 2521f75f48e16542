#pragma once

#include <gmpxx.h>

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "curie/error.hpp"

namespace curie::crypto {

CURIE_DEFINE_ERROR(ParamError);
CURIE_DEFINE_ERROR(Overflow);
CURIE_DEFINE_ERROR(DimMismatch);
CURIE_DEFINE_ERROR(KeyMismatch);
CURIE_DEFINE_ERROR(DecodeError);

struct HEParams {
  unsigned key_bits = 2048;
  unsigned scale_bits = 20;  // S = 2^scale_bits

  double scale() const { return static_cast<double>(std::uint64_t{1} << scale_bits); }
};

// Worst case a session must survive without wrapping the plaintext modulus.
struct SessionBounds {
  double n_max = 0;  // total rows pooled
  double m_max = 0;  // design columns
  double v_max = 0;  // largest absolute design or target value
};

// Throws ParamError unless n_max * (S * v_max)^2 * m_max < 2^(key_bits - 2),
// which is below n / 2 for any key of that size.
void validate_params(const HEParams& params, const SessionBounds& bounds);

// Simulation-grade randomness: a seeded GMP Mersenne Twister.
class Random {
 public:
  explicit Random(std::uint64_t seed);
  Random(const Random&) = delete;
  Random& operator=(const Random&) = delete;

  // Uniform in [0, bound).
  mpz_class below(const mpz_class& bound);
  mpz_class bits(unsigned count);

 private:
  gmp_randclass state_;
};

// Fixed-base table for h^(n * alpha) mod n^2 with a short random alpha, so
// each encryption costs a few dozen multiplications instead of a full
// exponentiation by n.
class EncryptionTable;

class PublicKey {
 public:
  static constexpr unsigned kAlphaBits = 256;

  PublicKey() = default;
  explicit PublicKey(mpz_class n);

  const mpz_class& n() const { return n_; }
  const mpz_class& n_squared() const { return n2_; }
  unsigned bits() const { return static_cast<unsigned>(mpz_sizeinbase(n_.get_mpz_t(), 2)); }
  // Short stable identifier of the modulus.
  const std::string& id() const { return id_; }

  // Plaintext must lie in [0, n). Uses the fixed-base table.
  mpz_class encrypt(const mpz_class& m, Random& rng) const;
  // Textbook encryption with caller-supplied randomness r in [1, n).
  mpz_class encrypt_with(const mpz_class& m, const mpz_class& r) const;
  // Table encryption with a caller-supplied exponent of kAlphaBits bits.
  mpz_class encrypt_alpha(const mpz_class& m, const mpz_class& alpha) const;

  mpz_class add(const mpz_class& c1, const mpz_class& c2) const;

  bool operator==(const PublicKey& o) const { return n_ == o.n_; }

 private:
  mpz_class n_;
  mpz_class n2_;
  std::string id_;
  std::shared_ptr<const EncryptionTable> table_;
};

class SecretKey {
 public:
  SecretKey() = default;
  SecretKey(const mpz_class& p, const mpz_class& q);

  const mpz_class& n() const { return n_; }
  // Residue in [0, n), computed modulo p^2 and q^2 and recombined.
  mpz_class decrypt(const mpz_class& c) const;

 private:
  mpz_class n_;
  mpz_class p_, q_, p2_, q2_;
  mpz_class hp_, hq_;
  mpz_class q_inv_p_;
};

struct KeyPair {
  PublicKey pk;
  SecretKey sk;
  double keygen_seconds = 0.0;
};

// Throws ParamError for key sizes below 128 bits or odd sizes.
KeyPair keygen(const HEParams& params, Random& rng);

// Fixed point: k = round(x * S). Throws Overflow when |x * S| >= 2^62 or x
// is not finite.
std::int64_t encode_fixed(double x, double scale);
double decode_fixed(std::int64_t k, double scale);
double decode_fixed(const mpz_class& k, double scale);

// Signed integer <-> residue mod n; negatives live above n / 2.
mpz_class to_residue(const mpz_class& k, const mpz_class& n);
mpz_class from_residue(const mpz_class& r, const mpz_class& n);

// Element-wise ciphertexts of a fixed-point matrix, row-major.
struct CipherMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  unsigned scale_bits = 0;
  std::string key_id;
  std::vector<mpz_class> cells;
};

// Encrypts residues (already reduced mod n) with randomness drawn up front so
// the result does not depend on `threads`.
CipherMatrix encrypt_residues(const PublicKey& pk, std::size_t rows, std::size_t cols,
                              std::span<const mpz_class> residues, unsigned scale_bits,
                              Random& rng, unsigned threads = 1);
std::vector<mpz_class> decrypt_residues(const SecretKey& sk, const CipherMatrix& c,
                                        unsigned threads = 1);

// Overflow is raised before any ciphertext is produced.
std::vector<mpz_class> encode_matrix(const Eigen::MatrixXd& m, const PublicKey& pk,
                                     unsigned scale_bits);
Eigen::MatrixXd decode_matrix(std::span<const mpz_class> residues, std::size_t rows,
                              std::size_t cols, const mpz_class& n, unsigned scale_bits);

CipherMatrix encrypt_matrix(const PublicKey& pk, const Eigen::MatrixXd& m,
                            unsigned scale_bits, Random& rng, unsigned threads = 1);
Eigen::MatrixXd decrypt_matrix(const SecretKey& sk, const CipherMatrix& c,
                               unsigned threads = 1);

// Throws DimMismatch, KeyMismatch (different key or scale).
CipherMatrix add_cipher(const PublicKey& pk, const CipherMatrix& a, const CipherMatrix& b);

// 4-byte big-endian length followed by the big-endian magnitude.
void append_bigint(std::vector<std::uint8_t>& out, const mpz_class& v);
// Reads one value at `pos` and advances it. Throws DecodeError.
mpz_class read_bigint(std::span<const std::uint8_t> in, std::size_t& pos);

std::vector<std::uint8_t> serialize(const CipherMatrix& c);
CipherMatrix deserialize_cipher(std::span<const std::uint8_t> bytes);

}  // namespace curie::crypto

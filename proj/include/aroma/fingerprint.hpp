#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aroma/error.hpp"
#include "aroma/smiles.hpp"

namespace aroma {

class FingerprintError : public Error {
 public:
  using Error::Error;
};

struct BitFingerprint {
  std::vector<uint64_t> blocks;
  uint32_t nbits = 0;
  uint32_t radius = 0;

  bool test(uint32_t bit) const {
    return (blocks[bit >> 6] >> (bit & 63)) & 1ULL;
  }
  void set(uint32_t bit) { blocks[bit >> 6] |= 1ULL << (bit & 63); }
  uint32_t popcount() const;
  bool operator==(const BitFingerprint& o) const = default;
};

// Circular substructure fingerprint. Per-atom invariants start from a
// 64-bit mix of (element, degree, charge, implicit-H, aromatic, in-ring);
// each round rehashes an atom's invariant with the sorted list of
// (bond-order, neighbor invariant) pairs. Atoms with no neighbors keep
// their invariant, so an isolated atom contributes one identifier total.
// Identifiers collected over rounds 0..radius are deduplicated by value
// (first radius of appearance wins) and folded as value mod nbits.
// The mixing function is fixed here; no bit compatibility with external
// toolkits is promised.
BitFingerprint morgan_fingerprint(const Molecule& mol, uint32_t radius = 4,
                                  uint32_t nbits = 2048);

// Identifier set before folding: (first radius of appearance, value),
// sorted. Exposed for the folding oracle and the radius-monotonicity check.
std::vector<std::pair<uint32_t, uint64_t>> morgan_identifiers(
    const Molecule& mol, uint32_t radius);

// fp1 keeps [0, nbits), fp2 shifts into [nbits, 2*nbits).
BitFingerprint concat_pair(const BitFingerprint& fp1, const BitFingerprint& fp2);

// Binary cache: header {magic, nbits, radius, count}, then per record
// {smiles hash (64-bit mix of the source bytes), fingerprint blocks}.
struct FingerprintCache {
  uint32_t nbits = 0;
  uint32_t radius = 0;
  std::vector<std::pair<uint64_t, BitFingerprint>> records;

  void save(const std::string& path) const;
  static FingerprintCache load(const std::string& path);
};

uint64_t smiles_hash(const std::string& smiles);

}  // namespace aroma

#include "aroma/fingerprint.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <map>

#include "aroma/featurize.hpp"
#include "aroma/rng.hpp"

namespace aroma {

namespace {

constexpr uint64_t kAtomSeed = 0x9E3779B97F4A7C15ULL;

uint64_t initial_invariant(const Molecule& mol, size_t i, int degree,
                           bool in_ring) {
  const Atom& a = mol.atoms[i];
  uint64_t h = kAtomSeed;
  h = hash_combine(h, static_cast<uint64_t>(a.element));
  h = hash_combine(h, static_cast<uint64_t>(degree));
  h = hash_combine(h, static_cast<uint64_t>(a.formal_charge + 16));
  h = hash_combine(h, static_cast<uint64_t>(implicit_hydrogens(mol, i)));
  h = hash_combine(h, a.aromatic ? 1 : 0);
  h = hash_combine(h, in_ring ? 1 : 0);
  return h;
}

uint64_t bond_code(BondOrder order) {
  switch (order) {
    case BondOrder::Single: return 1;
    case BondOrder::Double: return 2;
    case BondOrder::Triple: return 3;
    case BondOrder::Aromatic: return 4;
  }
  return 0;
}

}  // namespace

uint32_t BitFingerprint::popcount() const {
  uint32_t n = 0;
  for (uint64_t b : blocks) n += static_cast<uint32_t>(std::popcount(b));
  return n;
}

std::vector<std::pair<uint32_t, uint64_t>> morgan_identifiers(
    const Molecule& mol, uint32_t radius) {
  const size_t n = mol.atoms.size();
  std::vector<int> degree(n, 0);
  std::vector<std::vector<std::pair<uint64_t, uint32_t>>> nbrs(n);  // (code, atom)
  for (const Bond& b : mol.bonds) {
    ++degree[b.a];
    ++degree[b.b];
    nbrs[b.a].push_back({bond_code(b.order), b.b});
    nbrs[b.b].push_back({bond_code(b.order), b.a});
  }
  const std::vector<bool> in_ring = ring_atoms(mol);

  std::vector<uint64_t> inv(n);
  for (size_t i = 0; i < n; ++i)
    inv[i] = initial_invariant(mol, i, degree[i], in_ring[i]);

  // value -> first radius of appearance
  std::map<uint64_t, uint32_t> seen;
  for (size_t i = 0; i < n; ++i) seen.try_emplace(inv[i], 0);

  std::vector<uint64_t> next(n);
  for (uint32_t r = 1; r <= radius; ++r) {
    for (size_t i = 0; i < n; ++i) {
      if (nbrs[i].empty()) {
        next[i] = inv[i];
        continue;
      }
      std::vector<std::pair<uint64_t, uint64_t>> env;
      env.reserve(nbrs[i].size());
      for (auto [code, j] : nbrs[i]) env.push_back({code, inv[j]});
      std::sort(env.begin(), env.end());
      uint64_t h = hash_combine(kAtomSeed, inv[i]);
      for (auto [code, v] : env) h = hash_combine(hash_combine(h, code), v);
      next[i] = h;
    }
    inv = next;
    for (size_t i = 0; i < n; ++i) seen.try_emplace(inv[i], r);
  }

  std::vector<std::pair<uint32_t, uint64_t>> out;
  out.reserve(seen.size());
  for (auto [value, first_radius] : seen) out.push_back({first_radius, value});
  std::sort(out.begin(), out.end());
  return out;
}

BitFingerprint morgan_fingerprint(const Molecule& mol, uint32_t radius,
                                  uint32_t nbits) {
  if (nbits < 64 || (nbits & (nbits - 1)) != 0)
    throw FingerprintError("nbits must be a power of two >= 64");
  BitFingerprint fp;
  fp.nbits = nbits;
  fp.radius = radius;
  fp.blocks.assign(nbits / 64, 0);
  for (auto [first_radius, value] : morgan_identifiers(mol, radius))
    fp.set(static_cast<uint32_t>(value % nbits));
  return fp;
}

BitFingerprint concat_pair(const BitFingerprint& fp1, const BitFingerprint& fp2) {
  if (fp1.nbits != fp2.nbits)
    throw FingerprintError("concat_pair: width mismatch");
  BitFingerprint out;
  out.nbits = fp1.nbits * 2;
  out.radius = fp1.radius;
  out.blocks = fp1.blocks;
  out.blocks.insert(out.blocks.end(), fp2.blocks.begin(), fp2.blocks.end());
  return out;
}

uint64_t smiles_hash(const std::string& smiles) {
  uint64_t h = kAtomSeed;
  for (unsigned char c : smiles) h = hash_combine(h, c);
  return h;
}

namespace {
constexpr uint32_t kCacheMagic = 0x41465031;  // "AFP1"
}

void FingerprintCache::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  auto put32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto put64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  put32(kCacheMagic);
  put32(nbits);
  put32(radius);
  put32(static_cast<uint32_t>(records.size()));
  for (const auto& [hash, fp] : records) {
    put64(hash);
    for (uint64_t b : fp.blocks) put64(b);
  }
}

FingerprintCache FingerprintCache::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  auto get32 = [&] {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto get64 = [&] {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  FingerprintCache cache;
  if (get32() != kCacheMagic) throw IoError("bad fingerprint cache magic");
  cache.nbits = get32();
  cache.radius = get32();
  const uint32_t count = get32();
  cache.records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint64_t hash = get64();
    BitFingerprint fp;
    fp.nbits = cache.nbits;
    fp.radius = cache.radius;
    fp.blocks.resize(cache.nbits / 64);
    for (auto& b : fp.blocks) b = get64();
    cache.records.push_back({hash, std::move(fp)});
  }
  if (!in) throw IoError("truncated fingerprint cache: " + path);
  return cache;
}

}  // namespace aroma

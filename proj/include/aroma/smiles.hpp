#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "aroma/error.hpp"

namespace aroma {

enum class BondOrder : uint8_t { Single, Double, Triple, Aromatic };

struct Atom {
  int element = 0;  // atomic number, 1..118
  bool aromatic = false;
  int formal_charge = 0;
  std::optional<int> explicit_h;
  std::optional<int> isotope;
};

struct Bond {
  uint32_t a = 0;
  uint32_t b = 0;
  BondOrder order = BondOrder::Single;
};

struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::string source;
  // Stereo markers (/ \ @ @@) are accepted but carry no semantics here;
  // each occurrence bumps this counter.
  int stereo_warnings = 0;

  std::vector<std::vector<uint32_t>> adjacency() const;
};

enum class SmilesErrorKind {
  EmptyInput,
  UnknownElement,
  MalformedBracketAtom,
  UnbalancedBranch,
  UnclosedRing,
  RingBondConflict,
  DanglingBond,
};

class SmilesError : public Error {
 public:
  SmilesError(SmilesErrorKind kind, size_t position, const std::string& what);
  SmilesErrorKind kind() const { return kind_; }
  size_t position() const { return position_; }  // byte offset, 0-based

 private:
  SmilesErrorKind kind_;
  size_t position_;
};

const char* to_string(SmilesErrorKind kind);

// Parses the supported SMILES subset: organic-subset atoms (B C N O P S F
// Cl Br I), aromatic lowercase (b c n o p s), bracket atoms with isotope /
// charge / H-count over the full periodic table, bond symbols - = # :,
// branches, and ring closures including %nn. Stereo markers are counted and
// dropped. Throws SmilesError with a byte position on malformed input.
Molecule parse_smiles(std::string_view text);

// Implicit hydrogen count for one atom. Uses the fixed default-valence
// table below; aromatic bonds count 1.5 and the remainder is rounded down.
// An explicit bracket H-count always wins. Elements outside the table get 0.
//
//   B 3, C 4, N 3, O 2, P 3, S 2, F 1, Cl 1, Br 1, I 1
//
// Charge adjustment: +charge adds bond capacity for N, O, P, S cations;
// every other charged atom loses |charge| capacity.
int implicit_hydrogens(const Molecule& mol, size_t atom_index);

// Atomic number for a symbol ("C", "Cl", ...), or 0 if unknown.
int element_number(std::string_view symbol);

}  // namespace aroma

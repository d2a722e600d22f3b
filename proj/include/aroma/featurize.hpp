#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "aroma/error.hpp"
#include "aroma/smiles.hpp"

#include "json.hpp"

namespace aroma {

// Numeric graph over one molecule, or the disjoint union of two.
// node_features is row-major [n_nodes x kAtomFeatureWidth]; every
// undirected bond appears as two directed edges (a->b then b->a).
struct MolGraph {
  int64_t n_nodes = 0;
  std::vector<double> node_features;
  std::vector<std::array<int32_t, 2>> edge_index;  // (src, dst)
  std::vector<double> edge_features;               // [n_edges x kBondFeatureWidth]
  std::vector<int8_t> component_ids;               // 0 or 1 per node

  int64_t n_edges() const { return static_cast<int64_t>(edge_index.size()); }
};

// Node feature blocks, in order:
//   element one-hot over {B,C,N,O,P,S,F,Cl,Br,I} + other   11
//   degree one-hot 0..6                                     7
//   formal charge one-hot -2..+2 (clamped)                  5
//   implicit-H count one-hot 0..4 (clamped)                 5
//   aromatic flag                                           1
//   in-ring flag                                            1
inline constexpr int kAtomFeatureWidth = 30;

// Edge feature blocks: bond-order one-hot {single,double,triple,aromatic} 4,
// in-ring flag 1.
inline constexpr int kBondFeatureWidth = 5;

class FeaturizeError : public Error {
 public:
  using Error::Error;
};

MolGraph featurize(const Molecule& mol);

// Disjoint union. g2's node indices are offset by g1's node count and its
// nodes are tagged component 1. No edges cross components.
MolGraph pair_graph(const MolGraph& g1, const MolGraph& g2);

// Machine-readable layout description: block name, offset, width.
nlohmann::json feature_schema();
void write_feature_schema(const std::string& path);

// Per-bond ring membership: a bond is in a ring iff it lies on some cycle
// (equivalently, it is not a bridge). An atom is in a ring iff one of its
// bonds is.
std::vector<bool> ring_bonds(const Molecule& mol);
std::vector<bool> ring_atoms(const Molecule& mol);

}  // namespace aroma

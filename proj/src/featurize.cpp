#include "aroma/featurize.hpp"

#include <algorithm>
#include <fstream>
#include <functional>

namespace aroma {

namespace {

// Supported-element channel order; anything else lands in "other".
constexpr std::array<int, 10> kElementChannels = {5, 6, 7, 8, 15, 16, 9, 17, 35, 53};

int element_channel(int element) {
  for (size_t i = 0; i < kElementChannels.size(); ++i)
    if (kElementChannels[i] == element) return static_cast<int>(i);
  return static_cast<int>(kElementChannels.size());  // other
}

int clamp_int(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

}  // namespace

std::vector<bool> ring_bonds(const Molecule& mol) {
  const size_t n = mol.atoms.size();
  const size_t m = mol.bonds.size();
  // Tarjan bridge finding; ring bonds are the non-bridges.
  std::vector<std::vector<std::pair<uint32_t, uint32_t>>> adj(n);  // (nbr, bond)
  for (uint32_t k = 0; k < m; ++k) {
    adj[mol.bonds[k].a].push_back({mol.bonds[k].b, k});
    adj[mol.bonds[k].b].push_back({mol.bonds[k].a, k});
  }
  std::vector<bool> bridge(m, false);
  std::vector<int> tin(n, -1), low(n, 0);
  int timer = 0;
  std::function<void(uint32_t, int)> dfs = [&](uint32_t v, int parent_edge) {
    tin[v] = low[v] = timer++;
    for (auto [to, eid] : adj[v]) {
      if (static_cast<int>(eid) == parent_edge) continue;
      if (tin[to] != -1) {
        low[v] = std::min(low[v], tin[to]);
      } else {
        dfs(to, static_cast<int>(eid));
        low[v] = std::min(low[v], low[to]);
        if (low[to] > tin[v]) bridge[eid] = true;
      }
    }
  };
  for (uint32_t v = 0; v < n; ++v)
    if (tin[v] == -1) dfs(v, -1);

  std::vector<bool> in_ring(m);
  for (size_t k = 0; k < m; ++k) in_ring[k] = !bridge[k];
  return in_ring;
}

std::vector<bool> ring_atoms(const Molecule& mol) {
  std::vector<bool> atom_ring(mol.atoms.size(), false);
  const std::vector<bool> bond_ring = ring_bonds(mol);
  for (size_t k = 0; k < mol.bonds.size(); ++k) {
    if (bond_ring[k]) {
      atom_ring[mol.bonds[k].a] = true;
      atom_ring[mol.bonds[k].b] = true;
    }
  }
  return atom_ring;
}

MolGraph featurize(const Molecule& mol) {
  if (mol.atoms.empty()) throw FeaturizeError("molecule has no atoms");
  const int64_t n = static_cast<int64_t>(mol.atoms.size());

  std::vector<int> degree(n, 0);
  for (const Bond& b : mol.bonds) {
    ++degree[b.a];
    ++degree[b.b];
  }
  const std::vector<bool> atom_ring = ring_atoms(mol);
  const std::vector<bool> bond_ring = ring_bonds(mol);

  MolGraph g;
  g.n_nodes = n;
  g.node_features.assign(n * kAtomFeatureWidth, 0.0);
  g.component_ids.assign(n, 0);

  for (int64_t i = 0; i < n; ++i) {
    const Atom& a = mol.atoms[i];
    double* row = g.node_features.data() + i * kAtomFeatureWidth;
    row[element_channel(a.element)] = 1.0;
    row[11 + clamp_int(degree[i], 0, 6)] = 1.0;
    row[18 + clamp_int(a.formal_charge, -2, 2) + 2] = 1.0;
    row[23 + clamp_int(implicit_hydrogens(mol, i), 0, 4)] = 1.0;
    row[28] = a.aromatic ? 1.0 : 0.0;
    row[29] = atom_ring[i] ? 1.0 : 0.0;
  }

  g.edge_index.reserve(mol.bonds.size() * 2);
  g.edge_features.reserve(mol.bonds.size() * 2 * kBondFeatureWidth);
  for (size_t k = 0; k < mol.bonds.size(); ++k) {
    const Bond& b = mol.bonds[k];
    std::array<double, kBondFeatureWidth> feat{};
    feat[static_cast<int>(b.order)] = 1.0;
    feat[4] = bond_ring[k] ? 1.0 : 0.0;
    g.edge_index.push_back({static_cast<int32_t>(b.a), static_cast<int32_t>(b.b)});
    g.edge_index.push_back({static_cast<int32_t>(b.b), static_cast<int32_t>(b.a)});
    for (int rep = 0; rep < 2; ++rep)
      g.edge_features.insert(g.edge_features.end(), feat.begin(), feat.end());
  }
  return g;
}

MolGraph pair_graph(const MolGraph& g1, const MolGraph& g2) {
  if (g1.n_nodes == 0 || g2.n_nodes == 0)
    throw FeaturizeError("pair_graph: empty component");
  for (const MolGraph* g : {&g1, &g2}) {
    if (g->node_features.size() !=
            static_cast<size_t>(g->n_nodes) * kAtomFeatureWidth ||
        g->edge_features.size() !=
            static_cast<size_t>(g->n_edges()) * kBondFeatureWidth)
      throw FeaturizeError("pair_graph: feature width mismatch");
  }

  MolGraph g;
  g.n_nodes = g1.n_nodes + g2.n_nodes;
  g.node_features = g1.node_features;
  g.node_features.insert(g.node_features.end(), g2.node_features.begin(),
                         g2.node_features.end());
  g.edge_index = g1.edge_index;
  const int32_t offset = static_cast<int32_t>(g1.n_nodes);
  for (const auto& e : g2.edge_index)
    g.edge_index.push_back({e[0] + offset, e[1] + offset});
  g.edge_features = g1.edge_features;
  g.edge_features.insert(g.edge_features.end(), g2.edge_features.begin(),
                         g2.edge_features.end());
  g.component_ids.assign(g.n_nodes, 0);
  std::fill(g.component_ids.begin() + g1.n_nodes, g.component_ids.end(), 1);
  return g;
}

nlohmann::json feature_schema() {
  nlohmann::json atom_blocks = nlohmann::json::array();
  auto block = [](const char* name, int offset, int width) {
    return nlohmann::json{{"name", name}, {"offset", offset}, {"width", width}};
  };
  atom_blocks.push_back(block("element", 0, 11));
  atom_blocks.push_back(block("degree", 11, 7));
  atom_blocks.push_back(block("formal_charge", 18, 5));
  atom_blocks.push_back(block("implicit_h", 23, 5));
  atom_blocks.push_back(block("aromatic", 28, 1));
  atom_blocks.push_back(block("in_ring", 29, 1));

  nlohmann::json bond_blocks = nlohmann::json::array();
  bond_blocks.push_back(block("bond_order", 0, 4));
  bond_blocks.push_back(block("in_ring", 4, 1));

  return nlohmann::json{{"atom_width", kAtomFeatureWidth},
                        {"bond_width", kBondFeatureWidth},
                        {"atom_blocks", atom_blocks},
                        {"bond_blocks", bond_blocks}};
}

void write_feature_schema(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << feature_schema().dump(2) << "\n";
}

}  // namespace aroma

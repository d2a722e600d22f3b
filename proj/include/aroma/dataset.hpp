#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aroma/error.hpp"
#include "aroma/labels.hpp"
#include "aroma/smiles.hpp"

#include "json.hpp"

namespace aroma {

class DatasetError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DatasetError {
 public:
  FormatError(const std::string& what, size_t line)
      : DatasetError(what + " (line " + std::to_string(line) + ")"),
        line_(line) {}
  size_t line() const { return line_; }

 private:
  size_t line_;
};

struct PairEdge {
  uint32_t u = 0;
  uint32_t v = 0;  // u < v
  LabelSet labels;
};

// Graph whose nodes are molecules and whose edges are labeled blends.
// Nodes are keyed by SMILES text; duplicate unordered pairs are merged by
// label union.
struct MetaGraph {
  std::vector<std::string> smiles;      // node id -> source text
  std::vector<Molecule> molecules;      // parsed, same order
  std::vector<PairEdge> edges;
  LabelVocab vocab;

  size_t n_nodes() const { return smiles.size(); }
  size_t n_edges() const { return edges.size(); }
  // Labels carried by at least one edge.
  LabelSet edge_label_set() const;

  void save(const std::string& path) const;
  static MetaGraph load(const std::string& path);
};

struct MonoRecord {
  std::string smiles;
  LabelSet labels;
};

struct IngestReport {
  size_t read = 0;
  size_t kept = 0;
  size_t dropped_parse = 0;
  size_t dropped_empty_labels = 0;
  size_t dropped_self_pair = 0;
  size_t merged_duplicates = 0;

  nlohmann::json to_json() const;
};

// Lowercases and trims, then applies the fixed substitution table
// (anisic -> anise, "medicinal," -> medicinal, corn chip -> corn).
// Returns nullopt for the no-label sentinel, which removes the entry.
// Unknown labels pass through unchanged.
std::optional<std::string> canonicalize_label(const std::string& raw);

// JSONL, one object per line: {"smiles_a": str, "smiles_b": str,
// "labels": [str, ...]}. Records with unparseable SMILES or no labels
// after cleaning are dropped and counted. When `vocab` is supplied its
// indices are reused and extended.
std::pair<MetaGraph, IngestReport> load_pairs(
    const std::string& path, const LabelVocab* vocab = nullptr);

// JSONL: {"smiles": str, "labels": [str, ...]}.
std::pair<std::vector<MonoRecord>, IngestReport> load_mono(
    const std::string& path, LabelVocab& vocab);

struct JaccardReport {
  double j_union = 0.0;         // mean J(La ∪ Lb, Lpair)
  double j_intersection = 0.0;  // mean J(La ∩ Lb, Lpair)
  size_t pairs_used = 0;
  size_t pairs_skipped = 0;  // constituents without mono labels
};

// Throws DatasetError when no pair has both constituents labeled.
JaccardReport jaccard_blend_analysis(const MetaGraph& mg,
                                     const std::vector<MonoRecord>& mono);

struct DependentNote {
  std::string dependent;
  std::string parent;
  size_t frequency = 0;  // occurrence count of the dependent note
};

// d depends on p when every record containing d also contains p (d != p,
// d occurring at least once). Multiple parents yield multiple rows; mutual
// dependence is possible and reported as two rows.
std::vector<DependentNote> dependent_notes(
    const std::vector<LabelSet>& records, const LabelVocab& vocab);

struct IsolateNote {
  std::string note;
  size_t frequency = 0;
};

// Notes that never co-occur with any other note.
std::vector<IsolateNote> isolate_notes(const std::vector<LabelSet>& records,
                                       const LabelVocab& vocab);

void save_vocab(const LabelVocab& vocab, const std::string& path);
LabelVocab load_vocab(const std::string& path);

}  // namespace aroma

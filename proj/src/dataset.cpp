#include "aroma/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <unordered_map>

namespace aroma {

namespace {

std::string trim_lower(const std::string& raw) {
  size_t b = 0, e = raw.size();
  while (b < e && std::isspace(static_cast<unsigned char>(raw[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(raw[e - 1]))) --e;
  std::string s = raw.substr(b, e - b);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

}  // namespace

std::optional<std::string> canonicalize_label(const std::string& raw) {
  std::string s = trim_lower(raw);
  if (s == "no odor group found for these") return std::nullopt;
  if (s == "anisic") return "anise";
  if (s == "medicinal,") return "medicinal";
  if (s == "corn chip") return "corn";
  if (s.empty()) return std::nullopt;
  return s;
}

LabelSet MetaGraph::edge_label_set() const {
  LabelSet all;
  for (const PairEdge& e : edges)
    for (uint32_t id : e.labels) all.add(id);
  return all;
}

namespace {

// Shared scaffolding for streaming JSONL ingest.
class JsonlReader {
 public:
  explicit JsonlReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw IoError("cannot open " + path);
  }

  // Returns false at EOF; throws FormatError on bad JSON.
  bool next(nlohmann::json& obj) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
      if (parsed.is_discarded())
        throw FormatError("invalid JSON in " + path_, line_no_);
      obj = std::move(parsed);
      return true;
    }
    return false;
  }

  size_t line_no() const { return line_no_; }

 private:
  std::ifstream in_;
  std::string path_;
  size_t line_no_ = 0;
};

LabelSet clean_labels(const nlohmann::json& arr, LabelVocab& vocab,
                      size_t line_no) {
  if (!arr.is_array()) throw FormatError("\"labels\" must be an array", line_no);
  LabelSet set;
  for (const auto& item : arr) {
    if (!item.is_string())
      throw FormatError("label entries must be strings", line_no);
    auto canon = canonicalize_label(item.get<std::string>());
    if (canon) set.add(vocab.add(*canon));
  }
  return set;
}

std::string require_string(const nlohmann::json& obj, const char* key,
                           size_t line_no) {
  if (!obj.contains(key) || !obj[key].is_string())
    throw FormatError(std::string("missing string field \"") + key + "\"",
                      line_no);
  return obj[key].get<std::string>();
}

}  // namespace

std::pair<MetaGraph, IngestReport> load_pairs(const std::string& path,
                                              const LabelVocab* vocab) {
  MetaGraph mg;
  if (vocab) mg.vocab = *vocab;
  IngestReport report;

  std::unordered_map<std::string, uint32_t> node_of;
  std::map<std::pair<uint32_t, uint32_t>, size_t> edge_of;

  auto intern_node = [&](const std::string& smiles) -> std::optional<uint32_t> {
    auto it = node_of.find(smiles);
    if (it != node_of.end()) return it->second;
    Molecule mol;
    try {
      mol = parse_smiles(smiles);
    } catch (const SmilesError&) {
      return std::nullopt;
    }
    const uint32_t id = static_cast<uint32_t>(mg.smiles.size());
    mg.smiles.push_back(smiles);
    mg.molecules.push_back(std::move(mol));
    node_of.emplace(smiles, id);
    return id;
  };

  JsonlReader reader(path);
  nlohmann::json obj;
  while (reader.next(obj)) {
    ++report.read;
    const std::string sa = require_string(obj, "smiles_a", reader.line_no());
    const std::string sb = require_string(obj, "smiles_b", reader.line_no());
    if (!obj.contains("labels"))
      throw FormatError("missing \"labels\"", reader.line_no());
    LabelSet labels = clean_labels(obj["labels"], mg.vocab, reader.line_no());
    if (labels.empty()) {
      ++report.dropped_empty_labels;
      continue;
    }
    if (sa == sb) {
      ++report.dropped_self_pair;
      continue;
    }
    auto a = intern_node(sa);
    auto b = intern_node(sb);
    if (!a || !b) {
      ++report.dropped_parse;
      continue;
    }
    uint32_t u = *a, v = *b;
    if (u > v) std::swap(u, v);
    auto [it, inserted] = edge_of.try_emplace({u, v}, mg.edges.size());
    if (inserted) {
      mg.edges.push_back(PairEdge{u, v, std::move(labels)});
      ++report.kept;
    } else {
      mg.edges[it->second].labels =
          set_union(mg.edges[it->second].labels, labels);
      ++report.merged_duplicates;
    }
  }
  return {std::move(mg), report};
}

std::pair<std::vector<MonoRecord>, IngestReport> load_mono(
    const std::string& path, LabelVocab& vocab) {
  std::vector<MonoRecord> records;
  IngestReport report;
  JsonlReader reader(path);
  nlohmann::json obj;
  while (reader.next(obj)) {
    ++report.read;
    const std::string smiles = require_string(obj, "smiles", reader.line_no());
    if (!obj.contains("labels"))
      throw FormatError("missing \"labels\"", reader.line_no());
    LabelSet labels = clean_labels(obj["labels"], vocab, reader.line_no());
    if (labels.empty()) {
      ++report.dropped_empty_labels;
      continue;
    }
    try {
      parse_smiles(smiles);
    } catch (const SmilesError&) {
      ++report.dropped_parse;
      continue;
    }
    records.push_back(MonoRecord{smiles, std::move(labels)});
    ++report.kept;
  }
  return {std::move(records), report};
}

JaccardReport jaccard_blend_analysis(const MetaGraph& mg,
                                     const std::vector<MonoRecord>& mono) {
  std::unordered_map<std::string, const LabelSet*> mono_of;
  for (const MonoRecord& r : mono) mono_of.emplace(r.smiles, &r.labels);

  JaccardReport report;
  double sum_union = 0.0, sum_inter = 0.0;
  for (const PairEdge& e : mg.edges) {
    auto a = mono_of.find(mg.smiles[e.u]);
    auto b = mono_of.find(mg.smiles[e.v]);
    if (a == mono_of.end() || b == mono_of.end()) {
      ++report.pairs_skipped;
      continue;
    }
    sum_union += jaccard(set_union(*a->second, *b->second), e.labels);
    sum_inter += jaccard(set_intersection(*a->second, *b->second), e.labels);
    ++report.pairs_used;
  }
  if (report.pairs_used == 0)
    throw DatasetError("no pair had both constituents labeled");
  report.j_union = sum_union / static_cast<double>(report.pairs_used);
  report.j_intersection = sum_inter / static_cast<double>(report.pairs_used);
  return report;
}

std::vector<DependentNote> dependent_notes(const std::vector<LabelSet>& records,
                                           const LabelVocab& vocab) {
  const size_t L = vocab.size();
  std::vector<size_t> count(L, 0);
  // co[d][p] = number of records containing both d and p
  std::vector<std::unordered_map<uint32_t, size_t>> co(L);
  for (const LabelSet& rec : records) {
    for (uint32_t d : rec) {
      ++count[d];
      for (uint32_t p : rec)
        if (p != d) ++co[d][p];
    }
  }
  std::vector<DependentNote> out;
  for (uint32_t d = 0; d < L; ++d) {
    if (count[d] == 0) continue;
    for (const auto& [p, c] : co[d]) {
      if (c == count[d])
        out.push_back({vocab.name(d), vocab.name(p), count[d]});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    if (a.dependent != b.dependent) return a.dependent < b.dependent;
    return a.parent < b.parent;
  });
  return out;
}

std::vector<IsolateNote> isolate_notes(const std::vector<LabelSet>& records,
                                       const LabelVocab& vocab) {
  const size_t L = vocab.size();
  std::vector<size_t> count(L, 0);
  std::vector<bool> co_occurs(L, false);
  for (const LabelSet& rec : records) {
    for (uint32_t id : rec) {
      ++count[id];
      if (rec.size() > 1) co_occurs[id] = true;
    }
  }
  std::vector<IsolateNote> out;
  for (uint32_t id = 0; id < L; ++id)
    if (count[id] > 0 && !co_occurs[id]) out.push_back({vocab.name(id), count[id]});
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.note < b.note;
  });
  return out;
}

nlohmann::json IngestReport::to_json() const {
  return nlohmann::json{{"read", read},
                        {"kept", kept},
                        {"dropped_parse", dropped_parse},
                        {"dropped_empty_labels", dropped_empty_labels},
                        {"dropped_self_pair", dropped_self_pair},
                        {"merged_duplicates", merged_duplicates}};
}

void save_vocab(const LabelVocab& vocab, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const std::string& note : vocab.notes()) out << note << "\n";
}

LabelVocab load_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  LabelVocab vocab;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) vocab.add(line);
  }
  return vocab;
}

namespace {
constexpr uint32_t kMetaGraphMagic = 0x414D4731;  // "AMG1"

void put32(std::ofstream& out, uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}
uint32_t get32(std::ifstream& in) {
  uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
void put_string(std::ofstream& out, const std::string& s) {
  put32(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_string(std::ifstream& in) {
  const uint32_t len = get32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}
}  // namespace

void MetaGraph::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  put32(out, kMetaGraphMagic);
  put32(out, 1);  // version
  put32(out, static_cast<uint32_t>(smiles.size()));
  for (const std::string& s : smiles) put_string(out, s);
  put32(out, static_cast<uint32_t>(vocab.size()));
  for (const std::string& note : vocab.notes()) put_string(out, note);
  put32(out, static_cast<uint32_t>(edges.size()));
  for (const PairEdge& e : edges) {
    put32(out, e.u);
    put32(out, e.v);
    put32(out, static_cast<uint32_t>(e.labels.size()));
    for (uint32_t id : e.labels) put32(out, id);
  }
}

MetaGraph MetaGraph::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  if (get32(in) != kMetaGraphMagic) throw IoError("bad meta-graph magic");
  if (get32(in) != 1) throw IoError("unsupported meta-graph version");
  MetaGraph mg;
  const uint32_t n_nodes = get32(in);
  mg.smiles.reserve(n_nodes);
  mg.molecules.reserve(n_nodes);
  for (uint32_t i = 0; i < n_nodes; ++i) {
    mg.smiles.push_back(get_string(in));
    mg.molecules.push_back(parse_smiles(mg.smiles.back()));
  }
  const uint32_t n_labels = get32(in);
  for (uint32_t i = 0; i < n_labels; ++i) mg.vocab.add(get_string(in));
  const uint32_t n_edges = get32(in);
  mg.edges.reserve(n_edges);
  for (uint32_t i = 0; i < n_edges; ++i) {
    PairEdge e;
    e.u = get32(in);
    e.v = get32(in);
    const uint32_t n = get32(in);
    std::vector<uint32_t> ids(n);
    for (uint32_t k = 0; k < n; ++k) ids[k] = get32(in);
    e.labels = LabelSet(std::move(ids));
    mg.edges.push_back(std::move(e));
  }
  if (!in) throw IoError("truncated meta-graph file: " + path);
  return mg;
}

}  // namespace aroma

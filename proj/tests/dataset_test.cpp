#include "aroma/dataset.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "testutil.hpp"

namespace aroma {
namespace {

class TempFile {
 public:
  explicit TempFile(const std::string& contents) {
    static int counter = 0;
    path_ = (std::filesystem::temp_directory_path() /
             ("aroma_ds_" + std::to_string(counter++) + ".jsonl"))
                .string();
    std::ofstream out(path_);
    out << contents;
  }
  ~TempFile() { std::filesystem::remove(path_); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

TEST(CanonicalizeLabel, SubstitutionTable) {
  EXPECT_EQ(canonicalize_label("anisic"), "anise");
  EXPECT_EQ(canonicalize_label("fruity"), "fruity");
  EXPECT_EQ(canonicalize_label("corn chip"), "corn");
  EXPECT_EQ(canonicalize_label("medicinal,"), "medicinal");
  EXPECT_EQ(canonicalize_label("  Fruity "), "fruity");
  EXPECT_EQ(canonicalize_label("ANISIC"), "anise");
  EXPECT_EQ(canonicalize_label("No odor group found for these"), std::nullopt);
  EXPECT_EQ(canonicalize_label(""), std::nullopt);
  EXPECT_EQ(canonicalize_label("entirely new note"), "entirely new note");
}

TEST(LoadPairs, BasicCountsAndGraph) {
  TempFile file(
      R"({"smiles_a": "CCO", "smiles_b": "c1ccccc1", "labels": ["fruity", "sweet"]})"
      "\n"
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["green"]})"
      "\n"
      R"({"smiles_a": "CC", "smiles_b": "c1ccccc1", "labels": ["sweet"]})"
      "\n");
  auto [mg, report] = load_pairs(file.path());
  EXPECT_EQ(report.read, 3u);
  EXPECT_EQ(report.kept, 3u);
  EXPECT_EQ(mg.n_nodes(), 3u);
  EXPECT_EQ(mg.n_edges(), 3u);
  EXPECT_EQ(mg.vocab.size(), 3u);
}

TEST(LoadPairs, DropsUnparseableSmiles) {
  TempFile file(
      R"({"smiles_a": "C1CC", "smiles_b": "CC", "labels": ["fruity"]})"
      "\n"
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["fruity"]})"
      "\n");
  auto [mg, report] = load_pairs(file.path());
  EXPECT_EQ(report.read, 2u);
  EXPECT_EQ(report.kept, 1u);
  EXPECT_EQ(report.dropped_parse, 1u);
}

TEST(LoadPairs, DropsEmptyAfterCleaning) {
  TempFile file(
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["No odor group found for these"]})"
      "\n"
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": []})"
      "\n"
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["musk"]})"
      "\n");
  auto [mg, report] = load_pairs(file.path());
  EXPECT_EQ(report.dropped_empty_labels, 2u);
  EXPECT_EQ(report.kept, 1u);
  EXPECT_EQ(mg.n_edges(), 1u);
}

TEST(LoadPairs, MergesDuplicateUnorderedPairs) {
  TempFile file(
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["fruity"]})"
      "\n"
      R"({"smiles_a": "CC", "smiles_b": "CCO", "labels": ["sweet"]})"
      "\n");
  auto [mg, report] = load_pairs(file.path());
  EXPECT_EQ(report.merged_duplicates, 1u);
  ASSERT_EQ(mg.n_edges(), 1u);
  EXPECT_EQ(mg.edges[0].labels.size(), 2u);  // union of fruity, sweet
}

TEST(LoadPairs, DropsSelfPairs) {
  TempFile file(
      R"({"smiles_a": "CCO", "smiles_b": "CCO", "labels": ["fruity"]})"
      "\n");
  auto [mg, report] = load_pairs(file.path());
  EXPECT_EQ(report.dropped_self_pair, 1u);
  EXPECT_EQ(mg.n_edges(), 0u);
}

TEST(LoadPairs, FormatErrorCarriesLine) {
  TempFile file(
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["a"]})"
      "\n"
      "this is not json\n");
  try {
    load_pairs(file.path());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(load_pairs("/nonexistent/path.jsonl"), IoError);
}

TEST(LoadPairs, IngestIsIdempotent) {
  TempFile file(
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["fruity", "musk"]})"
      "\n"
      R"({"smiles_a": "CCC", "smiles_b": "CC", "labels": ["green"]})"
      "\n");
  auto [mg1, r1] = load_pairs(file.path());
  auto [mg2, r2] = load_pairs(file.path());
  EXPECT_EQ(mg1.smiles, mg2.smiles);
  EXPECT_EQ(mg1.vocab.notes(), mg2.vocab.notes());
  ASSERT_EQ(mg1.n_edges(), mg2.n_edges());
  for (size_t i = 0; i < mg1.n_edges(); ++i) {
    EXPECT_EQ(mg1.edges[i].u, mg2.edges[i].u);
    EXPECT_EQ(mg1.edges[i].v, mg2.edges[i].v);
    EXPECT_EQ(mg1.edges[i].labels, mg2.edges[i].labels);
  }
}

TEST(LoadPairs, VocabStabilityAcrossReload) {
  TempFile file(
      R"({"smiles_a": "CCO", "smiles_b": "CC", "labels": ["zeta", "alpha"]})"
      "\n");
  auto [mg1, r1] = load_pairs(file.path());
  const std::string vocab_path =
      (std::filesystem::temp_directory_path() / "aroma_vocab.txt").string();
  save_vocab(mg1.vocab, vocab_path);
  const LabelVocab persisted = load_vocab(vocab_path);
  EXPECT_EQ(persisted, mg1.vocab);

  auto [mg2, r2] = load_pairs(file.path(), &persisted);
  EXPECT_EQ(mg2.vocab, mg1.vocab);
  EXPECT_EQ(mg2.edges[0].labels, mg1.edges[0].labels);
  std::filesystem::remove(vocab_path);
}

TEST(MetaGraphIo, BinaryRoundTrip) {
  MetaGraph mg = test::make_metagraph(
      4, {{0, 1, {"fruity"}}, {1, 2, {"musk", "green"}}, {2, 3, {"sweet"}}});
  const std::string path =
      (std::filesystem::temp_directory_path() / "aroma_mg.bin").string();
  mg.save(path);
  const MetaGraph loaded = MetaGraph::load(path);
  EXPECT_EQ(loaded.smiles, mg.smiles);
  EXPECT_EQ(loaded.vocab.notes(), mg.vocab.notes());
  ASSERT_EQ(loaded.n_edges(), mg.n_edges());
  for (size_t i = 0; i < mg.n_edges(); ++i)
    EXPECT_EQ(loaded.edges[i].labels, mg.edges[i].labels);
  std::filesystem::remove(path);
}

TEST(Jaccard, WorkedExample) {
  // La={x,y}, Lb={y,z}, Lpair={y,w}: J_union=1/4, J_intersect=1/2.
  MetaGraph mg = test::make_metagraph(2, {{0, 1, {"y", "w"}}});
  mg.vocab.add("x");
  mg.vocab.add("z");
  std::vector<MonoRecord> mono;
  mono.push_back({test::chain_smiles(0),
                  LabelSet({*mg.vocab.find("x"), *mg.vocab.find("y")})});
  mono.push_back({test::chain_smiles(1),
                  LabelSet({*mg.vocab.find("y"), *mg.vocab.find("z")})});
  const JaccardReport report = jaccard_blend_analysis(mg, mono);
  EXPECT_DOUBLE_EQ(report.j_union, 0.25);
  EXPECT_DOUBLE_EQ(report.j_intersection, 0.5);
  EXPECT_EQ(report.pairs_used, 1u);
}

TEST(Jaccard, PerfectUnionGivesOne) {
  MetaGraph mg = test::make_metagraph(
      3, {{0, 1, {"a", "b"}}, {1, 2, {"b", "c"}}});
  std::vector<MonoRecord> mono;
  mono.push_back({test::chain_smiles(0), LabelSet({*mg.vocab.find("a")})});
  mono.push_back({test::chain_smiles(1), LabelSet({*mg.vocab.find("b")})});
  mono.push_back({test::chain_smiles(2), LabelSet({*mg.vocab.find("c")})});
  const JaccardReport report = jaccard_blend_analysis(mg, mono);
  EXPECT_DOUBLE_EQ(report.j_union, 1.0);
}

TEST(Jaccard, DisjointGivesZeroAndSkipsUnlabeled) {
  MetaGraph mg = test::make_metagraph(
      4, {{0, 1, {"pair only"}}, {2, 3, {"skipped"}}});
  mg.vocab.add("solo a");
  mg.vocab.add("solo b");
  std::vector<MonoRecord> mono;
  mono.push_back({test::chain_smiles(0), LabelSet({*mg.vocab.find("solo a")})});
  mono.push_back({test::chain_smiles(1), LabelSet({*mg.vocab.find("solo b")})});
  const JaccardReport report = jaccard_blend_analysis(mg, mono);
  EXPECT_DOUBLE_EQ(report.j_union, 0.0);
  EXPECT_DOUBLE_EQ(report.j_intersection, 0.0);
  EXPECT_EQ(report.pairs_skipped, 1u);

  const std::vector<MonoRecord> empty;
  EXPECT_THROW(jaccard_blend_analysis(mg, empty), DatasetError);
}

TEST(DependentNotes, ExclusiveParentDetection) {
  LabelVocab vocab;
  const uint32_t estery = vocab.add("estery");
  const uint32_t fruity = vocab.add("fruity");
  const uint32_t green = vocab.add("green");
  std::vector<LabelSet> records;
  for (int i = 0; i < 739; ++i) records.push_back(LabelSet({estery, fruity}));
  records.push_back(LabelSet({fruity}));
  records.push_back(LabelSet({green, fruity}));
  records.push_back(LabelSet({green}));

  const auto rows = dependent_notes(records, vocab);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].dependent, "estery");
  EXPECT_EQ(rows[0].parent, "fruity");
  EXPECT_EQ(rows[0].frequency, 739u);
}

TEST(DependentNotes, SingleAloneOccurrenceBreaksDependence) {
  LabelVocab vocab;
  const uint32_t d = vocab.add("d");
  const uint32_t p = vocab.add("p");
  std::vector<LabelSet> records = {LabelSet({d, p}), LabelSet({d})};
  // d appeared once alone, so d has no parent; p -> d still holds.
  const auto rows = dependent_notes(records, vocab);
  for (const auto& row : rows) EXPECT_NE(row.dependent, "d");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].dependent, "p");
  EXPECT_EQ(rows[0].parent, "d");
}

TEST(DependentNotes, PartialCoOccurrenceNotParent) {
  LabelVocab vocab;
  const uint32_t d = vocab.add("d");
  const uint32_t p = vocab.add("p");
  const uint32_t q = vocab.add("q");
  std::vector<LabelSet> records = {LabelSet({d, p}), LabelSet({d, p, q})};
  const auto rows = dependent_notes(records, vocab);
  std::vector<std::string> parents_of_d;
  for (const auto& row : rows)
    if (row.dependent == "d") parents_of_d.push_back(row.parent);
  EXPECT_EQ(parents_of_d, std::vector<std::string>{"p"});  // q is not a parent
  EXPECT_EQ(rows[0].dependent, "d");
  EXPECT_EQ(rows[0].parent, "p");
}

TEST(DependentNotes, MutualDependenceReportedTwice) {
  LabelVocab vocab;
  const uint32_t celery = vocab.add("celery");
  const uint32_t lactonic = vocab.add("lactonic");
  std::vector<LabelSet> records(34, LabelSet({celery, lactonic}));
  const auto rows = dependent_notes(records, vocab);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].frequency, 34u);
  EXPECT_EQ(rows[1].frequency, 34u);
}

TEST(IsolateNotes, NeverCoOccurring) {
  LabelVocab vocab;
  const uint32_t ammoniacal = vocab.add("ammoniacal");
  const uint32_t fruity = vocab.add("fruity");
  const uint32_t sweet = vocab.add("sweet");
  std::vector<LabelSet> records;
  for (int i = 0; i < 9; ++i) records.push_back(LabelSet({ammoniacal}));
  records.push_back(LabelSet({fruity, sweet}));
  records.push_back(LabelSet({fruity}));

  const auto rows = isolate_notes(records, vocab);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].note, "ammoniacal");
  EXPECT_EQ(rows[0].frequency, 9u);

  EXPECT_TRUE(isolate_notes({}, vocab).empty());
}

}  // namespace
}  // namespace aroma

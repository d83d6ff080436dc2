#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "embalign/corpus.hpp"
#include "embalign/embedding_space.hpp"
#include "embalign/retrieval.hpp"
#include "embalign/types.hpp"

namespace embalign {

struct EvalReport {
  std::string task;  // "classification", "translation", or "synonyms"
  // Percentages in insertion order, full precision; to_json rounds to one
  // decimal. The exact counts behind them live in `counts`.
  std::vector<std::pair<std::string, double>> metrics;
  std::vector<std::pair<std::string, std::int64_t>> counts;
  int n_queries = 0;
  int n_scored = 0;
  int n_excluded = 0;
  nlohmann::ordered_json config_echo;

  double metric_value(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
};

// Top-1 retrieval of each query's own label. Queries live in the source
// coordinate system; for CSLS the query set itself serves as the density
// reference.
EvalReport classify(const InstanceSet& queries, const EmbeddingSpace& target,
                    const LinearMap& map, Metric metric, const CslsConfig& csls = {});
// Type-level variant: one query per row, labels = tokens.
EvalReport classify(const EmbeddingSpace& queries, const EmbeddingSpace& target,
                    const LinearMap& map, Metric metric, const CslsConfig& csls = {});

// Precision@k against each query label's dictionary translations. Queries
// whose label has no dictionary entry are excluded and counted. source_lang
// supplies the CSLS density reference.
EvalReport translate(const InstanceSet& queries, const EmbeddingSpace& source_lang,
                     const EmbeddingSpace& target_lang, const LinearMap& map,
                     const BilingualDictionary& dictionary, Metric metric,
                     const std::vector<int>& ks, const CslsConfig& csls = {});
EvalReport translate(const EmbeddingSpace& queries, const EmbeddingSpace& source_lang,
                     const EmbeddingSpace& target_lang, const LinearMap& map,
                     const BilingualDictionary& dictionary, Metric metric,
                     const std::vector<int>& ks, const CslsConfig& csls = {});

struct SynonymSets {
  std::map<std::string, std::set<std::string>> sets;

  bool contains(const std::string& token) const { return sets.count(token) > 0; }
  double average_excluding_self() const;
};

// syn(w) = union over w's forward translations t of backward(t). Words whose
// union comes out empty are dropped; include_self forces w into its own set.
SynonymSets derive_synonyms(const BilingualDictionary& forward,
                            const BilingualDictionary& backward, bool include_self = false);

// Precision@k against syn(label); labels without a synonym set are excluded
// and counted. The query set serves as the CSLS density reference.
EvalReport retrieve_synonyms(const InstanceSet& queries, const EmbeddingSpace& target,
                             const LinearMap& map, const SynonymSets& synonyms, Metric metric,
                             const std::vector<int>& ks, const CslsConfig& csls = {});

// Constant predictor scoring: predictions are distribution tokens ranked by
// weight (ties keep first appearance) and every query receives the same
// top-k list. gold holds each query's acceptable answers.
EvalReport major_word_baseline(const std::string& task,
                               const std::vector<std::set<std::string>>& gold,
                               const std::vector<std::pair<std::string, double>>& distribution,
                               const std::vector<int>& ks);

// Weight per target token = summed frequency of its paired source tokens
// (count 1 per pair when the source space lacks frequencies); first-pair
// order preserved.
std::vector<std::pair<std::string, double>> paired_target_distribution(
    const BilingualDictionary& dictionary, const EmbeddingSpace* source = nullptr);

// Occurrence count per label, first-appearance order.
std::vector<std::pair<std::string, double>> label_distribution(
    const std::vector<std::string>& labels);

}  // namespace embalign

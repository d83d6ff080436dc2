#include "embalign/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace embalign {

namespace {

double percent(std::int64_t part, std::int64_t whole) {
  return 100.0 * static_cast<double>(part) / static_cast<double>(whole);
}

void check_ks(const std::vector<int>& ks) {
  if (ks.empty()) throw std::runtime_error("evaluation: no k values given");
  for (int k : ks) {
    if (k < 1) throw std::runtime_error("evaluation: k values must be positive");
  }
}

EmbeddingSpace wrap_queries(const Matrix& vectors) {
  std::vector<std::string> tokens(static_cast<std::size_t>(vectors.rows()));
  for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] = "q_" + std::to_string(i);
  return EmbeddingSpace::create(std::move(tokens), vectors);
}

// Top-k target tokens for every query row, queries in source coordinates.
std::vector<std::vector<std::string>> batch_topk(const Matrix& queries,
                                                 const EmbeddingSpace* csls_reference,
                                                 const EmbeddingSpace& target,
                                                 const LinearMap& map, Metric metric, int k,
                                                 const CslsConfig& csls) {
  std::vector<std::vector<std::string>> out(static_cast<std::size_t>(queries.rows()));
  if (metric == Metric::kCsls) {
    EmbeddingSpace wrapped = csls_reference ? EmbeddingSpace{} : wrap_queries(queries);
    const EmbeddingSpace& reference = csls_reference ? *csls_reference : wrapped;
    CslsIndex index(reference, target, map, csls);
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
      auto ranked = index.topk(queries.row(i).transpose(), k);
      for (auto& item : ranked) out[static_cast<std::size_t>(i)].push_back(std::move(item.token));
    }
    return out;
  }
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    Vector mapped = (queries.row(i) * map.matrix().transpose()).transpose();
    auto ranked = cosine_topk(mapped, target, k);
    for (auto& item : ranked) out[static_cast<std::size_t>(i)].push_back(std::move(item.token));
  }
  return out;
}

// Scores queries whose label has an acceptable set; the rest are excluded.
// metric_name(k) supplies the report key for each cutoff.
EvalReport precision_core(const std::string& task, const Matrix& vectors,
                          const std::vector<std::string>& labels,
                          const std::map<std::string, std::set<std::string>>& acceptable,
                          const EmbeddingSpace* csls_reference, const EmbeddingSpace& target,
                          const LinearMap& map, Metric metric, const std::vector<int>& ks,
                          const CslsConfig& csls, bool k_in_name) {
  check_ks(ks);
  if (vectors.rows() == 0) throw std::runtime_error(task + ": no queries");
  if (labels.size() != static_cast<std::size_t>(vectors.rows())) {
    throw std::runtime_error(task + ": label count does not match query count");
  }
  if (map.input_dim() != vectors.cols()) {
    throw std::runtime_error(task + ": query width does not match the map");
  }

  std::vector<Eigen::Index> scored;
  for (Eigen::Index i = 0; i < vectors.rows(); ++i) {
    if (acceptable.count(labels[static_cast<std::size_t>(i)]) > 0) scored.push_back(i);
  }
  if (scored.empty()) {
    throw std::runtime_error(task + ": no query label has an acceptable answer set");
  }

  Matrix scored_vectors(static_cast<Eigen::Index>(scored.size()), vectors.cols());
  for (std::size_t i = 0; i < scored.size(); ++i) {
    scored_vectors.row(static_cast<Eigen::Index>(i)) = vectors.row(scored[i]);
  }
  const int kmax = *std::max_element(ks.begin(), ks.end());
  auto ranked = batch_topk(scored_vectors, csls_reference, target, map, metric, kmax, csls);

  EvalReport report;
  report.task = task;
  report.n_queries = static_cast<int>(vectors.rows());
  report.n_scored = static_cast<int>(scored.size());
  report.n_excluded = report.n_queries - report.n_scored;

  for (int k : ks) {
    std::int64_t hits = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
      const auto& accept = acceptable.at(labels[static_cast<std::size_t>(scored[i])]);
      const auto& tokens = ranked[i];
      const std::size_t depth = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(k));
      for (std::size_t r = 0; r < depth; ++r) {
        if (accept.count(tokens[r]) > 0) {
          ++hits;
          break;
        }
      }
    }
    std::string name = k_in_name ? "precision@" + std::to_string(k) : "accuracy";
    report.metrics.emplace_back(name, percent(hits, report.n_scored));
    report.counts.emplace_back(k_in_name ? "hits@" + std::to_string(k) : "n_correct", hits);
  }
  return report;
}

std::map<std::string, std::set<std::string>> dictionary_sets(const BilingualDictionary& dict) {
  std::map<std::string, std::set<std::string>> sets;
  for (const auto& [s, t] : dict.pairs) sets[s].insert(t);
  return sets;
}

}  // namespace

double EvalReport::metric_value(const std::string& name) const {
  for (const auto& [key, value] : metrics) {
    if (key == name) return value;
  }
  throw std::runtime_error("EvalReport: no metric named '" + name + "'");
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = task;
  nlohmann::ordered_json m;
  for (const auto& [key, value] : metrics) m[key] = std::round(value * 10.0) / 10.0;
  j["metrics"] = m;
  nlohmann::ordered_json c;
  for (const auto& [key, value] : counts) c[key] = value;
  j["counts"] = c;
  j["n_queries"] = n_queries;
  j["n_scored"] = n_scored;
  j["n_excluded"] = n_excluded;
  j["config"] = config_echo.is_null() ? nlohmann::ordered_json::object() : config_echo;
  return j;
}

EvalReport classify(const InstanceSet& queries, const EmbeddingSpace& target, const LinearMap& map,
                    Metric metric, const CslsConfig& csls) {
  std::map<std::string, std::set<std::string>> self_sets;
  for (const auto& label : queries.labels) self_sets[label].insert(label);
  return precision_core("classification", queries.vectors, queries.labels, self_sets, nullptr,
                        target, map, metric, {1}, csls, false);
}

EvalReport classify(const EmbeddingSpace& queries, const EmbeddingSpace& target,
                    const LinearMap& map, Metric metric, const CslsConfig& csls) {
  std::map<std::string, std::set<std::string>> self_sets;
  for (const auto& token : queries.vocab) self_sets[token].insert(token);
  return precision_core("classification", queries.vectors, queries.vocab, self_sets, nullptr,
                        target, map, metric, {1}, csls, false);
}

EvalReport translate(const InstanceSet& queries, const EmbeddingSpace& source_lang,
                     const EmbeddingSpace& target_lang, const LinearMap& map,
                     const BilingualDictionary& dictionary, Metric metric,
                     const std::vector<int>& ks, const CslsConfig& csls) {
  return precision_core("translation", queries.vectors, queries.labels,
                        dictionary_sets(dictionary), &source_lang, target_lang, map, metric, ks,
                        csls, true);
}

EvalReport translate(const EmbeddingSpace& queries, const EmbeddingSpace& source_lang,
                     const EmbeddingSpace& target_lang, const LinearMap& map,
                     const BilingualDictionary& dictionary, Metric metric,
                     const std::vector<int>& ks, const CslsConfig& csls) {
  return precision_core("translation", queries.vectors, queries.vocab,
                        dictionary_sets(dictionary), &source_lang, target_lang, map, metric, ks,
                        csls, true);
}

double SynonymSets::average_excluding_self() const {
  if (sets.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [word, synonyms] : sets) {
    total += static_cast<double>(synonyms.size() - synonyms.count(word));
  }
  return total / static_cast<double>(sets.size());
}

SynonymSets derive_synonyms(const BilingualDictionary& forward, const BilingualDictionary& backward,
                            bool include_self) {
  if (forward.empty() || backward.empty()) {
    throw std::runtime_error("derive_synonyms: empty dictionary");
  }
  std::unordered_map<std::string, std::set<std::string>> back;
  for (const auto& [t, s] : backward.pairs) back[t].insert(s);

  SynonymSets out;
  for (const auto& [s, t] : forward.pairs) {
    auto it = back.find(t);
    if (it != back.end()) out.sets[s].insert(it->second.begin(), it->second.end());
    if (include_self) out.sets[s].insert(s);
  }
  std::erase_if(out.sets, [](const auto& entry) { return entry.second.empty(); });
  return out;
}

EvalReport retrieve_synonyms(const InstanceSet& queries, const EmbeddingSpace& target,
                             const LinearMap& map, const SynonymSets& synonyms, Metric metric,
                             const std::vector<int>& ks, const CslsConfig& csls) {
  return precision_core("synonyms", queries.vectors, queries.labels, synonyms.sets, nullptr,
                        target, map, metric, ks, csls, true);
}

EvalReport major_word_baseline(const std::string& task,
                               const std::vector<std::set<std::string>>& gold,
                               const std::vector<std::pair<std::string, double>>& distribution,
                               const std::vector<int>& ks) {
  check_ks(ks);
  if (gold.empty()) throw std::runtime_error("major_word_baseline: no gold answers");
  if (distribution.empty()) throw std::runtime_error("major_word_baseline: empty distribution");

  std::vector<std::pair<std::string, double>> ranked = distribution;
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  EvalReport report;
  report.task = task;
  report.n_queries = static_cast<int>(gold.size());
  report.n_scored = report.n_queries;
  report.n_excluded = 0;

  const bool classification = task == "classification";
  for (int k : ks) {
    const std::size_t depth = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
    std::int64_t hits = 0;
    for (const auto& accept : gold) {
      for (std::size_t r = 0; r < depth; ++r) {
        if (accept.count(ranked[r].first) > 0) {
          ++hits;
          break;
        }
      }
    }
    std::string name =
        classification && k == 1 ? "accuracy" : "precision@" + std::to_string(k);
    report.metrics.emplace_back(name, percent(hits, report.n_scored));
    report.counts.emplace_back(classification && k == 1 ? "n_correct" : "hits@" + std::to_string(k),
                               hits);
  }
  return report;
}

std::vector<std::pair<std::string, double>> paired_target_distribution(
    const BilingualDictionary& dictionary, const EmbeddingSpace* source) {
  std::vector<std::pair<std::string, double>> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& [s, t] : dictionary.pairs) {
    double weight = 1.0;
    if (source != nullptr && source->has_frequencies()) {
      int row = source->row_of(s);
      weight = row < 0 ? 0.0
                       : static_cast<double>(source->frequencies[static_cast<std::size_t>(row)]);
    }
    auto [it, inserted] = index.emplace(t, out.size());
    if (inserted) {
      out.emplace_back(t, weight);
    } else {
      out[it->second].second += weight;
    }
  }
  return out;
}

std::vector<std::pair<std::string, double>> label_distribution(
    const std::vector<std::string>& labels) {
  std::vector<std::pair<std::string, double>> out;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& label : labels) {
    auto [it, inserted] = index.emplace(label, out.size());
    if (inserted) {
      out.emplace_back(label, 1.0);
    } else {
      out[it->second].second += 1.0;
    }
  }
  return out;
}

}  // namespace embalign

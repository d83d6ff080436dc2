#include "embalign/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "embalign/io.hpp"

namespace embalign {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// -log sigmoid(z), computed without overflow for large |z|.
double softplus_neg(double z) { return z >= 0.0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z)); }

struct VocabBuild {
  std::vector<std::string> tokens;          // sorted by (count desc, first seen asc)
  std::vector<std::uint64_t> counts;
  std::unordered_map<std::string, int> index;
};

VocabBuild build_vocab(const Corpus& corpus, int min_count) {
  std::unordered_map<std::string, std::pair<std::uint64_t, std::size_t>> stats;  // count, first-seen
  std::size_t position = 0;
  for (const auto& sentence : corpus) {
    for (const auto& token : sentence) {
      auto [it, inserted] = stats.emplace(token, std::make_pair(0, position));
      it->second.first++;
      ++position;
    }
  }

  std::vector<std::pair<std::string, std::pair<std::uint64_t, std::size_t>>> entries(stats.begin(),
                                                                                     stats.end());
  std::erase_if(entries, [&](const auto& e) {
    return e.second.first < static_cast<std::uint64_t>(min_count);
  });
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second.first != b.second.first) return a.second.first > b.second.first;
    return a.second.second < b.second.second;
  });

  VocabBuild out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out.tokens.push_back(entries[i].first);
    out.counts.push_back(entries[i].second.first);
    out.index.emplace(entries[i].first, static_cast<int>(i));
  }
  return out;
}

// Cumulative unigram^0.75 table; sampled by inverse CDF.
class NegativeSampler {
 public:
  explicit NegativeSampler(const std::vector<std::uint64_t>& counts) {
    cumulative_.reserve(counts.size());
    double total = 0.0;
    for (auto c : counts) {
      total += std::pow(static_cast<double>(c), 0.75);
      cumulative_.push_back(total);
    }
  }

  int sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unit(0.0, cumulative_.back());
    double u = unit(rng);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    if (it == cumulative_.end()) --it;
    return static_cast<int>(it - cumulative_.begin());
  }

 private:
  std::vector<double> cumulative_;
};

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  Corpus corpus;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    std::vector<std::string> sentence;
    sentence.reserve(fields.size());
    for (auto f : fields) sentence.emplace_back(f);
    corpus.push_back(std::move(sentence));
  }
  return corpus;
}

double sgns_pair_loss(const Vector& center, const Vector& context, const Matrix& negatives) {
  double loss = softplus_neg(context.dot(center));
  for (Eigen::Index i = 0; i < negatives.rows(); ++i) {
    loss += softplus_neg(-negatives.row(i).dot(center));
  }
  return loss;
}

SgnsPairGrads sgns_pair_gradients(const Vector& center, const Vector& context,
                                  const Matrix& negatives) {
  SgnsPairGrads g;
  double pos = sigmoid(context.dot(center)) - 1.0;
  g.center = pos * context;
  g.context = pos * center;
  g.negatives.resize(negatives.rows(), negatives.cols());
  for (Eigen::Index i = 0; i < negatives.rows(); ++i) {
    double neg = sigmoid(negatives.row(i).dot(center));
    g.center += neg * negatives.row(i).transpose();
    g.negatives.row(i) = neg * center.transpose();
  }
  return g;
}

SgnsResult train_sgns(const Corpus& corpus, const SgnsConfig& config) {
  if (config.window_size < 1 || config.dim < 2 || config.learning_rate <= 0.0 ||
      config.negatives_per_positive < 1 || config.epochs < 1) {
    throw std::runtime_error("train_sgns: invalid configuration");
  }

  VocabBuild vocab = build_vocab(corpus, config.min_count);
  if (vocab.tokens.empty()) {
    throw std::runtime_error("train_sgns: empty vocabulary after min-count filtering");
  }
  const int n_words = static_cast<int>(vocab.tokens.size());

  // Sentences mapped to row ids, rare tokens dropped so windows close over
  // the gaps they leave.
  std::vector<std::vector<int>> sentences;
  for (const auto& sentence : corpus) {
    std::vector<int> ids;
    for (const auto& token : sentence) {
      auto it = vocab.index.find(token);
      if (it != vocab.index.end()) ids.push_back(it->second);
    }
    if (ids.size() >= 2) sentences.push_back(std::move(ids));
  }

  std::uint64_t pairs_per_epoch = 0;
  for (const auto& s : sentences) {
    for (std::size_t pos = 0; pos < s.size(); ++pos) {
      std::size_t lo = pos >= static_cast<std::size_t>(config.window_size)
                           ? pos - static_cast<std::size_t>(config.window_size)
                           : 0;
      std::size_t hi = std::min(s.size() - 1, pos + static_cast<std::size_t>(config.window_size));
      pairs_per_epoch += hi - lo;  // window minus the center itself
    }
  }
  if (pairs_per_epoch == 0) {
    throw std::runtime_error("train_sgns: corpus yields no context pairs");
  }

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> init(-0.5 / config.dim, 0.5 / config.dim);
  Matrix input(n_words, config.dim);
  for (Eigen::Index i = 0; i < input.rows(); ++i) {
    for (Eigen::Index j = 0; j < input.cols(); ++j) input(i, j) = init(rng);
  }
  Matrix output = Matrix::Zero(n_words, config.dim);

  NegativeSampler sampler(vocab.counts);
  const double lr0 = config.learning_rate;
  const double lr_floor = lr0 * 1e-4;
  const double total_updates =
      static_cast<double>(pairs_per_epoch) * static_cast<double>(config.epochs);

  SgnsResult result;
  std::uint64_t done = 0;
  std::vector<int> negatives(static_cast<std::size_t>(config.negatives_per_positive));
  Vector grad_center(config.dim);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double epoch_loss = 0.0;
    std::uint64_t epoch_pairs = 0;
    for (const auto& s : sentences) {
      const int len = static_cast<int>(s.size());
      for (int pos = 0; pos < len; ++pos) {
        const int center = s[static_cast<std::size_t>(pos)];
        const int lo = std::max(0, pos - config.window_size);
        const int hi = std::min(len - 1, pos + config.window_size);
        for (int c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          const int context = s[static_cast<std::size_t>(c)];
          double lr = std::max(lr_floor, lr0 * (1.0 - static_cast<double>(done) / total_updates));

          int n_neg = 0;
          for (int k = 0; k < config.negatives_per_positive; ++k) {
            int neg = sampler.sample(rng);
            if (neg == context) continue;  // never a negative for itself
            negatives[static_cast<std::size_t>(n_neg++)] = neg;
          }

          auto v = input.row(center);
          auto u = output.row(context);
          double z_pos = u.dot(v);
          double s_pos = sigmoid(z_pos) - 1.0;
          double loss = softplus_neg(z_pos);
          grad_center = s_pos * u.transpose();
          for (int k = 0; k < n_neg; ++k) {
            auto un = output.row(negatives[static_cast<std::size_t>(k)]);
            double z = un.dot(v);
            loss += softplus_neg(-z);
            double sn = sigmoid(z);
            grad_center += sn * un.transpose();
            output.row(negatives[static_cast<std::size_t>(k)]) -= lr * sn * v;
          }
          output.row(context) -= lr * s_pos * v;
          input.row(center) -= lr * grad_center.transpose();

          epoch_loss += loss;
          ++epoch_pairs;
          ++done;
        }
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(epoch_pairs));
  }

  result.space = EmbeddingSpace::create(vocab.tokens, std::move(input), vocab.counts);
  return result;
}

InstanceSet generate_instances(const EmbeddingSpace& base, int per_word_count, double noise_sigma,
                               double contamination, std::uint64_t seed) {
  if (base.size() == 0) throw std::runtime_error("generate_instances: empty base space");
  if (per_word_count < 1) throw std::runtime_error("generate_instances: per_word_count must be positive");
  if (noise_sigma < 0.0) throw std::runtime_error("generate_instances: noise_sigma must be non-negative");
  if (contamination < 0.0 || contamination > 1.0) {
    throw std::runtime_error("generate_instances: contamination must lie in [0,1]");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, base.size() - 1);

  InstanceSet out;
  out.vectors.resize(static_cast<Eigen::Index>(base.size()) * per_word_count, base.dim());
  out.labels.reserve(static_cast<std::size_t>(out.vectors.rows()));

  Eigen::Index row = 0;
  for (int w = 0; w < base.size(); ++w) {
    for (int i = 0; i < per_word_count; ++i, ++row) {
      out.labels.push_back(base.vocab[static_cast<std::size_t>(w)]);
      if (contamination > 0.0 && unit(rng) < contamination) {
        int a = pick(rng);
        int b = pick(rng);
        while (base.size() > 1 && b == a) b = pick(rng);
        double lambda = unit(rng);
        out.vectors.row(row) = lambda * base.vectors.row(a) + (1.0 - lambda) * base.vectors.row(b);
        continue;
      }
      out.vectors.row(row) = base.vectors.row(w);
      if (noise_sigma > 0.0) {
        for (Eigen::Index j = 0; j < out.vectors.cols(); ++j) {
          out.vectors(row, j) += noise_sigma * gauss(rng);
        }
      }
    }
  }
  return out;
}

void save_instances(const InstanceSet& instances, const std::string& vectors_path,
                    const std::string& labels_path) {
  std::vector<std::string> tokens;
  tokens.reserve(instances.labels.size());
  std::unordered_map<std::string, int> per_label;
  for (const auto& label : instances.labels) {
    int idx = per_label[label]++;
    tokens.push_back(label + "_" + std::to_string(idx));
  }
  EmbeddingSpace as_space = EmbeddingSpace::create(tokens, instances.vectors);
  save_embeddings(as_space, vectors_path);

  std::ofstream out(labels_path);
  if (!out) throw std::runtime_error(labels_path + ": cannot open for writing");
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    out << tokens[i] << ' ' << instances.labels[i] << '\n';
  }
  if (!out) throw std::runtime_error(labels_path + ": write failed");
}

InstanceSet load_instances(const std::string& vectors_path, const std::string& labels_path) {
  EmbeddingSpace space = load_embeddings(vectors_path);
  BilingualDictionary labels = load_dictionary(labels_path);
  std::unordered_map<std::string, std::string> by_token;
  for (const auto& [token, label] : labels.pairs) by_token.emplace(token, label);

  InstanceSet out;
  out.vectors = space.vectors;
  out.labels.reserve(space.vocab.size());
  for (const auto& token : space.vocab) {
    auto it = by_token.find(token);
    if (it == by_token.end()) {
      throw std::runtime_error(labels_path + ": no label for instance token '" + token + "'");
    }
    out.labels.push_back(it->second);
  }
  return out;
}

}  // namespace embalign

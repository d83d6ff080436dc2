#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "embalign/embedding_space.hpp"
#include "embalign/types.hpp"

namespace embalign {

struct SgnsConfig {
  int window_size = 3;
  int dim = 50;
  int negatives_per_positive = 5;
  int epochs = 5;
  double learning_rate = 0.025;
  int min_count = 1;
  std::uint64_t seed = 1;
};

struct SgnsResult {
  EmbeddingSpace space;              // input (center) vectors, frequencies populated
  std::vector<double> epoch_losses;  // mean pair loss per epoch
};

using Corpus = std::vector<std::vector<std::string>>;

// One whitespace-tokenized sentence per line.
Corpus load_corpus(const std::string& path);

// Skip-gram with negative sampling over the token corpus. Deterministic for a
// fixed seed. Negatives are drawn from the unigram distribution raised to
// 0.75; the learning rate decays linearly to 1e-4 of its initial value over
// all scheduled updates. Throws when the filtered corpus yields no vocabulary
// or no (center, context) pairs.
SgnsResult train_sgns(const Corpus& corpus, const SgnsConfig& config);

// Loss of one positive (center, context) against sampled negatives:
//   -log sigmoid(u_ctx . v) - sum_neg log sigmoid(-u_neg . v)
// Exposed so the gradient can be checked against finite differences.
double sgns_pair_loss(const Vector& center, const Vector& context, const Matrix& negatives);

struct SgnsPairGrads {
  Vector center;
  Vector context;
  Matrix negatives;
};

SgnsPairGrads sgns_pair_gradients(const Vector& center, const Vector& context,
                                  const Matrix& negatives);

// Per-occurrence embeddings with the generating word kept as a hidden label.
// Alignment never reads the labels; evaluation does.
struct InstanceSet {
  Matrix vectors;
  std::vector<std::string> labels;

  int size() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

// For every base word, `per_word_count` copies of its vector plus isotropic
// Gaussian noise of scale `noise_sigma`. Each instance is independently
// replaced, with probability `contamination`, by a convex mixture of two
// distinct random base vectors, simulating a segment spanning word
// boundaries.
InstanceSet generate_instances(const EmbeddingSpace& base, int per_word_count,
                               double noise_sigma, double contamination, std::uint64_t seed);

// Instance file = embedding format with tokens "<label>_<index>"; sidecar
// maps each instance token back to its label, "<instance-token> <label>" per
// line.
void save_instances(const InstanceSet& instances, const std::string& vectors_path,
                    const std::string& labels_path);
InstanceSet load_instances(const std::string& vectors_path, const std::string& labels_path);

}  // namespace embalign

#pragma once

#include <cstdint>
#include <vector>

#include "embalign/embedding_space.hpp"
#include "embalign/types.hpp"

namespace embalign {

// Two-layer classifier scoring how likely a vector is to come from the mapped
// source space rather than the target space.
struct Discriminator {
  Matrix w1;       // hidden x input dim
  Vector b1;       // hidden
  Vector w2;       // hidden
  double b2 = 0.0;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }

  static Discriminator random_init(int input_dim, int hidden, std::uint64_t seed);

  // Pre-sigmoid score per input row.
  Vector logits(const Matrix& inputs) const;
};

struct DiscriminatorGrads {
  Matrix w1;
  Vector b1;
  Vector w2;
  double b2 = 0.0;
};

struct AdversarialConfig {
  int epochs = 5;
  int steps_per_epoch = 1000;
  int batch_size = 32;
  double lr_discriminator = 1e-3;
  double lr_mapping = 1e-3;
  double label_smoothing = 0.2;   // in [0, 0.5)
  double input_dropout = 0.1;     // in [0, 1); applied only in discriminator steps
  double ortho_beta = 0.001;      // 0 disables the orthogonality update
  int dis_steps = 1;              // discriminator updates per mapping update
  int hidden = 512;
  int criterion_max_words = 10000;
  int criterion_csls_k = 10;
  std::uint64_t seed = 1;
};

struct AdversarialEpoch {
  double discriminator_loss = 0.0;
  double mapping_loss = 0.0;
  double criterion = 0.0;
  double w_min_singular = 0.0;
  double w_max_singular = 0.0;
};

struct AdversarialResult {
  LinearMap map;                // the per-epoch checkpoint with the best criterion
  double init_criterion = 0.0;
  double best_criterion = 0.0;
  int best_epoch = -1;          // -1 when no epoch improved on the initial map
  std::vector<AdversarialEpoch> trace;
  bool aborted = false;         // a non-finite value stopped training early
};

// Discriminator objective: mapped source rows carry target probability
// 1 - label_smoothing, target rows carry label_smoothing. Each batch
// contributes the mean of its per-row cross-entropies.
double discriminator_loss(const Discriminator& disc, const Matrix& mapped_source,
                          const Matrix& target_batch, double label_smoothing);

// Mapping objective: the same cross-entropy with both labels flipped. The
// target-row term carries no dependence on the mapping, so it shows up in the
// value but never in the mapping gradient.
double mapping_loss(const Discriminator& disc, const Matrix& mapped_source,
                    const Matrix& target_batch, double label_smoothing);

// Per-row derivative of an objective with respect to the discriminator's
// output logit, batch-mean weights folded in. The two objectives produce
// opposite signs on every row when label smoothing is zero.
struct LogitGrads {
  Vector mapped_source;
  Vector target;
};
LogitGrads discriminator_logit_grads(const Discriminator& disc, const Matrix& mapped_source,
                                     const Matrix& target_batch, double label_smoothing);
LogitGrads mapping_logit_grads(const Discriminator& disc, const Matrix& mapped_source,
                               const Matrix& target_batch, double label_smoothing);

// Analytic gradient of discriminator_loss with respect to every
// discriminator parameter.
DiscriminatorGrads discriminator_gradients(const Discriminator& disc, const Matrix& mapped_source,
                                           const Matrix& target_batch, double label_smoothing);

// Analytic gradient of mapping_loss with respect to the map that carries
// source_batch rows into the target space.
Matrix mapping_gradient(const Discriminator& disc, const LinearMap& map,
                        const Matrix& source_batch, const Matrix& target_batch,
                        double label_smoothing);

// Unsupervised model-selection score: mean CSLS similarity of the
// max_words most frequent source words to their nearest mapped neighbor.
// Higher is better.
double selection_criterion(const EmbeddingSpace& source, const EmbeddingSpace& target,
                           const LinearMap& map, int max_words, int csls_k);

// Alternates dis_steps discriminator updates with one mapping update per
// iteration, on batches sampled uniformly over each vocabulary. After every
// mapping update the map is pulled back toward orthogonality via
// W <- (1+beta) W - beta (W W^T) W. The map starts at the identity when the
// two dimensions agree, otherwise at a random row-orthonormal matrix. The
// checkpoint scoring best on the selection criterion (the initial map
// included) is returned; a non-finite loss or map aborts training and the
// best checkpoint so far is returned with the aborted flag set. Inputs are
// expected unit-normalized.
AdversarialResult train_adversarial(const EmbeddingSpace& source, const EmbeddingSpace& target,
                                    const AdversarialConfig& config);

}  // namespace embalign

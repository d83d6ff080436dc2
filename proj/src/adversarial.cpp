#include "embalign/adversarial.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "embalign/retrieval.hpp"

namespace embalign {

namespace {

double softplus(double z) {
  return z >= 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Cross-entropy of a logistic output at logit z against probability target y.
double bce(double z, double y) { return y * softplus(-z) + (1.0 - y) * softplus(z); }

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

void check_batches(const Discriminator& disc, const Matrix& mapped_source,
                   const Matrix& target_batch) {
  if (mapped_source.rows() == 0 || target_batch.rows() == 0) {
    throw std::runtime_error("adversarial loss: empty batch");
  }
  if (mapped_source.cols() != disc.input_dim() || target_batch.cols() != disc.input_dim()) {
    throw std::runtime_error("adversarial loss: batch width does not match discriminator input");
  }
}

double loss_from_logits(const Vector& z_source, const Vector& z_target, double source_label,
                        double target_label) {
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z_source.size(); ++i) {
    loss += bce(z_source(i), source_label) / static_cast<double>(z_source.size());
  }
  for (Eigen::Index j = 0; j < z_target.size(); ++j) {
    loss += bce(z_target(j), target_label) / static_cast<double>(z_target.size());
  }
  return loss;
}

Vector dz_from_logits(const Vector& z, double label) {
  Vector dz(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    dz(i) = (sigmoid(z(i)) - label) / static_cast<double>(z.size());
  }
  return dz;
}

// Pre-activation and logits for a batch, kept so the backward pass can reuse
// them.
struct Forward {
  Matrix a1;  // rows x hidden
  Vector z;   // rows
};

Forward forward(const Discriminator& disc, const Matrix& inputs) {
  Forward f;
  f.a1 = (inputs * disc.w1.transpose()).rowwise() + disc.b1.transpose();
  f.z = (f.a1.cwiseMax(0.0) * disc.w2).array() + disc.b2;
  return f;
}

DiscriminatorGrads param_grads(const Discriminator& disc, const Matrix& inputs, const Forward& f,
                               const Vector& dz) {
  DiscriminatorGrads g;
  g.w2 = f.a1.cwiseMax(0.0).transpose() * dz;
  g.b2 = dz.sum();
  Matrix da1 = (dz * disc.w2.transpose()).cwiseProduct((f.a1.array() > 0.0).cast<double>().matrix());
  g.w1 = da1.transpose() * inputs;
  g.b1 = da1.colwise().sum().transpose();
  return g;
}

Matrix input_grads(const Discriminator& disc, const Forward& f, const Vector& dz,
                   Eigen::Index rows) {
  Matrix da1 = (dz * disc.w2.transpose())
                   .cwiseProduct((f.a1.topRows(rows).array() > 0.0).cast<double>().matrix());
  return da1 * disc.w1;
}

Matrix take_rows(const Matrix& source, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), source.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = source.row(rows[i]);
  }
  return out;
}

std::vector<int> sample_rows(int count, int limit, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, limit - 1);
  std::vector<int> rows(static_cast<std::size_t>(count));
  for (auto& r : rows) r = pick(rng);
  return rows;
}

}  // namespace

Discriminator Discriminator::random_init(int input_dim, int hidden, std::uint64_t seed) {
  if (input_dim < 1 || hidden < 1) {
    throw std::runtime_error("Discriminator::random_init: dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  Discriminator disc;
  double bound1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  std::uniform_real_distribution<double> u1(-bound1, bound1);
  disc.w1.resize(hidden, input_dim);
  for (Eigen::Index i = 0; i < disc.w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < disc.w1.cols(); ++j) disc.w1(i, j) = u1(rng);
  }
  disc.b1 = Vector::Zero(hidden);
  double bound2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u2(-bound2, bound2);
  disc.w2.resize(hidden);
  for (Eigen::Index i = 0; i < disc.w2.size(); ++i) disc.w2(i) = u2(rng);
  disc.b2 = 0.0;
  return disc;
}

Vector Discriminator::logits(const Matrix& inputs) const {
  if (inputs.cols() != w1.cols()) {
    throw std::runtime_error("Discriminator::logits: input width does not match layer 1");
  }
  return forward(*this, inputs).z;
}

double discriminator_loss(const Discriminator& disc, const Matrix& mapped_source,
                          const Matrix& target_batch, double label_smoothing) {
  check_batches(disc, mapped_source, target_batch);
  return loss_from_logits(disc.logits(mapped_source), disc.logits(target_batch),
                          1.0 - label_smoothing, label_smoothing);
}

double mapping_loss(const Discriminator& disc, const Matrix& mapped_source,
                    const Matrix& target_batch, double label_smoothing) {
  check_batches(disc, mapped_source, target_batch);
  return loss_from_logits(disc.logits(mapped_source), disc.logits(target_batch), label_smoothing,
                          1.0 - label_smoothing);
}

LogitGrads discriminator_logit_grads(const Discriminator& disc, const Matrix& mapped_source,
                                     const Matrix& target_batch, double label_smoothing) {
  check_batches(disc, mapped_source, target_batch);
  LogitGrads grads;
  grads.mapped_source = dz_from_logits(disc.logits(mapped_source), 1.0 - label_smoothing);
  grads.target = dz_from_logits(disc.logits(target_batch), label_smoothing);
  return grads;
}

LogitGrads mapping_logit_grads(const Discriminator& disc, const Matrix& mapped_source,
                               const Matrix& target_batch, double label_smoothing) {
  check_batches(disc, mapped_source, target_batch);
  LogitGrads grads;
  grads.mapped_source = dz_from_logits(disc.logits(mapped_source), label_smoothing);
  grads.target = dz_from_logits(disc.logits(target_batch), 1.0 - label_smoothing);
  return grads;
}

DiscriminatorGrads discriminator_gradients(const Discriminator& disc, const Matrix& mapped_source,
                                           const Matrix& target_batch, double label_smoothing) {
  check_batches(disc, mapped_source, target_batch);
  Matrix combined(mapped_source.rows() + target_batch.rows(), mapped_source.cols());
  combined << mapped_source, target_batch;
  Forward f = forward(disc, combined);
  Vector dz(combined.rows());
  dz << dz_from_logits(f.z.head(mapped_source.rows()), 1.0 - label_smoothing),
      dz_from_logits(f.z.tail(target_batch.rows()), label_smoothing);
  return param_grads(disc, combined, f, dz);
}

Matrix mapping_gradient(const Discriminator& disc, const LinearMap& map,
                        const Matrix& source_batch, const Matrix& target_batch,
                        double label_smoothing) {
  Matrix mapped = source_batch * map.matrix().transpose();
  check_batches(disc, mapped, target_batch);
  Forward f = forward(disc, mapped);
  Vector dz = dz_from_logits(f.z, label_smoothing);
  return input_grads(disc, f, dz, mapped.rows()).transpose() * source_batch;
}

double selection_criterion(const EmbeddingSpace& source, const EmbeddingSpace& target,
                           const LinearMap& map, int max_words, int csls_k) {
  if (source.size() == 0 || target.size() == 0) {
    throw std::runtime_error("selection_criterion: empty space");
  }
  std::vector<int> rows = most_frequent_rows(source, max_words);
  CslsIndex index(source, target, map, CslsConfig{csls_k});
  double sum = 0.0;
  for (int r : rows) {
    sum += index.scores(source.vectors.row(r)).maxCoeff();
  }
  return sum / static_cast<double>(rows.size());
}

AdversarialResult train_adversarial(const EmbeddingSpace& source, const EmbeddingSpace& target,
                                    const AdversarialConfig& config) {
  if (source.size() == 0 || target.size() == 0) {
    throw std::runtime_error("train_adversarial: empty space");
  }
  if (config.epochs < 1 || config.steps_per_epoch < 1 || config.batch_size < 1 ||
      config.dis_steps < 1 || config.hidden < 1 || config.criterion_max_words < 1 ||
      config.criterion_csls_k < 1) {
    throw std::runtime_error("train_adversarial: counts must be positive");
  }
  if (config.lr_discriminator <= 0.0 || config.lr_mapping <= 0.0) {
    throw std::runtime_error("train_adversarial: learning rates must be positive");
  }
  if (config.label_smoothing < 0.0 || config.label_smoothing >= 0.5) {
    throw std::runtime_error("train_adversarial: label_smoothing must lie in [0, 0.5)");
  }
  if (config.input_dropout < 0.0 || config.input_dropout >= 1.0) {
    throw std::runtime_error("train_adversarial: input_dropout must lie in [0, 1)");
  }
  if (config.ortho_beta < 0.0) {
    throw std::runtime_error("train_adversarial: ortho_beta must be non-negative");
  }

  const int d1 = source.dim();
  const int d2 = target.dim();
  std::mt19937_64 rng(config.seed);

  Matrix w;
  if (d1 == d2) {
    w = Matrix::Identity(d2, d1);
  } else {
    // Random map with orthonormal rows (or columns when d2 > d1).
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix g(std::max(d1, d2), std::min(d1, d2));
    for (Eigen::Index i = 0; i < g.rows(); ++i) {
      for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = gauss(rng);
    }
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), g.cols());
    w = d2 <= d1 ? Matrix(q.transpose()) : q;
  }

  Discriminator disc = Discriminator::random_init(d2, config.hidden, rng());

  AdversarialResult result;
  LinearMap probe;
  probe.set_matrix(w);
  result.init_criterion = selection_criterion(source, target, probe, config.criterion_max_words,
                                              config.criterion_csls_k);
  result.best_criterion = result.init_criterion;
  result.best_epoch = -1;
  Matrix best_w = w;

  const double smoothing = config.label_smoothing;
  const double keep = 1.0 - config.input_dropout;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  auto dropout_inplace = [&](Matrix& batch) {
    if (config.input_dropout <= 0.0) return;
    for (Eigen::Index i = 0; i < batch.rows(); ++i) {
      for (Eigen::Index j = 0; j < batch.cols(); ++j) {
        batch(i, j) = unit(rng) < keep ? batch(i, j) / keep : 0.0;
      }
    }
  };

  bool diverged = false;
  for (int epoch = 0; epoch < config.epochs && !diverged; ++epoch) {
    double sum_d = 0.0;
    double sum_w = 0.0;
    std::uint64_t count_d = 0;
    std::uint64_t count_w = 0;

    for (int step = 0; step < config.steps_per_epoch && !diverged; ++step) {
      for (int j = 0; j < config.dis_steps; ++j) {
        Matrix batch(2 * config.batch_size, d2);
        batch.topRows(config.batch_size) =
            take_rows(source.vectors, sample_rows(config.batch_size, source.size(), rng)) *
            w.transpose();
        batch.bottomRows(config.batch_size) =
            take_rows(target.vectors, sample_rows(config.batch_size, target.size(), rng));
        dropout_inplace(batch);

        Forward f = forward(disc, batch);
        double loss = loss_from_logits(f.z.head(config.batch_size), f.z.tail(config.batch_size),
                                       1.0 - smoothing, smoothing);
        Vector dz(batch.rows());
        dz << dz_from_logits(f.z.head(config.batch_size), 1.0 - smoothing),
            dz_from_logits(f.z.tail(config.batch_size), smoothing);
        DiscriminatorGrads g = param_grads(disc, batch, f, dz);
        disc.w1 -= config.lr_discriminator * g.w1;
        disc.b1 -= config.lr_discriminator * g.b1;
        disc.w2 -= config.lr_discriminator * g.w2;
        disc.b2 -= config.lr_discriminator * g.b2;
        sum_d += loss;
        ++count_d;
        if (!std::isfinite(loss)) {
          diverged = true;
          break;
        }
      }
      if (diverged) break;

      Matrix s_batch = take_rows(source.vectors, sample_rows(config.batch_size, source.size(), rng));
      Matrix t_batch = take_rows(target.vectors, sample_rows(config.batch_size, target.size(), rng));
      Matrix batch(2 * config.batch_size, d2);
      batch.topRows(config.batch_size) = s_batch * w.transpose();
      batch.bottomRows(config.batch_size) = t_batch;

      Forward f = forward(disc, batch);
      double loss = loss_from_logits(f.z.head(config.batch_size), f.z.tail(config.batch_size),
                                     smoothing, 1.0 - smoothing);
      Vector dz_s = dz_from_logits(f.z.head(config.batch_size), smoothing);
      Matrix dw = input_grads(disc, f, dz_s, config.batch_size).transpose() * s_batch;
      w -= config.lr_mapping * dw;
      if (config.ortho_beta > 0.0) {
        w = (1.0 + config.ortho_beta) * w - config.ortho_beta * (w * w.transpose()) * w;
      }
      sum_w += loss;
      ++count_w;
      if (!std::isfinite(loss) || !w.allFinite()) diverged = true;
    }

    if (diverged) break;

    AdversarialEpoch entry;
    entry.discriminator_loss = sum_d / static_cast<double>(count_d);
    entry.mapping_loss = sum_w / static_cast<double>(count_w);
    probe.set_matrix(w);
    entry.criterion = selection_criterion(source, target, probe, config.criterion_max_words,
                                          config.criterion_csls_k);
    Eigen::JacobiSVD<Matrix> svd(w);
    entry.w_min_singular = svd.singularValues().minCoeff();
    entry.w_max_singular = svd.singularValues().maxCoeff();
    result.trace.push_back(entry);

    if (entry.criterion > result.best_criterion) {
      result.best_criterion = entry.criterion;
      result.best_epoch = epoch;
      best_w = w;
    }
  }

  result.aborted = diverged;
  result.map.set_matrix(best_w);
  return result;
}

}  // namespace embalign

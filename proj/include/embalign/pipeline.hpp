#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "embalign/adversarial.hpp"
#include "embalign/embedding_space.hpp"
#include "embalign/evaluation.hpp"
#include "embalign/refine.hpp"
#include "embalign/types.hpp"

namespace embalign {

// Paired random spaces: target rows are source rows carried through a seeded
// random rotation plus isotropic noise, with token names permuted by a seeded
// bijection so row order reveals nothing. Source rows are Gaussian with a
// decaying per-axis scale and a nonzero mean, so the two distributions agree
// under exactly one rotation. Frequencies follow a 1/rank curve on the source
// side and mirror it across the pairing.
struct SyntheticBenchmark {
  EmbeddingSpace source;
  EmbeddingSpace target;
  BilingualDictionary train;
  BilingualDictionary holdout;
  BilingualDictionary full;       // train and holdout together, source order
  Matrix rotation;                // the planted map, dim x dim
  bool size_warning = false;      // vocab below twice the dimension
};

SyntheticBenchmark make_synthetic_benchmark(int vocab_size, int dim, double noise_sigma,
                                            std::uint64_t seed, double holdout_fraction);

// Writes src.vec/tgt.vec (plus .freq sidecars), the three dictionaries,
// rotation.txt, and meta.json into out_dir.
void save_benchmark(const SyntheticBenchmark& benchmark, const std::string& out_dir);

struct PipelineConfig {
  std::string configuration = "A";  // Astar | A | B | F | synthetic
  std::string out_dir;
  std::uint64_t seed = 1;

  // benchmark
  int vocab = 500;
  int dim = 50;
  double sigma = 0.1;
  double holdout = 0.2;

  // speech-side instances
  int per_word = 10;
  double inst_sigma = 0.05;
  double contamination = 0.0;  // the F preset forces 0.5 and doubles inst_sigma
  int eval_per_word = 2;

  // grouping (B and F)
  int kmeans_k = 0;  // 0 = benchmark vocab
  int kmeans_restarts = 3;
  int kmeans_iters = 50;
  double kmeans_tol = 1e-6;

  // alignment; learning rates and step counts sized for these small spaces
  AdversarialConfig align;
  int align_restarts = 2;  // adversarial runs per stage, best criterion wins
  RefineConfig refinement;

  // evaluation
  std::string metric = "csls";
  int csls_k = 10;
  std::vector<int> eval_ks = {1, 5};
  bool normalize = true;

  PipelineConfig();
};

// Parses the flat key=value format ('#' starts a comment). Unknown keys and
// unparsable values are errors with line numbers.
PipelineConfig load_pipeline_config(const std::string& path);

struct PipelineResult {
  EvalReport evaluation;
  EvalReport baseline;
  nlohmann::ordered_json report;  // the bundle written to report.json
};

// Runs benchmark generation, instance generation, grouping, alignment, and
// evaluation per the chosen configuration, writing every stage artifact into
// out_dir and reloading it before the next stage. Errors carry the stage
// name.
PipelineResult run_pipeline(const PipelineConfig& config);

}  // namespace embalign

#include <charconv>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "embalign/adversarial.hpp"
#include "embalign/cluster.hpp"
#include "embalign/corpus.hpp"
#include "embalign/embedding_space.hpp"
#include "embalign/evaluation.hpp"
#include "embalign/io.hpp"
#include "embalign/pipeline.hpp"
#include "embalign/refine.hpp"
#include "embalign/retrieval.hpp"
#include "embalign/types.hpp"

namespace fs = std::filesystem;
using namespace embalign;

namespace {

void write_json_file(const nlohmann::ordered_json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

Metric parse_metric(const std::string& name) {
  if (name == "cosine") return Metric::kCosine;
  if (name == "csls") return Metric::kCsls;
  throw std::runtime_error("unknown metric '" + name + "' (expected cosine or csls)");
}

std::vector<int> parse_ks(const std::string& text) {
  std::vector<int> out;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    std::size_t comma = text.find(',', begin);
    std::string item = text.substr(
        begin, comma == std::string::npos ? std::string::npos : comma - begin);
    if (!item.empty()) {
      int v = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        throw std::runtime_error("--ks: expected comma-separated integers, got '" + text + "'");
      }
      out.push_back(v);
    }
    if (comma == std::string::npos) break;
    begin = comma + 1;
  }
  if (out.empty()) throw std::runtime_error("--ks: expected at least one value");
  return out;
}

std::vector<std::string> load_query_tokens(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path + ": cannot open for reading");
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    if (fields.size() != 1) {
      throw std::runtime_error(path + ": expected one token per line, got '" + line + "'");
    }
    tokens.emplace_back(fields[0]);
  }
  if (tokens.empty()) throw std::runtime_error(path + ": no query tokens");
  return tokens;
}

// Instance vectors plus labels: an explicit sidecar wins, then the
// conventional "<path>.labels" file, and a plain embedding file falls back to
// token-as-label (type-level queries).
InstanceSet load_queries(const std::string& vectors_path, const std::string& labels_path) {
  if (!labels_path.empty()) return load_instances(vectors_path, labels_path);
  const std::string sidecar = vectors_path + ".labels";
  if (fs::exists(sidecar)) return load_instances(vectors_path, sidecar);
  EmbeddingSpace space = load_embeddings(vectors_path);
  InstanceSet set;
  set.vectors = std::move(space.vectors);
  set.labels = std::move(space.vocab);
  return set;
}

nlohmann::ordered_json adversarial_trace_json(const AdversarialResult& result) {
  nlohmann::ordered_json j;
  j["init_criterion"] = result.init_criterion;
  j["best_criterion"] = result.best_criterion;
  j["best_epoch"] = result.best_epoch;
  j["aborted"] = result.aborted;
  nlohmann::ordered_json epochs = nlohmann::ordered_json::array();
  for (const auto& e : result.trace) {
    nlohmann::ordered_json entry;
    entry["discriminator_loss"] = e.discriminator_loss;
    entry["mapping_loss"] = e.mapping_loss;
    entry["criterion"] = e.criterion;
    entry["w_min_singular"] = e.w_min_singular;
    entry["w_max_singular"] = e.w_max_singular;
    epochs.push_back(entry);
  }
  j["epochs"] = epochs;
  return j;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unsupervised linear alignment of embedding spaces"};
  app.require_subcommand(1);
  std::function<void()> run;

  // ---- train-sgns ----------------------------------------------------
  std::string sg_corpus, sg_out;
  SgnsConfig sg_cfg;
  {
    auto* c = app.add_subcommand("train-sgns",
                                 "train skip-gram embeddings with negative sampling");
    c->add_option("--corpus", sg_corpus, "one sentence per line")->required();
    c->add_option("--dim", sg_cfg.dim, "embedding dimension")->capture_default_str();
    c->add_option("--window", sg_cfg.window_size, "context window size")->capture_default_str();
    c->add_option("--negatives", sg_cfg.negatives_per_positive, "negatives per positive pair")
        ->capture_default_str();
    c->add_option("--epochs", sg_cfg.epochs, "training epochs")->capture_default_str();
    c->add_option("--min-count", sg_cfg.min_count, "drop tokens seen fewer times")
        ->capture_default_str();
    c->add_option("--lr", sg_cfg.learning_rate, "initial learning rate")->capture_default_str();
    c->add_option("--seed", sg_cfg.seed, "random seed")->capture_default_str();
    c->add_option("--out", sg_out, "embedding file to write (plus .freq sidecar)")->required();
    c->callback([&] {
      run = [&] {
        SgnsResult result = train_sgns(load_corpus(sg_corpus), sg_cfg);
        save_embeddings(result.space, sg_out);
        save_frequencies(result.space, sg_out + ".freq");
      };
    });
  }

  // ---- gen-instances -------------------------------------------------
  std::string gi_base, gi_out;
  int gi_per_word = 20;
  double gi_sigma = 0.1, gi_contamination = 0.0;
  std::uint64_t gi_seed = 1;
  {
    auto* c = app.add_subcommand("gen-instances",
                                 "sample noisy per-occurrence vectors from a base space");
    c->add_option("--base", gi_base, "base embedding file")->required();
    c->add_option("--per-word", gi_per_word, "instances per base word")->capture_default_str();
    c->add_option("--sigma", gi_sigma, "noise scale")->capture_default_str();
    c->add_option("--contamination", gi_contamination,
                  "probability an instance mixes two words")
        ->capture_default_str();
    c->add_option("--seed", gi_seed, "random seed")->capture_default_str();
    c->add_option("--out", gi_out, "instance file to write (plus .labels sidecar)")->required();
    c->callback([&] {
      run = [&] {
        EmbeddingSpace base = load_embeddings(gi_base);
        InstanceSet instances =
            generate_instances(base, gi_per_word, gi_sigma, gi_contamination, gi_seed);
        save_instances(instances, gi_out, gi_out + ".labels");
      };
    });
  }

  // ---- cluster --------------------------------------------------------
  std::string cl_instances, cl_labels, cl_out, cl_report, cl_assignments;
  KMeansConfig cl_cfg;
  cl_cfg.restarts = 10;
  {
    auto* c = app.add_subcommand("cluster", "k-means over instance vectors");
    c->add_option("--instances", cl_instances, "instance vector file")->required();
    c->add_option("--labels", cl_labels, "instance label sidecar, enables purity");
    c->add_option("--k", cl_cfg.k, "number of clusters")->required();
    c->add_option("--restarts", cl_cfg.restarts, "independent restarts")->capture_default_str();
    c->add_option("--iters", cl_cfg.max_iters, "iteration cap per restart")
        ->capture_default_str();
    c->add_option("--tol", cl_cfg.tol, "centroid movement tolerance")->capture_default_str();
    c->add_option("--seed", cl_cfg.seed, "random seed")->capture_default_str();
    c->add_option("--out", cl_out, "averaged cluster embedding file to write")->required();
    c->add_option("--assignments", cl_assignments, "per-instance cluster id file to write");
    c->add_option("--report", cl_report, "JSON report to write");
    c->callback([&] {
      run = [&] {
        InstanceSet instances = load_queries(cl_instances, cl_labels);
        KMeansResult km = kmeans_cluster(instances.vectors, cl_cfg);
        EmbeddingSpace clusters = average_clusters(instances, km.assignment, cl_cfg.k);
        save_embeddings(clusters, cl_out);
        save_frequencies(clusters, cl_out + ".freq");
        if (!cl_assignments.empty()) {
          std::ofstream out(cl_assignments);
          if (!out) throw std::runtime_error(cl_assignments + ": cannot open for writing");
          EmbeddingSpace named = load_embeddings(cl_instances);
          for (int i = 0; i < instances.size(); ++i) {
            out << named.vocab[static_cast<std::size_t>(i)] << ' '
                << km.assignment[static_cast<std::size_t>(i)] << '\n';
          }
          if (!out) throw std::runtime_error(cl_assignments + ": write failed");
        }
        if (!cl_report.empty()) {
          nlohmann::ordered_json j;
          j["k"] = cl_cfg.k;
          j["restarts"] = cl_cfg.restarts;
          j["clusters"] = clusters.size();
          j["wcss"] = km.wcss;
          j["iterations"] = km.iterations;
          j["wcss_trace"] = km.wcss_trace;
          j["restart_wcss"] = km.restart_wcss;
          if (!cl_labels.empty()) {
            j["purity"] = cluster_purity(km.assignment, instances.labels, cl_cfg.k);
          }
          write_json_file(j, cl_report);
        }
      };
    });
  }

  // ---- align ----------------------------------------------------------
  std::string al_src, al_tgt, al_out, al_trace;
  AdversarialConfig al_cfg;
  double al_lr = 1e-3;
  bool al_normalize = true;
  {
    auto* c = app.add_subcommand("align", "adversarial fit of a source-to-target linear map");
    c->add_option("--src", al_src, "source embedding file")->required();
    c->add_option("--tgt", al_tgt, "target embedding file")->required();
    c->add_option("--epochs", al_cfg.epochs, "training epochs")->capture_default_str();
    c->add_option("--steps", al_cfg.steps_per_epoch, "iterations per epoch")
        ->capture_default_str();
    c->add_option("--batch", al_cfg.batch_size, "batch size per side")->capture_default_str();
    c->add_option("--lr", al_lr, "learning rate for both players")->capture_default_str();
    c->add_option("--ortho-beta", al_cfg.ortho_beta, "orthogonality pull-back strength")
        ->capture_default_str();
    c->add_option("--smoothing", al_cfg.label_smoothing, "label smoothing")
        ->capture_default_str();
    c->add_option("--dropout", al_cfg.input_dropout, "discriminator input dropout")
        ->capture_default_str();
    c->add_option("--dis-steps", al_cfg.dis_steps, "discriminator updates per mapping update")
        ->capture_default_str();
    c->add_option("--hidden", al_cfg.hidden, "discriminator hidden units")
        ->capture_default_str();
    c->add_option("--criterion-words", al_cfg.criterion_max_words,
                  "most frequent words scored by the selection criterion")
        ->capture_default_str();
    c->add_option("--csls-k", al_cfg.criterion_csls_k, "criterion neighborhood size")
        ->capture_default_str();
    c->add_option("--normalize", al_normalize, "unit-normalize both spaces first")
        ->capture_default_str();
    c->add_option("--seed", al_cfg.seed, "random seed")->capture_default_str();
    c->add_option("--out", al_out, "mapping file to write")->required();
    c->add_option("--trace", al_trace, "JSON training trace to write");
    c->callback([&] {
      run = [&] {
        al_cfg.lr_discriminator = al_lr;
        al_cfg.lr_mapping = al_lr;
        EmbeddingSpace src = load_embeddings_with_sidecar(al_src);
        EmbeddingSpace tgt = load_embeddings_with_sidecar(al_tgt);
        if (al_normalize) {
          src = unit_normalize(src);
          tgt = unit_normalize(tgt);
        }
        AdversarialResult result = train_adversarial(src, tgt, al_cfg);
        save_linear_map(result.map, al_out);
        if (!al_trace.empty()) write_json_file(adversarial_trace_json(result), al_trace);
        if (result.aborted) {
          std::cerr << "warning: training aborted on a non-finite value; "
                       "wrote the best checkpoint reached\n";
        }
      };
    });
  }

  // ---- refine ----------------------------------------------------------
  std::string rf_src, rf_tgt, rf_w, rf_out, rf_trace;
  RefineConfig rf_cfg;
  bool rf_normalize = true;
  {
    auto* c = app.add_subcommand(
        "refine", "iterate mutual-neighbor dictionary induction and closed-form re-solving");
    c->add_option("--src", rf_src, "source embedding file")->required();
    c->add_option("--tgt", rf_tgt, "target embedding file")->required();
    c->add_option("--w", rf_w, "initial mapping file")->required();
    c->add_option("--dict-max-rank", rf_cfg.dict_max_rank,
                  "candidate pool size per side, by frequency")
        ->capture_default_str();
    c->add_option("--csls-k", rf_cfg.csls_k, "neighborhood size")->capture_default_str();
    c->add_option("--iters", rf_cfg.iterations, "refinement rounds")->capture_default_str();
    c->add_option("--orthogonal", rf_cfg.orthogonal, "constrain the re-solve to a rotation")
        ->capture_default_str();
    c->add_option("--normalize", rf_normalize, "unit-normalize both spaces first")
        ->capture_default_str();
    c->add_option("--out", rf_out, "refined mapping file to write")->required();
    c->add_option("--trace", rf_trace, "JSON dictionary-size trace to write");
    c->callback([&] {
      run = [&] {
        EmbeddingSpace src = load_embeddings_with_sidecar(rf_src);
        EmbeddingSpace tgt = load_embeddings_with_sidecar(rf_tgt);
        if (rf_normalize) {
          src = unit_normalize(src);
          tgt = unit_normalize(tgt);
        }
        RefineResult result = refine(src, tgt, load_linear_map(rf_w), rf_cfg);
        save_linear_map(result.map, rf_out);
        if (!rf_trace.empty()) {
          nlohmann::ordered_json j;
          j["iterations"] = rf_cfg.iterations;
          j["dictionary_sizes"] = result.dictionary_sizes;
          write_json_file(j, rf_trace);
        }
      };
    });
  }

  // ---- supervised-align -------------------------------------------------
  std::string sa_src, sa_tgt, sa_dict, sa_out;
  bool sa_orthogonal = true, sa_normalize = true;
  {
    auto* c = app.add_subcommand("supervised-align",
                                 "closed-form mapping fit on a seed dictionary");
    c->add_option("--src", sa_src, "source embedding file")->required();
    c->add_option("--tgt", sa_tgt, "target embedding file")->required();
    c->add_option("--dict", sa_dict, "seed dictionary file")->required();
    c->add_option("--orthogonal", sa_orthogonal, "constrain the solve to a rotation")
        ->capture_default_str();
    c->add_option("--normalize", sa_normalize, "unit-normalize both spaces first")
        ->capture_default_str();
    c->add_option("--out", sa_out, "mapping file to write")->required();
    c->callback([&] {
      run = [&] {
        EmbeddingSpace src = load_embeddings_with_sidecar(sa_src);
        EmbeddingSpace tgt = load_embeddings_with_sidecar(sa_tgt);
        if (sa_normalize) {
          src = unit_normalize(src);
          tgt = unit_normalize(tgt);
        }
        MappingSolution sol =
            solve_supervised(src, tgt, load_dictionary(sa_dict), sa_orthogonal);
        save_linear_map(sol.map, sa_out);
        if (sol.underdetermined) {
          std::cerr << "warning: fewer dictionary pairs than source dimensions; "
                       "the solve is underdetermined\n";
        }
      };
    });
  }

  // ---- retrieve -----------------------------------------------------------
  std::string rt_src, rt_tgt, rt_w, rt_queries, rt_out, rt_metric = "csls";
  CslsConfig rt_csls;
  int rt_topk = 5;
  {
    auto* c = app.add_subcommand("retrieve", "top-k target neighbors of source query words");
    c->add_option("--src", rt_src, "source embedding file")->required();
    c->add_option("--tgt", rt_tgt, "target embedding file")->required();
    c->add_option("--w", rt_w, "mapping file")->required();
    c->add_option("--metric", rt_metric, "cosine or csls")->capture_default_str();
    c->add_option("--csls-k", rt_csls.k_neighbors, "neighborhood size")->capture_default_str();
    c->add_option("--topk", rt_topk, "neighbors per query")->capture_default_str();
    c->add_option("--queries", rt_queries, "source tokens, one per line")->required();
    c->add_option("--out", rt_out, "TSV results file to write")->required();
    c->callback([&] {
      run = [&] {
        Metric metric = parse_metric(rt_metric);
        EmbeddingSpace src = load_embeddings_with_sidecar(rt_src);
        EmbeddingSpace tgt = load_embeddings_with_sidecar(rt_tgt);
        LinearMap w = load_linear_map(rt_w);
        std::vector<std::string> queries = load_query_tokens(rt_queries);

        std::ofstream out(rt_out);
        if (!out) throw std::runtime_error(rt_out + ": cannot open for writing");
        std::optional<CslsIndex> index;
        if (metric == Metric::kCsls) index.emplace(src, tgt, w, rt_csls);
        for (const auto& token : queries) {
          int row = src.row_of(token);
          if (row < 0) {
            throw std::runtime_error("query token '" + token + "' is not in the source space");
          }
          Vector q = src.vectors.row(row).transpose();
          std::vector<ScoredToken> hits =
              index ? index->topk(q, rt_topk)
                    : cosine_topk(w.matrix() * q, tgt, rt_topk);
          for (std::size_t r = 0; r < hits.size(); ++r) {
            out << token << '\t' << (r + 1) << '\t' << hits[r].token << '\t'
                << format_value(hits[r].score) << '\n';
          }
        }
        if (!out) throw std::runtime_error(rt_out + ": write failed");
      };
    });
  }

  // ---- evaluate -------------------------------------------------------------
  std::string ev_task, ev_queries, ev_labels, ev_src, ev_tgt, ev_w, ev_dict, ev_dict_back,
      ev_report, ev_metric = "csls", ev_ks_text;
  CslsConfig ev_csls;
  {
    auto* c = app.add_subcommand("evaluate", "score retrieval against gold answers");
    c->add_option("--task", ev_task, "classify, translate, or synonyms")->required();
    c->add_option("--queries", ev_queries, "query vector file")->required();
    c->add_option("--labels", ev_labels, "query label sidecar (default <queries>.labels)");
    c->add_option("--src", ev_src, "source embedding file (translate)");
    c->add_option("--tgt", ev_tgt, "target embedding file")->required();
    c->add_option("--w", ev_w, "mapping file")->required();
    c->add_option("--dict", ev_dict, "dictionary file (translate, synonyms)");
    c->add_option("--dict-back", ev_dict_back, "reverse dictionary file (synonyms)");
    c->add_option("--metric", ev_metric, "cosine or csls")->capture_default_str();
    c->add_option("--csls-k", ev_csls.k_neighbors, "neighborhood size")->capture_default_str();
    c->add_option("--ks", ev_ks_text, "precision cutoffs, comma-separated (default 1,5)");
    c->add_option("--report", ev_report, "JSON report to write")->required();
    c->callback([&] {
      run = [&] {
        Metric metric = parse_metric(ev_metric);
        InstanceSet queries = load_queries(ev_queries, ev_labels);
        EmbeddingSpace tgt = load_embeddings_with_sidecar(ev_tgt);
        LinearMap w = load_linear_map(ev_w);
        std::vector<int> ks = ev_ks_text.empty() ? std::vector<int>{1, 5}
                                                 : parse_ks(ev_ks_text);

        EvalReport report;
        if (ev_task == "classify") {
          report = classify(queries, tgt, w, metric, ev_csls);
        } else if (ev_task == "translate") {
          if (ev_src.empty()) throw std::runtime_error("translate requires --src");
          if (ev_dict.empty()) throw std::runtime_error("translate requires --dict");
          EmbeddingSpace src = load_embeddings_with_sidecar(ev_src);
          report = translate(queries, src, tgt, w, load_dictionary(ev_dict), metric, ks,
                             ev_csls);
        } else if (ev_task == "synonyms") {
          if (ev_dict.empty() || ev_dict_back.empty()) {
            throw std::runtime_error("synonyms requires --dict and --dict-back");
          }
          SynonymSets synonyms =
              derive_synonyms(load_dictionary(ev_dict), load_dictionary(ev_dict_back));
          report = retrieve_synonyms(queries, tgt, w, synonyms, metric, ks, ev_csls);
        } else {
          throw std::runtime_error("unknown task '" + ev_task +
                                   "' (expected classify, translate, or synonyms)");
        }

        nlohmann::ordered_json echo;
        echo["task"] = ev_task;
        echo["queries"] = ev_queries;
        if (!ev_labels.empty()) echo["labels"] = ev_labels;
        if (!ev_src.empty()) echo["src"] = ev_src;
        echo["tgt"] = ev_tgt;
        echo["w"] = ev_w;
        if (!ev_dict.empty()) echo["dict"] = ev_dict;
        if (!ev_dict_back.empty()) echo["dict_back"] = ev_dict_back;
        echo["metric"] = ev_metric;
        echo["csls_k"] = ev_csls.k_neighbors;
        report.config_echo = echo;
        write_json_file(report.to_json(), ev_report);
      };
    });
  }

  // ---- pipeline ----------------------------------------------------------
  std::string pl_config;
  {
    auto* c = app.add_subcommand("pipeline",
                                 "end-to-end benchmark, grouping, alignment, and evaluation");
    c->add_option("--config", pl_config, "flat key=value configuration file")->required();
    c->callback([&] {
      run = [&] { run_pipeline(load_pipeline_config(pl_config)); };
    });
  }

  // ---- make-benchmark -------------------------------------------------------
  std::string mb_out_dir;
  int mb_vocab = 2000, mb_dim = 50;
  double mb_sigma = 0.0, mb_holdout = 0.2;
  std::uint64_t mb_seed = 1;
  {
    auto* c = app.add_subcommand("make-benchmark",
                                 "paired random spaces with a planted rotation");
    c->add_option("--vocab", mb_vocab, "words per side")->capture_default_str();
    c->add_option("--dim", mb_dim, "embedding dimension")->capture_default_str();
    c->add_option("--sigma", mb_sigma, "target-side noise scale")->capture_default_str();
    c->add_option("--seed", mb_seed, "random seed")->capture_default_str();
    c->add_option("--holdout", mb_holdout, "fraction of pairs held out")
        ->capture_default_str();
    c->add_option("--out-dir", mb_out_dir, "directory to write the benchmark into")
        ->required();
    c->callback([&] {
      run = [&] {
        SyntheticBenchmark bench =
            make_synthetic_benchmark(mb_vocab, mb_dim, mb_sigma, mb_seed, mb_holdout);
        save_benchmark(bench, mb_out_dir);
        if (bench.size_warning) {
          std::cerr << "warning: vocab " << mb_vocab << " is below twice the dimension "
                    << mb_dim << "; retrieval scores will be unstable\n";
        }
      };
    });
  }

  CLI11_PARSE(app, argc, argv);

  const std::string stage =
      app.get_subcommands().empty() ? "cli" : app.get_subcommands().front()->get_name();
  try {
    run();
  } catch (const std::exception& e) {
    std::cerr << "error: " << stage << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "embalign/embedding_space.hpp"
#include "embalign/types.hpp"

namespace embalign {

// Text embedding format: first line "<row-count> <dim>", then one line per
// token: "<token> <v1> ... <vdim>", single-space separated.
EmbeddingSpace load_embeddings(const std::string& path,
                               std::optional<int> expected_dim = std::nullopt);
void save_embeddings(const EmbeddingSpace& space, const std::string& path);

// Dictionary format: "<source-token> <target-token>" per line. Duplicate
// pairs are dropped, order of first appearance kept.
BilingualDictionary load_dictionary(const std::string& path);
void save_dictionary(const BilingualDictionary& dict, const std::string& path);

// Frequencies sidecar: "<token> <count>" per line, one line per token of the
// space, any order. Counts for tokens not in `vocab` are an error.
std::vector<std::uint64_t> load_frequencies(const std::string& path,
                                            const std::vector<std::string>& vocab);
void save_frequencies(const EmbeddingSpace& space, const std::string& path);

// Loads a space and, when "<path>.freq" exists, attaches its counts.
EmbeddingSpace load_embeddings_with_sidecar(const std::string& path,
                                            std::optional<int> expected_dim = std::nullopt);

// Mapping file: header "d2 d1", then d2 rows of d1 values.
LinearMap load_linear_map(const std::string& path);
void save_linear_map(const LinearMap& map, const std::string& path);

// Shortest decimal rendering that parses back to exactly the same double.
std::string format_value(double v);

// Locale-independent double parse; returns false on trailing garbage.
bool parse_value(std::string_view text, double& out);

// Whitespace-splits a line into fields.
std::vector<std::string_view> split_fields(std::string_view line);

}  // namespace embalign

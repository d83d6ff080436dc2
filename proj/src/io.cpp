#include "embalign/io.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace embalign {

namespace {

std::runtime_error file_error(const std::string& path, const std::string& what) {
  return std::runtime_error(path + ": " + what);
}

std::runtime_error line_error(const std::string& path, int line_no, const std::string& what) {
  return std::runtime_error(path + ":" + std::to_string(line_no) + ": " + what);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw file_error(path, "cannot open for reading");
  return in;
}

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw file_error(path, "cannot open for writing");
  return out;
}

bool parse_int(std::string_view text, long long& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

// Parses "rows dim" style headers and dense value rows shared by the
// embedding and mapping formats.
struct DenseTextReader {
  std::string path;
  std::ifstream in;
  int line_no = 0;

  explicit DenseTextReader(const std::string& p) : path(p), in(open_input(p)) {}

  bool next_line(std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    return true;
  }

  std::pair<long long, long long> read_header() {
    std::string line;
    if (!next_line(line)) throw file_error(path, "empty file, expected header");
    auto fields = split_fields(line);
    long long rows = 0, cols = 0;
    if (fields.size() != 2 || !parse_int(fields[0], rows) || !parse_int(fields[1], cols) ||
        rows < 0 || cols < 0) {
      throw line_error(path, line_no, "malformed header, expected '<row-count> <dim>'");
    }
    return {rows, cols};
  }

  // Parses `dim` values from fields[first_value..]; validates count and
  // finiteness.
  void read_values(const std::vector<std::string_view>& fields, std::size_t first_value,
                   long long dim,
                   Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
    if (static_cast<long long>(fields.size() - first_value) != dim) {
      throw line_error(path, line_no,
                       "expected " + std::to_string(dim) + " values, found " +
                           std::to_string(fields.size() - first_value));
    }
    for (long long j = 0; j < dim; ++j) {
      double v = 0.0;
      if (!parse_value(fields[first_value + static_cast<std::size_t>(j)], v)) {
        throw line_error(path, line_no, "unparsable value '" +
                                            std::string(fields[first_value + static_cast<std::size_t>(j)]) + "'");
      }
      if (!std::isfinite(v)) throw line_error(path, line_no, "non-finite value");
      out(j) = v;
    }
  }
};

}  // namespace

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
    if (i > start) fields.push_back(line.substr(start, i - start));
  }
  return fields;
}

std::string format_value(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_value: to_chars failed");
  return std::string(buf, ptr);
}

bool parse_value(std::string_view text, double& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

EmbeddingSpace load_embeddings(const std::string& path, std::optional<int> expected_dim) {
  DenseTextReader reader(path);
  auto [rows, dim] = reader.read_header();
  if (expected_dim && dim != *expected_dim) {
    throw file_error(path, "dimension " + std::to_string(dim) + " does not match expected " +
                               std::to_string(*expected_dim));
  }

  std::vector<std::string> vocab;
  vocab.reserve(static_cast<std::size_t>(rows));
  Matrix vectors(rows, dim);
  std::unordered_set<std::string_view> seen;
  seen.reserve(static_cast<std::size_t>(rows));

  std::string line;
  long long row = 0;
  while (reader.next_line(line)) {
    auto fields = split_fields(line);
    if (fields.empty()) {
      throw line_error(path, reader.line_no, "blank line inside embedding file");
    }
    if (row >= rows) {
      throw line_error(path, reader.line_no,
                       "more rows than the header's " + std::to_string(rows));
    }
    vocab.emplace_back(fields[0]);
    if (!seen.insert(vocab.back()).second) {
      throw line_error(path, reader.line_no, "duplicate token '" + vocab.back() + "'");
    }
    reader.read_values(fields, 1, dim, vectors.row(row));
    ++row;
  }
  if (row != rows) {
    throw file_error(path, "header declares " + std::to_string(rows) + " rows but file has " +
                               std::to_string(row));
  }
  return EmbeddingSpace::create(std::move(vocab), std::move(vectors));
}

void save_embeddings(const EmbeddingSpace& space, const std::string& path) {
  auto out = open_output(path);
  out << space.size() << ' ' << space.dim() << '\n';
  for (int i = 0; i < space.size(); ++i) {
    out << space.vocab[static_cast<std::size_t>(i)];
    for (int j = 0; j < space.dim(); ++j) out << ' ' << format_value(space.vectors(i, j));
    out << '\n';
  }
  if (!out) throw file_error(path, "write failed");
}

BilingualDictionary load_dictionary(const std::string& path) {
  auto in = open_input(path);
  BilingualDictionary dict;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw line_error(path, line_no, "expected exactly two fields, found " +
                                          std::to_string(fields.size()));
    }
    std::pair<std::string, std::string> pair{std::string(fields[0]), std::string(fields[1])};
    if (seen.insert(pair).second) dict.pairs.push_back(std::move(pair));
  }
  return dict;
}

void save_dictionary(const BilingualDictionary& dict, const std::string& path) {
  auto out = open_output(path);
  for (const auto& [s, t] : dict.pairs) out << s << ' ' << t << '\n';
  if (!out) throw file_error(path, "write failed");
}

std::vector<std::uint64_t> load_frequencies(const std::string& path,
                                            const std::vector<std::string>& vocab) {
  auto in = open_input(path);
  std::unordered_map<std::string, std::size_t> index;
  index.reserve(vocab.size());
  for (std::size_t i = 0; i < vocab.size(); ++i) index.emplace(vocab[i], i);

  std::vector<std::uint64_t> counts(vocab.size(), 0);
  std::vector<bool> filled(vocab.size(), false);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    auto fields = split_fields(line);
    if (fields.size() != 2) {
      throw line_error(path, line_no, "expected '<token> <count>'");
    }
    auto it = index.find(std::string(fields[0]));
    if (it == index.end()) {
      throw line_error(path, line_no, "token '" + std::string(fields[0]) + "' not in space");
    }
    long long count = 0;
    if (!parse_int(fields[1], count) || count < 0) {
      throw line_error(path, line_no, "invalid count '" + std::string(fields[1]) + "'");
    }
    counts[it->second] = static_cast<std::uint64_t>(count);
    filled[it->second] = true;
  }
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    if (!filled[i]) throw file_error(path, "missing count for token '" + vocab[i] + "'");
  }
  return counts;
}

void save_frequencies(const EmbeddingSpace& space, const std::string& path) {
  if (!space.has_frequencies()) {
    throw file_error(path, "space has no frequencies to save");
  }
  auto out = open_output(path);
  for (int i = 0; i < space.size(); ++i) {
    out << space.vocab[static_cast<std::size_t>(i)] << ' '
        << space.frequencies[static_cast<std::size_t>(i)] << '\n';
  }
  if (!out) throw file_error(path, "write failed");
}

EmbeddingSpace load_embeddings_with_sidecar(const std::string& path,
                                            std::optional<int> expected_dim) {
  EmbeddingSpace space = load_embeddings(path, expected_dim);
  std::string freq_path = path + ".freq";
  if (std::filesystem::exists(freq_path)) {
    auto counts = load_frequencies(freq_path, space.vocab);
    space = EmbeddingSpace::create(space.vocab, space.vectors, std::move(counts));
  }
  return space;
}

LinearMap load_linear_map(const std::string& path) {
  DenseTextReader reader(path);
  auto [d2, d1] = reader.read_header();
  Matrix m(d2, d1);
  std::string line;
  long long row = 0;
  while (reader.next_line(line)) {
    auto fields = split_fields(line);
    if (fields.empty()) throw line_error(path, reader.line_no, "blank line inside mapping file");
    if (row >= d2) throw line_error(path, reader.line_no, "more rows than header declares");
    reader.read_values(fields, 0, d1, m.row(row));
    ++row;
  }
  if (row != d2) {
    throw file_error(path, "header declares " + std::to_string(d2) + " rows but file has " +
                               std::to_string(row));
  }
  return LinearMap(std::move(m));
}

void save_linear_map(const LinearMap& map, const std::string& path) {
  auto out = open_output(path);
  const Matrix& m = map.matrix();
  out << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ' ';
      out << format_value(m(i, j));
    }
    out << '\n';
  }
  if (!out) throw file_error(path, "write failed");
}

}  // namespace embalign

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hypermux/errors.hpp"
#include "hypermux/graph.hpp"

namespace hypermux {
namespace {

namespace fs = std::filesystem;

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

long long parse_integer(const std::string& token, const std::string& file, std::size_t line_no) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(file, line_no, "expected an integer, got '" + token + "'");
  }
  return v;
}

double parse_real(std::string token, const std::string& file, std::size_t line_no) {
  while (!token.empty() && (token.back() == ' ' || token.back() == '\r' || token.back() == '\t')) token.pop_back();
  auto start = token.find_first_not_of(" \t");
  if (start == std::string::npos) throw ParseError(file, line_no, "empty numeric field");
  token = token.substr(start);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError(file, line_no, "expected a real number, got '" + token + "'");
  }
  return v;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  return out;
}

SparseMatrix read_edges(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  const std::string file = path.string();
  std::vector<Edge> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!(ss >> a >> b) || (ss >> extra)) throw ParseError(file, line_no, "expected two node ids");
    const long long i = parse_integer(a, file, line_no);
    const long long j = parse_integer(b, file, line_no);
    for (long long id : {i, j}) {
      if (id < 0 || static_cast<std::size_t>(id) >= n) {
        throw ParseError(file, line_no, "node id " + std::to_string(id) + " out of range [0, " + std::to_string(n) + ")");
      }
    }
    edges.emplace_back(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  }
  return adjacency_from_edges(n, edges);
}

Matrix read_features(const fs::path& path, std::size_t n, std::size_t f) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  const std::string file = path.string();
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  std::string line;
  std::size_t line_no = 0;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    if (row >= n) throw ParseError(file, line_no, "more than " + std::to_string(n) + " feature rows");
    const auto fields = split_commas(line);
    if (fields.size() != f) {
      throw ParseError(file, line_no, "expected " + std::to_string(f) + " values, got " + std::to_string(fields.size()));
    }
    for (std::size_t c = 0; c < f; ++c) {
      x(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = parse_real(fields[c], file, line_no);
    }
    ++row;
  }
  if (row != n) throw ParseError(file, line_no, "expected " + std::to_string(n) + " feature rows, got " + std::to_string(row));
  return x;
}

std::vector<LabelSet> read_labels(const fs::path& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  const std::string file = path.string();
  std::vector<LabelSet> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (blank(line)) continue;
    if (labels.size() >= n) throw ParseError(file, line_no, "more than " + std::to_string(n) + " label rows");
    LabelSet set;
    for (auto& field : split_commas(line)) {
      auto start = field.find_first_not_of(" \t");
      auto end = field.find_last_not_of(" \t\r");
      if (start == std::string::npos) throw ParseError(file, line_no, "empty label field");
      const long long id = parse_integer(field.substr(start, end - start + 1), file, line_no);
      if (id < 0) throw ParseError(file, line_no, "negative class id");
      set.push_back(static_cast<int>(id));
    }
    labels.push_back(std::move(set));
  }
  if (labels.size() != n) {
    throw ParseError(file, line_no, "expected " + std::to_string(n) + " label rows, got " + std::to_string(labels.size()));
  }
  return labels;
}

}  // namespace

MultiplexGraph load_multiplex(const fs::path& dir) {
  const fs::path meta_path = dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in) throw ValidationError("missing meta file " + meta_path.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(meta_path.string(), 1, e.what());
  }
  auto field = [&](const char* key) -> std::size_t {
    if (!meta.contains(key) || !meta[key].is_number_integer() || meta[key].get<long long>() < 0) {
      throw ParseError(meta_path.string(), 1, std::string("missing or invalid integer field '") + key + "'");
    }
    return meta[key].get<std::size_t>();
  };
  MultiplexGraph g;
  g.n_nodes = field("n_nodes");
  const std::size_t n_dims = field("n_dims");
  const std::size_t n_features = field("n_features");
  if (n_dims == 0) throw ParseError(meta_path.string(), 1, "n_dims must be at least 1");

  for (std::size_t k = 0; k < n_dims; ++k) {
    g.dims.push_back(read_edges(dir / "dims" / (std::to_string(k) + ".edges"), g.n_nodes));
  }
  if (fs::exists(dir / "features.csv")) {
    if (n_features == 0) throw ParseError(meta_path.string(), 1, "n_features must be at least 1");
    g.features = read_features(dir / "features.csv", g.n_nodes, n_features);
  } else {
    g.features = structural_features(g.dims);
  }
  if (fs::exists(dir / "labels.csv")) g.labels = read_labels(dir / "labels.csv", g.n_nodes);
  g.validate();
  return g;
}

void save_multiplex(const MultiplexGraph& graph, const fs::path& dir) {
  graph.validate();
  fs::create_directories(dir / "dims");
  {
    nlohmann::json meta = {{"n_nodes", graph.n_nodes}, {"n_dims", graph.n_dims()}, {"n_features", graph.n_features()}};
    std::ofstream out(dir / "meta.json");
    out << meta.dump(2) << "\n";
  }
  for (std::size_t k = 0; k < graph.n_dims(); ++k) {
    std::ofstream out(dir / "dims" / (std::to_string(k) + ".edges"));
    for (auto [i, j] : edge_list(graph.dims[k])) out << i << ' ' << j << '\n';
  }
  {
    std::ofstream out(dir / "features.csv");
    for (Eigen::Index r = 0; r < graph.features.rows(); ++r) {
      for (Eigen::Index c = 0; c < graph.features.cols(); ++c) {
        if (c) out << ',';
        out << format_double(graph.features(r, c));
      }
      out << '\n';
    }
  }
  if (graph.has_labels()) {
    std::ofstream out(dir / "labels.csv");
    for (const auto& set : graph.labels) {
      for (std::size_t i = 0; i < set.size(); ++i) {
        if (i) out << ',';
        out << set[i];
      }
      out << '\n';
    }
  } else {
    fs::remove(dir / "labels.csv");
  }
}

}  // namespace hypermux

#include "flowsymm/dataset.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include "flowsymm/errors.hpp"

namespace flowsymm {

namespace fs = std::filesystem;

Observation Dataset::observation() const {
  return Observation::from_flows(flows, injections, observed);
}

void Dataset::validate() const {
  graph.validate();
  if (injections.size() != graph.node_count) throw StructuralError("injection count != n");
  if (flows.size() != graph.edge_count()) throw StructuralError("flow count != m");
  if (static_cast<int>(observed.size()) != graph.edge_count()) {
    throw StructuralError("observed flag count != m");
  }
  if (!flows.allFinite() || !injections.allFinite()) {
    throw StructuralError("dataset contains non-finite flows or injections");
  }
}

void minmax_normalize(Eigen::MatrixXd& features) {
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double lo = features.col(j).minCoeff();
    const double hi = features.col(j).maxCoeff();
    if (hi > lo) {
      features.col(j) = (features.col(j).array() - lo) / (hi - lo);
    } else {
      features.col(j).setZero();
    }
  }
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

// Line-oriented CSV reader with position tracking for error messages.
class CsvReader {
 public:
  explicit CsvReader(const fs::path& path) : name_(path.string()), in_(path) {
    if (!in_) throw ParseError(name_, 0, 0, "cannot open file");
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      std::string cell;
      std::istringstream ss(line);
      while (std::getline(ss, cell, ',')) fields.push_back(cell);
      if (line.back() == ',') fields.emplace_back();
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(int column, const std::string& what) const {
    throw ParseError(name_, line_, column, what);
  }

  long long to_int(const std::string& s, int column) const {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(column, "expected an integer, got '" + s + "'");
    return v;
  }

  double to_double(const std::string& s, int column) const {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail(column, "expected a finite number, got '" + s + "'");
    }
    return v;
  }

  int line() const { return line_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::ifstream in_;
  int line_ = 0;
};

void expect_header(CsvReader& reader, const std::vector<std::string>& expected) {
  std::vector<std::string> fields;
  if (!reader.next(fields)) reader.fail(1, "missing header row");
  for (std::size_t j = 0; j < expected.size(); ++j) {
    if (j >= fields.size()) reader.fail(static_cast<int>(j + 1), "missing column '" + expected[j] + "'");
    if (fields[j] != expected[j]) {
      reader.fail(static_cast<int>(j + 1),
                  "expected column '" + expected[j] + "', found '" + fields[j] + "'");
    }
  }
  if (fields.size() > expected.size()) {
    reader.fail(static_cast<int>(expected.size() + 1),
                "unexpected column '" + fields[expected.size()] + "'");
  }
}

std::map<std::string, std::pair<std::string, int>> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, 0, "cannot open file");
  std::map<std::string, std::pair<std::string, int>> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), number, 1, "expected key=value");
    out[line.substr(0, eq)] = {line.substr(eq + 1), number};
  }
  return out;
}

int manifest_int(const std::map<std::string, std::pair<std::string, int>>& manifest,
                 const fs::path& path, const std::string& key) {
  const auto it = manifest.find(key);
  if (it == manifest.end()) throw ParseError(path.string(), 0, 0, "missing key '" + key + "'");
  const std::string& s = it->second.first;
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
    throw ParseError(path.string(), it->second.second, static_cast<int>(key.size() + 2),
                     "expected a non-negative integer for '" + key + "'");
  }
  return v;
}

}  // namespace

void save_dataset(const Dataset& dataset, const fs::path& dir) {
  dataset.validate();
  fs::create_directories(dir);
  const int d = dataset.graph.feature_dim();

  {
    auto out = open_out(dir / "manifest.txt");
    out << "n=" << dataset.graph.node_count << "\n"
        << "m=" << dataset.graph.edge_count() << "\n"
        << "d=" << d << "\n"
        << "name=" << dataset.name << "\n"
        << "normalization=" << dataset.normalization << "\n"
        << "directed=" << (dataset.directed ? 1 : 0) << "\n";
  }
  {
    auto out = open_out(dir / "edges.csv");
    out << "edge_id,source,target,observed,flow";
    for (int j = 0; j < d; ++j) out << ",f" << (j + 1);
    out << "\n";
    for (int e = 0; e < dataset.graph.edge_count(); ++e) {
      const Edge& edge = dataset.graph.edges[e];
      out << e << "," << edge.source << "," << edge.target << ","
          << (dataset.observed[e] ? 1 : 0) << "," << num(dataset.flows[e]);
      for (int j = 0; j < d; ++j) out << "," << num(dataset.graph.features(e, j));
      out << "\n";
    }
  }
  {
    auto out = open_out(dir / "injections.csv");
    out << "node_id,c\n";
    for (int v = 0; v < dataset.graph.node_count; ++v) {
      out << v << "," << num(dataset.injections[v]) << "\n";
    }
  }
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.txt";
  const auto manifest = read_manifest(manifest_path);
  const int n = manifest_int(manifest, manifest_path, "n");
  const int m = manifest_int(manifest, manifest_path, "m");
  const int d = manifest_int(manifest, manifest_path, "d");

  Dataset ds;
  if (auto it = manifest.find("name"); it != manifest.end()) ds.name = it->second.first;
  if (auto it = manifest.find("normalization"); it != manifest.end()) {
    ds.normalization = it->second.first;
    if (ds.normalization != "none" && ds.normalization != "minmax") {
      throw ParseError(manifest_path.string(), it->second.second, 15,
                       "normalization must be 'none' or 'minmax'");
    }
  }
  if (auto it = manifest.find("directed"); it != manifest.end()) {
    ds.directed = it->second.first != "0";
  }

  ds.graph.node_count = n;
  ds.graph.edges.reserve(static_cast<std::size_t>(m));
  ds.graph.features.resize(m, d);
  ds.flows.resize(m);
  ds.observed.assign(static_cast<std::size_t>(m), false);

  {
    CsvReader reader(dir / "edges.csv");
    std::vector<std::string> header{"edge_id", "source", "target", "observed", "flow"};
    for (int j = 0; j < d; ++j) header.push_back("f" + std::to_string(j + 1));
    expect_header(reader, header);
    std::vector<std::string> f;
    int e = 0;
    while (reader.next(f)) {
      if (e >= m) reader.fail(1, "more edge rows than m=" + std::to_string(m));
      if (f.size() != header.size()) {
        reader.fail(static_cast<int>(std::min(f.size(), header.size()) + 1),
                    "expected " + std::to_string(header.size()) + " fields (" +
                        std::to_string(d) + " features), found " + std::to_string(f.size()));
      }
      if (reader.to_int(f[0], 1) != e) {
        reader.fail(1, "edge ids must be dense and ordered; expected " + std::to_string(e));
      }
      Edge edge;
      edge.directed = ds.directed;
      const long long s = reader.to_int(f[1], 2);
      const long long t = reader.to_int(f[2], 3);
      if (s < 0 || s >= n) reader.fail(2, "source node out of range [0, " + std::to_string(n) + ")");
      if (t < 0 || t >= n) reader.fail(3, "target node out of range [0, " + std::to_string(n) + ")");
      if (s == t) reader.fail(3, "self-loop");
      edge.source = static_cast<int>(s);
      edge.target = static_cast<int>(t);
      const long long flag = reader.to_int(f[3], 4);
      if (flag != 0 && flag != 1) reader.fail(4, "observed flag must be 0 or 1");
      ds.observed[e] = flag == 1;
      ds.flows[e] = reader.to_double(f[4], 5);
      for (int j = 0; j < d; ++j) ds.graph.features(e, j) = reader.to_double(f[5 + j], 6 + j);
      ds.graph.edges.push_back(edge);
      ++e;
    }
    if (e != m) {
      reader.fail(0, "found " + std::to_string(e) + " edge rows, manifest says m=" + std::to_string(m));
    }
  }

  ds.injections.resize(n);
  {
    CsvReader reader(dir / "injections.csv");
    expect_header(reader, {"node_id", "c"});
    std::vector<std::string> f;
    int v = 0;
    while (reader.next(f)) {
      if (v >= n) reader.fail(1, "more injection rows than n=" + std::to_string(n));
      if (f.size() != 2) reader.fail(static_cast<int>(std::min<std::size_t>(f.size(), 2) + 1), "expected 2 fields");
      if (reader.to_int(f[0], 1) != v) {
        reader.fail(1, "node ids must be dense and ordered; expected " + std::to_string(v));
      }
      ds.injections[v] = reader.to_double(f[1], 2);
      ++v;
    }
    if (v != n) {
      reader.fail(0, "found " + std::to_string(v) + " injection rows, manifest says n=" + std::to_string(n));
    }
  }

  if (ds.normalization == "minmax") minmax_normalize(ds.graph.features);
  try {
    ds.validate();
  } catch (const StructuralError& err) {
    throw ParseError((dir / "edges.csv").string(), 0, 0, err.what());
  }
  return ds;
}

}  // namespace flowsymm

#include "flowsymm/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "flowsymm/errors.hpp"

namespace flowsymm {

namespace {

constexpr const char* kMagic = "flowsymm-checkpoint 1";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class LineReader {
 public:
  explicit LineReader(const std::filesystem::path& path) : name_(path.string()), in_(path) {
    if (!in_) throw ParseError(name_, 0, 0, "cannot open file");
  }

  std::vector<std::string> tokens() {
    std::string line;
    if (!std::getline(in_, line)) fail(1, "unexpected end of file");
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::vector<std::string> out;
    for (std::string tok; ss >> tok;) out.push_back(tok);
    return out;
  }

  void expect(const std::vector<std::string>& toks, std::size_t count, const std::string& key) {
    if (toks.empty() || toks[0] != key) fail(1, "expected '" + key + "'");
    if (toks.size() != count) fail(static_cast<int>(std::min(toks.size(), count) + 1),
                                   "'" + key + "' expects " + std::to_string(count - 1) + " values");
  }

  long long integer(const std::string& s, int column) {
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) fail(column, "expected an integer");
    return v;
  }

  double real(const std::string& s, int column) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
      fail(column, "expected a finite number");
    }
    return v;
  }

  [[noreturn]] void fail(int column, const std::string& what) const {
    throw ParseError(name_, line_, column, what);
  }

 private:
  std::string name_;
  std::ifstream in_;
  int line_ = 0;
};

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const EncoderShape& s = params.encoder.shape;
  out << kMagic << "\n"
      << "shape " << s.input_dim << " " << s.hidden_dim << " " << s.heads << " " << s.basis_slots
      << "\n"
      << "seed " << params.encoder.seed << "\n"
      << "log_lambda " << num(params.log_lambda) << "\n";
  params.encoder.for_each_tensor([&out](const std::string& name, const auto& tensor) {
    out << "tensor " << name << " " << tensor.rows() << " " << tensor.cols() << "\n";
    for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
        if (c) out << " ";
        out << num(tensor(r, c));
      }
      out << "\n";
    }
  });
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  LineReader reader(path);
  {
    const auto magic = reader.tokens();
    if (magic.size() != 2 || magic[0] + " " + magic[1] != kMagic) {
      reader.fail(1, "not a flowsymm checkpoint");
    }
  }
  EncoderShape shape;
  {
    const auto t = reader.tokens();
    reader.expect(t, 5, "shape");
    shape.input_dim = static_cast<int>(reader.integer(t[1], 2));
    shape.hidden_dim = static_cast<int>(reader.integer(t[2], 3));
    shape.heads = static_cast<int>(reader.integer(t[3], 4));
    shape.basis_slots = static_cast<int>(reader.integer(t[4], 5));
    if (shape.input_dim < 1 || shape.hidden_dim < 1 || shape.heads < 1 || shape.basis_slots < 0) {
      reader.fail(2, "invalid encoder shape");
    }
  }
  ModelParams params;
  params.encoder = EncoderParams::zeros(shape);
  {
    const auto t = reader.tokens();
    reader.expect(t, 2, "seed");
    std::uint64_t seed = 0;
    const auto [ptr, ec] = std::from_chars(t[1].data(), t[1].data() + t[1].size(), seed);
    if (ec != std::errc() || ptr != t[1].data() + t[1].size()) reader.fail(2, "expected an unsigned seed");
    params.encoder.seed = seed;
  }
  {
    const auto t = reader.tokens();
    reader.expect(t, 2, "log_lambda");
    params.log_lambda = reader.real(t[1], 2);
  }
  params.encoder.for_each_tensor([&reader](const std::string& name, auto& tensor) {
    const auto t = reader.tokens();
    reader.expect(t, 4, "tensor");
    if (t[1] != name) reader.fail(2, "expected tensor '" + name + "', found '" + t[1] + "'");
    if (reader.integer(t[2], 3) != tensor.rows() || reader.integer(t[3], 4) != tensor.cols()) {
      reader.fail(3, "tensor '" + name + "' should be " + std::to_string(tensor.rows()) + "x" +
                         std::to_string(tensor.cols()));
    }
    for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
      const auto row = reader.tokens();
      if (static_cast<Eigen::Index>(row.size()) != tensor.cols()) {
        reader.fail(static_cast<int>(row.size()) + 1, "row has the wrong number of values");
      }
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
        tensor(r, c) = reader.real(row[c], static_cast<int>(c) + 1);
      }
    }
  });
  return params;
}

}  // namespace flowsymm

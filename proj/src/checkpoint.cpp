#include "hypermux/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hypermux/errors.hpp"

namespace hypermux {
namespace {

constexpr const char* kMagic = "hypermux-checkpoint";
constexpr int kVersion = 1;

const Matrix& require(const Checkpoint& c, const std::string& key) {
  auto it = c.find(key);
  if (it == c.end()) throw ValidationError("checkpoint is missing '" + key + "'");
  return it->second;
}

}  // namespace

Checkpoint make_checkpoint(const ModelParams& params, const Matrix& discriminator) {
  Checkpoint c;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const std::string prefix = "layer" + std::to_string(l + 1) + ".";
    const auto& layer = params.layers[l];
    for (std::size_t d = 0; d < layer.weights.size(); ++d) c[prefix + "W." + std::to_string(d)] = layer.weights[d];
    c[prefix + "alpha"] = layer.alpha_logits;
    c[prefix + "beta"] = layer.beta_logits;
  }
  c["discriminator.Q"] = discriminator;
  return c;
}

RestoredParams restore_params(const Checkpoint& checkpoint) {
  RestoredParams out;
  for (int l = 1;; ++l) {
    const std::string prefix = "layer" + std::to_string(l) + ".";
    if (!checkpoint.count(prefix + "alpha")) break;
    LayerParams layer;
    layer.alpha_logits = require(checkpoint, prefix + "alpha");
    layer.beta_logits = require(checkpoint, prefix + "beta");
    for (Eigen::Index d = 0; d < layer.beta_logits.cols(); ++d) {
      layer.weights.push_back(require(checkpoint, prefix + "W." + std::to_string(d)));
    }
    out.model.layers.push_back(std::move(layer));
  }
  if (out.model.layers.empty()) throw ValidationError("checkpoint holds no layers");
  out.discriminator = require(checkpoint, "discriminator.Q");
  return out;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << kMagic << ' ' << kVersion << '\n' << "entries " << checkpoint.size() << '\n';
  char buf[64];
  for (const auto& [name, m] : checkpoint) {
    out << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        auto res = std::to_chars(buf, buf + sizeof(buf), m(r, c));
        if (c) out << ' ';
        out.write(buf, res.ptr - buf);
      }
      out << '\n';
    }
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  const std::string file = path.string();
  std::string magic, word;
  int version = 0;
  std::size_t entries = 0;
  if (!(in >> magic >> version) || magic != kMagic) throw ParseError(file, 1, "not a hypermux checkpoint");
  if (version != kVersion) throw ParseError(file, 1, "unsupported checkpoint version " + std::to_string(version));
  if (!(in >> word >> entries) || word != "entries") throw ParseError(file, 2, "expected 'entries <count>'");
  Checkpoint c;
  std::size_t line = 2;
  for (std::size_t k = 0; k < entries; ++k) {
    std::string name;
    long long rows = 0, cols = 0;
    ++line;
    if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0) throw ParseError(file, line, "bad entry header");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      ++line;
      for (Eigen::Index col = 0; col < m.cols(); ++col) {
        std::string token;
        if (!(in >> token)) throw ParseError(file, line, "truncated values for '" + name + "'");
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), m(r, col));
        if (ec != std::errc() || ptr != token.data() + token.size()) throw ParseError(file, line, "bad value '" + token + "'");
      }
    }
    c.emplace(name, std::move(m));
  }
  return c;
}

}  // namespace hypermux

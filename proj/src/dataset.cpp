#include "qfl/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string_view>

namespace qfl::data {

namespace {

[[noreturn]] void parse_fail(const std::string& path, std::size_t line, const std::string& why) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": parse error: " + why);
}

// Splits on spaces/tabs; returns views into the line.
std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view token, T& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc{} && ptr == last;
}

}  // namespace

Dataset generate_synthetic(nd::RngStream& rng, std::size_t n, std::size_t features,
                           int classes, float class_sep) {
  if (classes < 2) throw std::invalid_argument("generate_synthetic: need at least 2 classes");
  if (n < static_cast<std::size_t>(classes)) {
    throw std::invalid_argument("generate_synthetic: need at least one sample per class");
  }
  if (features == 0) throw std::invalid_argument("generate_synthetic: features must be positive");

  // Fixed unit direction per class, drawn once.
  std::vector<std::vector<float>> directions(static_cast<std::size_t>(classes));
  for (auto& u : directions) {
    double norm = 0.0;
    do {
      u = rng.gaussian_array(features, 0.0f, 1.0f);
      norm = 0.0;
      for (float v : u) norm += static_cast<double>(v) * v;
      norm = std::sqrt(norm);
    } while (norm < 1e-9);
    for (auto& v : u) v = static_cast<float>(v / norm);
  }

  Dataset ds;
  ds.num_classes = classes;
  ds.x = nd::DenseTensor({n, features});
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % static_cast<std::size_t>(classes));
    ds.y[i] = c;
    const auto noise = rng.gaussian_array(features, 0.0f, 1.0f);
    float* row = &ds.x.data[i * features];
    const auto& u = directions[static_cast<std::size_t>(c)];
    for (std::size_t f = 0; f < features; ++f) row[f] = class_sep * u[f] + noise[f];
  }
  return ds;
}

Dataset load_flat_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_flat_file: cannot open " + path);

  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) parse_fail(path, 1, "empty file");
  ++line_no;

  const auto header = tokenize(line);
  if (header.size() != 3) parse_fail(path, line_no, "header must be 'n features classes'");
  std::size_t n = 0, features = 0;
  int classes = 0;
  if (!parse_number(header[0], n) || !parse_number(header[1], features) ||
      !parse_number(header[2], classes)) {
    parse_fail(path, line_no, "header fields must be integers");
  }
  if (n == 0 || features == 0 || classes < 1) {
    parse_fail(path, line_no, "header fields must be positive");
  }

  Dataset ds;
  ds.num_classes = classes;
  ds.x = nd::DenseTensor({n, features});
  ds.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) parse_fail(path, line_no + 1, "unexpected end of file");
    ++line_no;
    const auto tokens = tokenize(line);
    if (tokens.size() != features + 1) {
      parse_fail(path, line_no, "expected label plus " + std::to_string(features) + " features");
    }
    int label = 0;
    if (!parse_number(tokens[0], label)) parse_fail(path, line_no, "bad label");
    if (label < 0 || label >= classes) {
      throw std::domain_error(path + ":" + std::to_string(line_no) + ": label out of range");
    }
    ds.y[i] = label;
    for (std::size_t f = 0; f < features; ++f) {
      float v = 0.0f;
      if (!parse_number(tokens[f + 1], v)) parse_fail(path, line_no, "bad feature value");
      ds.x.data[i * features + f] = v;
    }
  }
  return ds;
}

void save_flat_file(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_flat_file: cannot open " + path);
  const std::size_t features = ds.features();
  out << ds.size() << ' ' << features << ' ' << ds.num_classes << '\n';
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out << ds.y[i];
    for (std::size_t f = 0; f < features; ++f) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), ds.x.data[i * features + f]);
      out << ' ';
      out.write(buf, ptr - buf);
      (void)ec;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_flat_file: write failed for " + path);
}

}  // namespace qfl::data

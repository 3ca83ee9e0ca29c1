#include "bernflow/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "bernflow/errors.hpp"
#include "bernflow/rng.hpp"

namespace bernflow {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n';
  };
  while (!s.empty() && is_space(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && is_space(s[i])) ++i;
  return s.substr(i);
}

double parse_cell(const std::string& raw, std::size_t line_no, const std::string& col) {
  const std::string cell = trim(raw);
  double v = 0.0;
  const char* first = cell.data();
  const char* last = first + cell.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || cell.empty()) {
    throw DataError("line " + std::to_string(line_no) + ", column '" + col +
                    "': non-numeric cell '" + cell + "'");
  }
  if (!std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ", column '" + col +
                    "': non-finite value");
  }
  return v;
}

void format_double(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

Tensor Dataset::feature_tensor() const {
  Tensor t(n, p);
  std::copy(x.begin(), x.end(), t.ptr());
  return t;
}

Tensor Dataset::target_tensor() const {
  Tensor t(n, 1);
  std::copy(y.begin(), y.end(), t.ptr());
  return t;
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.feature_names = feature_names;
  out.target_name = target_name;
  out.p = p;
  out.n = indices.size();
  out.x.reserve(out.n * p);
  out.y.reserve(out.n);
  for (std::size_t i : indices) {
    if (i >= n) {
      throw DataError("subset index " + std::to_string(i) + " out of range for n=" +
                      std::to_string(n));
    }
    const auto r = row(i);
    out.x.insert(out.x.end(), r.begin(), r.end());
    out.y.push_back(y[i]);
  }
  return out;
}

Dataset load_csv(const std::string& path, const std::string& target) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");

  std::vector<std::string> header = split_line(line);
  for (auto& h : header) h = trim(h);
  if (header.empty()) throw DataError("'" + path + "' has an empty header");

  std::size_t target_col = header.size() - 1;
  if (!target.empty()) {
    const auto it = std::find(header.begin(), header.end(), target);
    if (it == header.end()) {
      throw DataError("target column '" + target + "' not found in '" + path + "'");
    }
    target_col = static_cast<std::size_t>(it - header.begin());
  }

  Dataset d;
  d.target_name = header[target_col];
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != target_col) d.feature_names.push_back(header[j]);
  }
  d.p = header.size() - 1;
  if (d.p == 0) throw DataError("'" + path + "' has no feature columns");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double v = parse_cell(cells[j], line_no, header[j]);
      if (j == target_col) {
        d.y.push_back(v);
      } else {
        d.x.push_back(v);
      }
    }
    ++d.n;
  }
  if (d.n == 0) throw DataError("'" + path + "' has a header but no data rows");
  return d;
}

void write_csv(const std::string& path, const Dataset& d) {
  std::string out;
  for (std::size_t j = 0; j < d.feature_names.size(); ++j) {
    if (j) out += ',';
    out += d.feature_names[j];
  }
  out += out.empty() ? d.target_name : "," + d.target_name;
  out += '\n';
  for (std::size_t i = 0; i < d.n; ++i) {
    const auto r = d.row(i);
    for (std::size_t j = 0; j < d.p; ++j) {
      format_double(out, r[j]);
      out += ',';
    }
    format_double(out, d.y[i]);
    out += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  f << out;
  if (!f) throw DataError("write failed for '" + path + "'");
}

Scaler Scaler::fit(const Dataset& train) {
  if (train.n < 2) throw DataError("scaler: need at least 2 training rows");
  Scaler s;
  s.x_min.assign(train.p, 0.0);
  s.x_scale.assign(train.p, 1.0);
  for (std::size_t j = 0; j < train.p; ++j) {
    double lo = train.x[j], hi = train.x[j];
    for (std::size_t i = 1; i < train.n; ++i) {
      lo = std::min(lo, train.x[i * train.p + j]);
      hi = std::max(hi, train.x[i * train.p + j]);
    }
    s.x_min[j] = lo;
    if (hi > lo) {
      s.x_scale[j] = hi - lo;
    } else {
      s.constant_columns.push_back(j);  // scale 1, shift min
    }
  }
  const auto [ylo, yhi] = std::minmax_element(train.y.begin(), train.y.end());
  if (!(*yhi > *ylo)) {
    throw DataError("scaler: target column is constant; y scale undefined");
  }
  s.y_min = *ylo;
  s.y_scale = *yhi - *ylo;
  return s;
}

Dataset Scaler::apply(const Dataset& d) const {
  if (d.p != x_min.size()) {
    throw StructuralError("scaler: fitted on " + std::to_string(x_min.size()) +
                          " features, dataset has " + std::to_string(d.p));
  }
  Dataset out = d;
  for (std::size_t i = 0; i < d.n; ++i) {
    for (std::size_t j = 0; j < d.p; ++j) {
      out.x[i * d.p + j] = (d.x[i * d.p + j] - x_min[j]) / x_scale[j];
    }
    out.y[i] = scale_y(d.y[i]);
  }
  return out;
}

std::vector<double> Scaler::scale_row(std::span<const double> x) const {
  if (x.size() != x_min.size()) {
    throw StructuralError("scaler: fitted on " + std::to_string(x_min.size()) +
                          " features, row has " + std::to_string(x.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - x_min[j]) / x_scale[j];
  return out;
}

double Scaler::nll_correction() const { return std::log(y_scale); }

FoldSplit split_folds(std::size_t n, std::size_t n_folds, std::uint64_t seed) {
  if (n_folds < 2) throw DataError("split_folds: need at least 2 folds");
  if (n < n_folds) throw DataError("split_folds: more folds than rows");
  Rng rng(seed);
  const auto perm = Rng::permutation(n, rng);
  FoldSplit out;
  out.source = "seed:" + std::to_string(seed);
  out.folds.resize(n_folds);
  for (std::size_t k = 0; k < n_folds; ++k) {
    const std::size_t lo = k * n / n_folds;
    const std::size_t hi = (k + 1) * n / n_folds;
    auto& fold = out.folds[k];
    fold.test.assign(perm.begin() + lo, perm.begin() + hi);
    fold.train.reserve(n - (hi - lo));
    fold.train.insert(fold.train.end(), perm.begin(), perm.begin() + lo);
    fold.train.insert(fold.train.end(), perm.begin() + hi, perm.end());
    std::sort(fold.test.begin(), fold.test.end());
    std::sort(fold.train.begin(), fold.train.end());
  }
  return out;
}

FoldSplit load_folds(const std::string& dir, std::size_t n) {
  namespace fs = std::filesystem;
  std::vector<std::pair<std::size_t, fs::path>> files;
  if (!fs::is_directory(dir)) throw DataError("fold directory '" + dir + "' not found");
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    const std::string prefix = "index_test_";
    if (name.rfind(prefix, 0) != 0 || name.size() <= prefix.size()) continue;
    const std::string stem = name.substr(prefix.size());
    const auto dot = stem.find('.');
    std::size_t k = 0;
    const auto [ptr, ec] =
        std::from_chars(stem.data(), stem.data() + std::min(dot, stem.size()), k);
    if (ec != std::errc{}) continue;
    files.emplace_back(k, entry.path());
  }
  if (files.empty()) {
    throw DataError("no index_test_<k>.txt files in '" + dir + "'");
  }
  std::sort(files.begin(), files.end());

  FoldSplit out;
  out.source = dir;
  for (const auto& [k, path] : files) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::vector<bool> is_test(n, false);
    FoldSplit::Fold fold;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string cell = trim(line);
      if (cell.empty()) continue;
      // Published index files sometimes store integers in float notation.
      const double v = parse_cell(cell, line_no, path.filename().string());
      const auto idx = static_cast<std::size_t>(v);
      if (v < 0 || static_cast<double>(idx) != v) {
        throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                        ": not an integer index");
      }
      if (idx >= n) {
        throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                        ": index " + std::to_string(idx) + " out of range (valid 0.." +
                        std::to_string(n - 1) + ")");
      }
      if (is_test[idx]) {
        throw DataError("'" + path.string() + "' line " + std::to_string(line_no) +
                        ": duplicate index " + std::to_string(idx));
      }
      is_test[idx] = true;
      fold.test.push_back(idx);
    }
    if (fold.test.empty()) throw DataError("'" + path.string() + "' lists no indices");
    fold.train.reserve(n - fold.test.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (!is_test[i]) fold.train.push_back(i);
    }
    out.folds.push_back(std::move(fold));
  }
  return out;
}

namespace {

Dataset toy_shell(std::size_t n) {
  Dataset d;
  d.feature_names = {"x"};
  d.target_name = "y";
  d.p = 1;
  d.n = n;
  d.x.reserve(n);
  d.y.reserve(n);
  return d;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double log_normal_pdf(double y, double mu, double sd) {
  const double r = (y - mu) / sd;
  return -0.5 * r * r - 0.5 * kLog2Pi - std::log(sd);
}

}  // namespace

Dataset gen_toy_sinusoidal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d = toy_shell(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(0.0, 10.0);
    const double y =
        0.3 * x + std::sin(x) + (0.1 + 0.05 * x) * rng.exponential();
    d.x.push_back(x);
    d.y.push_back(y);
  }
  return d;
}

Dataset gen_toy_bimodal(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d = toy_shell(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform(0.0, 5.0);
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    const double y = sign * (0.25 + 0.25 * x) + 0.1 * rng.normal();
    d.x.push_back(x);
    d.y.push_back(y);
  }
  return d;
}

Dataset gen_toy_hetero_gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Dataset d = toy_shell(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.uniform();
    const double y = 2.0 * x + (0.5 + x) * rng.normal();
    d.x.push_back(x);
    d.y.push_back(y);
  }
  return d;
}

double toy_sinusoidal_log_density(double x, double y) {
  const double scale = 0.1 + 0.05 * x;
  const double r = (y - 0.3 * x - std::sin(x)) / scale;
  if (r < 0.0) return -std::numeric_limits<double>::infinity();
  return -r - std::log(scale);
}

double toy_bimodal_log_density(double x, double y) {
  const double m = 0.25 + 0.25 * x;
  const double la = log_normal_pdf(y, m, 0.1);
  const double lb = log_normal_pdf(y, -m, 0.1);
  const double hi = std::max(la, lb);
  return hi + std::log1p(std::exp(std::min(la, lb) - hi)) - std::numbers::ln2;
}

double toy_hetero_gaussian_log_density(double x, double y) {
  return log_normal_pdf(y, 2.0 * x, 0.5 + x);
}

double toy_hetero_gaussian_analytic_nll() {
  // 0.5 log(2 pi e) + int_0^1 log(0.5 + x) dx, the integral in closed form.
  return 0.5 * kLog2Pi + 0.5 + (1.5 * std::log(1.5) - 0.5 * std::log(0.5) - 1.0);
}

}  // namespace bernflow

#pragma once

// Problem files, CSV tables and run manifests.
//
// Problem files are JSON. Matrices are arrays of rows, each entry either a
// [re, im] pair or a bare real. Errors carry the line of the offending value.

#include <cstdint>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "algebra.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "shoot.hpp"

namespace pulseforge::io {

using Json = nlohmann::json;

/// Input error anchored at a line of the source file (0 when unknown).
class ParseError : public ValidationError {
 public:
  ParseError(const std::string& file, int line, const std::string& what)
      : ValidationError(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " + what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

namespace detail {

/// Character iterator that publishes how far the JSON lexer has read.
class CountingIterator {
 public:
  using iterator_category = std::forward_iterator_tag;
  using value_type = char;
  using difference_type = std::ptrdiff_t;
  using pointer = const char*;
  using reference = const char&;

  CountingIterator() = default;
  CountingIterator(const char* p, const char** cursor) : p_(p), cursor_(cursor) {}

  reference operator*() const { return *p_; }
  CountingIterator& operator++() {
    ++p_;
    if (cursor_ != nullptr) *cursor_ = p_;
    return *this;
  }
  CountingIterator operator++(int) {
    CountingIterator old = *this;
    ++*this;
    return old;
  }
  bool operator==(const CountingIterator& o) const { return p_ == o.p_; }

 private:
  const char* p_ = nullptr;
  const char** cursor_ = nullptr;
};

/// Records the source line of every value, keyed by JSON pointer.
class LineRecorder : public nlohmann::json_sax<Json> {
 public:
  LineRecorder(const char* begin, const char** cursor) : begin_(begin), cursor_(cursor) {}

  std::map<std::string, int> lines;

  bool null() override { return value(); }
  bool boolean(bool) override { return value(); }
  bool number_integer(number_integer_t) override { return value(); }
  bool number_unsigned(number_unsigned_t) override { return value(); }
  bool number_float(number_float_t, const string_t&) override { return value(); }
  bool string(string_t&) override { return value(); }
  bool binary(binary_t&) override { return value(); }
  bool start_object(std::size_t) override {
    value();
    stack_.push_back({true, -1, {}});
    return true;
  }
  bool key(string_t& k) override {
    stack_.back().key = k;
    return true;
  }
  bool end_object() override {
    stack_.pop_back();
    return true;
  }
  bool start_array(std::size_t) override {
    value();
    stack_.push_back({false, -1, {}});
    return true;
  }
  bool end_array() override {
    stack_.pop_back();
    return true;
  }
  bool parse_error(std::size_t, const std::string&, const nlohmann::detail::exception&) override { return false; }

 private:
  struct Frame {
    bool object;
    int index;
    std::string key;
  };

  bool value() {
    if (!stack_.empty() && !stack_.back().object) ++stack_.back().index;
    std::string ptr;
    for (const auto& f : stack_) ptr += "/" + (f.object ? f.key : std::to_string(f.index));
    // The lexer may have read one character past the token.
    const char* at = *cursor_ > begin_ ? *cursor_ - 1 : begin_;
    int line = 1;
    for (const char* c = begin_; c < at; ++c) line += *c == '\n' ? 1 : 0;
    lines.emplace(ptr, line);
    return true;
  }

  const char* begin_;
  const char** cursor_;
  std::vector<Frame> stack_;
};

inline int line_of_offset(const std::string& text, std::size_t offset) {
  int line = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) line += text[i] == '\n' ? 1 : 0;
  return line;
}

}  // namespace detail

/// Parsed JSON plus a pointer → line table.
class Document {
 public:
  Document(std::string text, std::string name) : text_(std::move(text)), name_(std::move(name)) {
    try {
      json_ = Json::parse(text_);
    } catch (const Json::parse_error& e) {
      const int line = detail::line_of_offset(text_, e.byte > 0 ? e.byte - 1 : 0);
      std::string msg = e.what();
      const auto pos = msg.find("syntax error");
      throw ParseError(name_, line, pos == std::string::npos ? msg : msg.substr(pos));
    }
    const char* cursor = text_.data();
    detail::LineRecorder rec(text_.data(), &cursor);
    detail::CountingIterator first(text_.data(), &cursor);
    detail::CountingIterator last(text_.data() + text_.size(), nullptr);
    Json::sax_parse(first, last, &rec);
    lines_ = std::move(rec.lines);
  }

  static Document from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return Document(ss.str(), path);
  }

  const Json& json() const { return json_; }
  const std::string& text() const { return text_; }
  const std::string& name() const { return name_; }

  /// Line of the value at `pointer`, or of its nearest recorded ancestor.
  int line(std::string pointer) const {
    while (true) {
      const auto it = lines_.find(pointer);
      if (it != lines_.end()) return it->second;
      if (pointer.empty()) return 0;
      pointer.erase(pointer.rfind('/'));
    }
  }

  [[noreturn]] void fail(const std::string& pointer, const std::string& what) const {
    throw ParseError(name_, line(pointer), (pointer.empty() ? std::string("/") : pointer) + ": " + what);
  }

 private:
  std::string text_;
  std::string name_;
  Json json_;
  std::map<std::string, int> lines_;
};

namespace detail {

inline const Json& require(const Document& doc, const Json& obj, const std::string& ptr, const char* key) {
  if (!obj.is_object()) doc.fail(ptr, "expected an object");
  if (!obj.contains(key)) doc.fail(ptr, std::string("missing field \"") + key + "\"");
  return obj.at(key);
}

inline double real(const Document& doc, const Json& v, const std::string& ptr) {
  if (!v.is_number()) doc.fail(ptr, "expected a number");
  return v.get<double>();
}

inline int integer(const Document& doc, const Json& v, const std::string& ptr) {
  if (!v.is_number_integer()) doc.fail(ptr, "expected an integer");
  return v.get<int>();
}

inline CMatrix<double> matrix(const Document& doc, const Json& v, const std::string& ptr, int n) {
  if (!v.is_array() || static_cast<int>(v.size()) != n) {
    doc.fail(ptr, "malformed matrix: expected " + std::to_string(n) + " rows");
  }
  auto m = CMatrix<double>::zero(n);
  for (int i = 0; i < n; ++i) {
    const std::string rp = ptr + "/" + std::to_string(i);
    const Json& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<int>(row.size()) != n) {
      doc.fail(rp, "malformed matrix: expected a row of " + std::to_string(n) + " entries");
    }
    for (int j = 0; j < n; ++j) {
      const std::string ep = rp + "/" + std::to_string(j);
      const Json& e = row[static_cast<std::size_t>(j)];
      if (e.is_number()) {
        m.re(i, j) = e.get<double>();
      } else if (e.is_array() && e.size() == 2 && e[0].is_number() && e[1].is_number()) {
        m.re(i, j) = e[0].get<double>();
        m.im(i, j) = e[1].get<double>();
      } else {
        doc.fail(ep, "malformed matrix entry: expected [re, im] or a number");
      }
    }
  }
  return m;
}

/// "terms[1].controls[0]: ..." → "/terms/1/controls/0"
inline std::string pointer_from_message(const std::string& msg) {
  const auto colon = msg.find(':');
  if (colon == std::string::npos) return "";
  std::string where = msg.substr(0, colon);
  std::string ptr;
  std::string token;
  for (char c : where) {
    if (c == '[' || c == '.' || c == ']') {
      if (!token.empty()) ptr += "/" + token;
      token.clear();
    } else if (c == ' ') {
      return "";
    } else {
      token += c;
    }
  }
  if (!token.empty()) ptr += "/" + token;
  return ptr;
}

}  // namespace detail

/// Solver and verification settings a problem file may carry.
struct RunSettings {
  SolverOptions solver;
  std::optional<std::string> grid;
  std::optional<double> min_slope;
};

struct LoadedProblem {
  ProblemSpec spec;
  RunSettings settings;
};

/// Parses and validates a problem document.
inline LoadedProblem load_problem(const Document& doc) {
  using detail::integer;
  using detail::real;
  using detail::require;
  const Json& j = doc.json();
  if (!j.is_object()) doc.fail("", "expected a JSON object");

  ProblemSpec spec;
  spec.dimension = integer(doc, require(doc, j, "", "dimension"), "/dimension");
  spec.disturbances = integer(doc, require(doc, j, "", "disturbances"), "/disturbances");
  spec.controls = integer(doc, require(doc, j, "", "controls"), "/controls");
  spec.order = integer(doc, require(doc, j, "", "order"), "/order");
  if (j.contains("horizon")) spec.horizon = real(doc, j["horizon"], "/horizon");
  if (j.contains("smoothing")) spec.smoothing = integer(doc, j["smoothing"], "/smoothing");
  if (j.contains("weights")) {
    const Json& w = j["weights"];
    if (!w.is_object()) doc.fail("/weights", "expected an object");
    if (w.contains("R_u")) spec.weights.R_u = real(doc, w["R_u"], "/weights/R_u");
    if (w.contains("R_v")) spec.weights.R_v = real(doc, w["R_v"], "/weights/R_v");
  }
  if (j.contains("drift_mode")) {
    const Json& d = j["drift_mode"];
    if (d == "fixed_horizon") {
      spec.drift_mode = DriftMode::fixed_horizon;
    } else if (d == "fictitious_drift_control") {
      spec.drift_mode = DriftMode::fictitious_drift_control;
    } else {
      doc.fail("/drift_mode", "expected \"fixed_horizon\" or \"fictitious_drift_control\"");
    }
  }
  if (j.contains("hamiltonian_residual")) {
    if (!j["hamiltonian_residual"].is_boolean()) doc.fail("/hamiltonian_residual", "expected a boolean");
    spec.hamiltonian_residual = j["hamiltonian_residual"].get<bool>();
  }
  const int n = spec.dimension;
  if (n < 2 || n > kMaxDim) doc.fail("/dimension", "dimension must be in [2, 16]");

  const Json& terms = require(doc, j, "", "terms");
  if (!terms.is_array()) doc.fail("/terms", "expected an array");
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const std::string tp = "/terms/" + std::to_string(i);
    const Json& t = terms[i];
    HamiltonianTerm term;
    term.drift = detail::matrix(doc, require(doc, t, tp, "drift"), tp + "/drift", n);
    const Json& cs = require(doc, t, tp, "controls");
    if (!cs.is_array()) doc.fail(tp + "/controls", "expected an array of matrices");
    for (std::size_t c = 0; c < cs.size(); ++c) {
      term.controls.push_back(detail::matrix(doc, cs[c], tp + "/controls/" + std::to_string(c), n));
    }
    spec.terms.push_back(std::move(term));
  }
  spec.target = GroupElement(detail::matrix(doc, require(doc, j, "", "target"), "/target", n));

  RunSettings settings;
  if (j.contains("solver")) {
    const Json& s = j["solver"];
    if (!s.is_object()) doc.fail("/solver", "expected an object");
    auto& o = settings.solver;
    if (s.contains("seed")) o.seed = static_cast<std::uint64_t>(integer(doc, s["seed"], "/solver/seed"));
    if (s.contains("starts")) o.starts = integer(doc, s["starts"], "/solver/starts");
    if (s.contains("sigma")) o.sigma = real(doc, s["sigma"], "/solver/sigma");
    if (s.contains("tol")) o.tol = real(doc, s["tol"], "/solver/tol");
    if (s.contains("max_iter")) o.max_iter = integer(doc, s["max_iter"], "/solver/max_iter");
    if (s.contains("steps")) o.steps = integer(doc, s["steps"], "/solver/steps");
    if (s.contains("screen_tol")) o.screen_tol = real(doc, s["screen_tol"], "/solver/screen_tol");
    if (s.contains("seeding")) {
      const Json& d = s["seeding"];
      if (d == "costate") {
        o.seeding = Seeding::costate;
      } else if (d == "direct") {
        o.seeding = Seeding::direct;
      } else {
        doc.fail("/solver/seeding", "expected \"costate\" or \"direct\"");
      }
    }
    if (s.contains("direct")) {
      const Json& d = s["direct"];
      if (!d.is_object()) doc.fail("/solver/direct", "expected an object");
      auto& w = o.direct;
      if (d.contains("modes")) w.modes = integer(doc, d["modes"], "/solver/direct/modes");
      if (d.contains("sigma")) w.sigma = real(doc, d["sigma"], "/solver/direct/sigma");
      if (d.contains("steps")) w.steps = integer(doc, d["steps"], "/solver/direct/steps");
      if (d.contains("fit_steps")) w.fit_steps = integer(doc, d["fit_steps"], "/solver/direct/fit_steps");
      if (d.contains("max_iter")) w.max_iter = integer(doc, d["max_iter"], "/solver/direct/max_iter");
      if (w.modes < 1) doc.fail("/solver/direct/modes", "must be >= 1");
      if (w.steps < 2 || w.fit_steps < 2) doc.fail("/solver/direct", "step counts must be >= 2");
    }
    if (o.starts < 1) doc.fail("/solver/starts", "must be >= 1");
    if (o.steps < 1) doc.fail("/solver/steps", "must be >= 1");
    if (!(o.sigma > 0.0)) doc.fail("/solver/sigma", "must be positive");
  }
  if (j.contains("verify")) {
    const Json& v = j["verify"];
    if (!v.is_object()) doc.fail("/verify", "expected an object");
    if (v.contains("grid")) {
      if (!v["grid"].is_string()) doc.fail("/verify/grid", "expected a string a:b:count");
      settings.grid = v["grid"].get<std::string>();
    }
    if (v.contains("min_slope")) settings.min_slope = real(doc, v["min_slope"], "/verify/min_slope");
  }

  try {
    return {validate(std::move(spec)), settings};
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    const std::string ptr = detail::pointer_from_message(msg);
    throw ParseError(doc.name(), doc.line(ptr), msg);
  }
}

inline LoadedProblem load_problem_file(const std::string& path) { return load_problem(Document::from_file(path)); }

/// 64-bit FNV-1a of a byte string, as 16 hex digits.
inline std::string fingerprint(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Round-trippable decimal text for a double.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline void write_csv(const std::string& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (std::size_t k = 0; k < table.header.size(); ++k) out << (k ? "," : "") << table.header[k];
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t k = 0; k < row.size(); ++k) out << (k ? "," : "") << format_double(row[k]);
    out << "\n";
  }
  if (!out) throw std::runtime_error("error writing " + path);
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path, 0, "cannot open file");
  CsvTable table;
  std::string line;
  int lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!s.empty() && s.back() == ',') out.emplace_back();
    return out;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (table.header.empty()) {
      table.header = split(line);
      continue;
    }
    const auto cells = split(line);
    if (cells.size() != table.header.size()) {
      throw ParseError(path, lineno, "expected " + std::to_string(table.header.size()) + " columns");
    }
    std::vector<double> row;
    for (const auto& c : cells) {
      // strtod, unlike stod, accepts subnormals.
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (c.empty() || end != c.c_str() + c.size()) throw ParseError(path, lineno, "not a number: \"" + c + "\"");
      row.push_back(v);
    }
    table.rows.push_back(std::move(row));
  }
  if (table.header.empty()) throw ParseError(path, 0, "empty table");
  return table;
}

/// Envelope table: t, u_1..u_m.
inline CsvTable envelope_table(const Envelope& env) {
  CsvTable t;
  t.header.push_back("t");
  for (int j = 1; j <= env.controls(); ++j) t.header.push_back("u_" + std::to_string(j));
  for (std::size_t k = 0; k < env.times.size(); ++k) {
    std::vector<double> row{env.times[k]};
    row.insert(row.end(), env.u[k].begin(), env.u[k].end());
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline Envelope envelope_from_table(const CsvTable& t, int controls, double drift_scale, const std::string& name) {
  if (t.header.size() != static_cast<std::size_t>(controls + 1) || t.header.front() != "t") {
    throw ParseError(name, 1, "expected columns t,u_1..u_" + std::to_string(controls));
  }
  if (t.rows.size() < 2) throw ParseError(name, 0, "envelope needs at least two samples");
  Envelope env;
  env.drift_scale = drift_scale;
  for (const auto& row : t.rows) {
    env.times.push_back(row[0]);
    env.u.emplace_back(row.begin() + 1, row.end());
  }
  const double h = env.times.back() / static_cast<double>(env.times.size() - 1);
  for (std::size_t k = 0; k < env.times.size(); ++k) {
    if (std::abs(env.times[k] - h * static_cast<double>(k)) > 1e-9 * std::max(1.0, env.times.back())) {
      throw ParseError(name, static_cast<int>(k) + 2, "envelope samples must lie on a uniform grid from 0");
    }
  }
  return env;
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("error writing " + path);
}

inline Json read_json(const std::string& path) { return Document::from_file(path).json(); }

}  // namespace pulseforge::io

// wcl/model_file.cpp — INI-style model parser.
#include "wcl/model_file.hpp"

#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace wcl::sys {

namespace {

[[noreturn]] void fail(const std::string& origin, int line, const std::string& what) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + what);
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<double> parse_numbers(const std::string& origin, int line, const std::string& field,
                                  const std::string& text) {
  std::vector<double> out;
  std::istringstream ss(text);
  std::string tok;
  while (ss >> tok) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      fail(origin, line, "field '" + field + "': cannot parse number '" + tok + "'");
    }
  }
  return out;
}

Mat parse_complex_matrix(const std::string& origin, int line, const std::string& field,
                         const std::string& text, int rows, int cols) {
  const std::vector<double> nums = parse_numbers(origin, line, field, text);
  const std::size_t want = 2u * static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (nums.size() != want)
    fail(origin, line, "field '" + field + "': expected " + std::to_string(want) +
                           " numbers (re im pairs for " + std::to_string(rows) + "x" +
                           std::to_string(cols) + "), got " + std::to_string(nums.size()));
  Mat m(rows, cols);
  std::size_t k = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c, k += 2) m(r, c) = cplx(nums[k], nums[k + 1]);
  return m;
}

struct Section {
  std::string header;
  int header_line = 0;
  std::map<std::string, std::pair<std::string, int>> fields;  // name -> (value, line)
};

const std::pair<std::string, int>& need(const std::string& origin, const Section& s,
                                        const std::string& name) {
  const auto it = s.fields.find(name);
  if (it == s.fields.end())
    fail(origin, s.header_line, "section [" + s.header + "] is missing field '" + name + "'");
  return it->second;
}

Profile parse_profile(const std::string& origin, int line, const std::string& text) {
  std::istringstream ss(text);
  std::string kind;
  ss >> kind;
  std::vector<double> args;
  double x;
  while (ss >> x) args.push_back(x);
  Profile p;
  if (kind == "flat") {
    if (args.size() != 1) fail(origin, line, "profile flat takes 1 number (amplitude)");
    p.kind = ProfileKind::Flat;
    p.amplitude = args[0];
  } else if (kind == "lorentzian") {
    if (args.size() != 3)
      fail(origin, line, "profile lorentzian takes 3 numbers (amplitude center width)");
    p.kind = ProfileKind::Lorentzian;
    p.amplitude = args[0];
    p.center = args[1];
    p.width = args[2];
    if (!(p.width > 0.0)) fail(origin, line, "profile lorentzian needs width > 0");
  } else if (kind == "gaussian") {
    if (args.size() != 3)
      fail(origin, line, "profile gaussian takes 3 numbers (amplitude center width)");
    p.kind = ProfileKind::Gaussian;
    p.amplitude = args[0];
    p.center = args[1];
    p.width = args[2];
    if (!(p.width > 0.0)) fail(origin, line, "profile gaussian needs width > 0");
  } else if (kind == "table") {
    if (args.size() < 4 || args.size() % 2 != 0)
      fail(origin, line, "profile table takes x v pairs (at least two)");
    p.kind = ProfileKind::Table;
    for (std::size_t i = 0; i < args.size(); i += 2) {
      p.xs.push_back(args[i]);
      p.values.push_back(cplx(args[i + 1], 0.0));
    }
    for (std::size_t i = 1; i < p.xs.size(); ++i)
      if (!(p.xs[i] > p.xs[i - 1]))
        fail(origin, line, "profile table sample points must strictly increase");
  } else {
    fail(origin, line, "unknown profile kind '" + kind +
                           "' (expected flat, lorentzian, gaussian, or table)");
  }
  return p;
}

}  // namespace

ModelFile parse_model(std::istream& in, const std::string& origin) {
  std::vector<Section> sections;
  std::string raw;
  int lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, lineno, "unterminated section header");
      Section s;
      s.header = trim(line.substr(1, line.size() - 2));
      s.header_line = lineno;
      if (s.header.empty()) fail(origin, lineno, "empty section header");
      sections.push_back(std::move(s));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(origin, lineno, "expected 'name = value' or a [section] header");
    if (sections.empty()) fail(origin, lineno, "field before any [section] header");
    const std::string name = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (name.empty()) fail(origin, lineno, "empty field name");
    auto& fields = sections.back().fields;
    if (fields.count(name))
      fail(origin, lineno, "duplicate field '" + name + "' in section [" +
                               sections.back().header + "]");
    fields[name] = {value, lineno};
  }

  // ---- [system] ----
  const Section* sys_sec = nullptr;
  for (const auto& s : sections)
    if (s.header == "system") {
      if (sys_sec) fail(origin, s.header_line, "duplicate [system] section");
      sys_sec = &s;
    }
  if (!sys_sec) fail(origin, lineno == 0 ? 1 : lineno, "missing [system] section");

  const auto& [dim_text, dim_line] = need(origin, *sys_sec, "dim");
  int dim = 0;
  try {
    dim = std::stoi(dim_text);
  } catch (const std::exception&) {
    fail(origin, dim_line, "field 'dim': cannot parse integer '" + dim_text + "'");
  }
  if (dim < 1 || dim > 64) fail(origin, dim_line, "field 'dim': need 1 <= dim <= 64");

  double cluster_tol = 1e-9;
  if (const auto it = sys_sec->fields.find("cluster_tol"); it != sys_sec->fields.end()) {
    const auto nums = parse_numbers(origin, it->second.second, "cluster_tol", it->second.first);
    if (nums.size() != 1 || !(nums[0] >= 0.0))
      fail(origin, it->second.second, "field 'cluster_tol': need one number >= 0");
    cluster_tol = nums[0];
  }

  const auto& [k_text, k_line] = need(origin, *sys_sec, "K");
  const Mat K = parse_complex_matrix(origin, k_line, "K", k_text, dim, dim);

  ModelFile mf;
  try {
    mf.system = spectral_decompose(K, cluster_tol);
  } catch (const std::exception& e) {
    fail(origin, k_line, e.what());
  }
  mf.reservoir.dim = dim;

  // ---- channels ----
  for (const auto& s : sections) {
    const bool is_tail = (s.header == "tail");
    const bool is_channel = s.header.rfind("channel", 0) == 0;
    if (!is_tail && !is_channel) continue;

    Channel ch;
    ch.is_tail = is_tail;
    if (is_channel) {
      std::string label = trim(s.header.substr(7));
      if (!label.empty() && label.front() == '.') label = trim(label.substr(1));
      if (label.empty())
        fail(origin, s.header_line, "channel header needs a frequency label, e.g. [channel.1]");
      try {
        std::size_t used = 0;
        ch.omega = std::stod(label, &used);
        if (used != label.size()) throw std::invalid_argument(label);
      } catch (const std::exception&) {
        fail(origin, s.header_line, "cannot parse channel label '" + label + "' as a number");
      }
    }

    const auto& [ival_text, ival_line] = need(origin, s, "interval");
    const auto ival = parse_numbers(origin, ival_line, "interval", ival_text);
    if (ival.size() != 2 || !(ival[1] > ival[0]))
      fail(origin, ival_line, "field 'interval': need two numbers a b with a < b");
    ch.a = ival[0];
    ch.b = ival[1];

    ch.mult = 1;
    if (const auto it = s.fields.find("multiplicity"); it != s.fields.end()) {
      try {
        ch.mult = std::stoi(it->second.first);
      } catch (const std::exception&) {
        fail(origin, it->second.second, "field 'multiplicity': cannot parse integer");
      }
      if (ch.mult < 1 || ch.mult > 16)
        fail(origin, it->second.second, "field 'multiplicity': need 1 <= m <= 16");
    }

    const auto& [prof_text, prof_line] = need(origin, s, "profile");
    ch.profile = parse_profile(origin, prof_line, prof_text);

    const auto& [coup_text, coup_line] = need(origin, s, "coupling");
    ch.coupling =
        parse_complex_matrix(origin, coup_line, "coupling", coup_text, dim * ch.mult, dim);

    mf.reservoir.channels.push_back(std::move(ch));
  }

  // ---- [discretization] ----
  for (const auto& s : sections) {
    if (s.header != "discretization") continue;
    if (const auto it = s.fields.find("rule"); it != s.fields.end()) {
      if (it->second.first == "midpoint")
        mf.rule = GridRule::Midpoint;
      else if (it->second.first == "gauss")
        mf.rule = GridRule::Gauss;
      else
        fail(origin, it->second.second,
             "field 'rule': expected 'midpoint' or 'gauss', got '" + it->second.first + "'");
    }
    if (const auto it = s.fields.find("modes_per_channel"); it != s.fields.end()) {
      try {
        mf.modes_per_channel = std::stoi(it->second.first);
      } catch (const std::exception&) {
        fail(origin, it->second.second, "field 'modes_per_channel': cannot parse integer");
      }
      if (mf.modes_per_channel < 1)
        fail(origin, it->second.second, "field 'modes_per_channel': need >= 1");
    }
  }

  for (const auto& s : sections)
    if (s.header != "system" && s.header != "tail" && s.header != "discretization" &&
        s.header.rfind("channel", 0) != 0)
      fail(origin, s.header_line, "unknown section [" + s.header + "]");

  try {
    validate_reservoir(mf.system, mf.reservoir);
  } catch (const std::exception& e) {
    fail(origin, 1, e.what());
  }
  return mf;
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_model: cannot open '" + path + "'");
  return parse_model(in, path);
}

}  // namespace wcl::sys

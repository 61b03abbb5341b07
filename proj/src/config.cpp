#include "retstat/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "retstat/error.hpp"
#include "retstat/maps.hpp"

namespace retstat {

namespace {

std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return std::string(s.substr(a, b - a));
}

class ExprParser {
 public:
  explicit ExprParser(std::string_view text) : s_(text) {}

  double parse() {
    const double v = sum();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return v;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ConfigError("bad expression '" + std::string(s_) + "': " + why);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  double sum() {
    double v = product();
    for (;;) {
      if (eat('+')) v += product();
      else if (eat('-')) v -= product();
      else return v;
    }
  }
  double product() {
    double v = unary();
    for (;;) {
      if (eat('*')) v *= unary();
      else if (eat('/')) v /= unary();
      else return v;
    }
  }
  double unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }
  double power() {
    const double base = atom();
    if (eat('^')) return std::pow(base, unary());
    return base;
  }
  double atom() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    if (eat('(')) {
      const double v = sum();
      if (!eat(')')) fail("missing ')'");
      return v;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const auto name = s_.substr(start, pos_ - start);
      if (name == "pi") return M_PI;
      if (name == "e") return M_E;
      if (!eat('(')) fail("unknown name '" + std::string(name) + "'");
      const double arg = sum();
      if (!eat(')')) fail("missing ')'");
      if (name == "sqrt") return std::sqrt(arg);
      if (name == "log") return std::log(arg);
      if (name == "exp") return std::exp(arg);
      fail("unknown function '" + std::string(name) + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }
  double number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
      ++pos_;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < s_.size() && (s_[look] == '+' || s_[look] == '-')) ++look;
      if (look < s_.size() && std::isdigit(static_cast<unsigned char>(s_[look]))) {
        pos_ = look;
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      }
    }
    const std::string tok(s_.substr(start, pos_ - start));
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size()) fail("bad number '" + tok + "'");
    return v;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

/// Splits flattened config text into (key, value) statements.
std::vector<std::pair<std::string, std::string>> statements(std::string_view text,
                                                            std::string_view origin) {
  std::string clean;
  {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      clean += line;
      clean += '\n';
    }
  }

  std::vector<std::pair<std::string, std::string>> out;
  std::vector<std::string> blocks;
  std::string current;
  int depth = 0;
  int line_no = 1;
  auto err = [&](const std::string& why) {
    return ConfigError(std::string(origin) + ":" + std::to_string(line_no) + ": " + why);
  };
  auto flush = [&] {
    const auto stmt = trim(current);
    current.clear();
    if (stmt.empty()) return;
    const auto eq = stmt.find('=');
    if (eq == std::string::npos) throw err("expected 'key = value', got '" + stmt + "'");
    auto key = trim(std::string_view(stmt).substr(0, eq));
    auto value = trim(std::string_view(stmt).substr(eq + 1));
    if (key.empty()) throw err("empty key");
    if (value.empty()) throw err("empty value for '" + key + "'");
    std::string full;
    for (const auto& b : blocks) full += b + ".";
    out.emplace_back(full + key, value);
  };

  for (char c : clean) {
    if (c == '[' || c == '(') ++depth;
    if (c == ']' || c == ')') --depth;
    if (depth < 0) throw err("unbalanced brackets");
    if (depth == 0 && c == '{') {
      const auto name = trim(current);
      current.clear();
      if (name.empty() || name.find('=') != std::string::npos)
        throw err("block needs a plain name before '{'");
      blocks.push_back(name);
      continue;
    }
    if (depth == 0 && c == '}') {
      flush();
      if (blocks.empty()) throw err("unmatched '}'");
      blocks.pop_back();
      continue;
    }
    if (c == '\n' || (depth == 0 && c == ',')) {
      if (c == '\n' && depth != 0) throw err("unterminated bracket");
      flush();
      if (c == '\n') ++line_no;
      continue;
    }
    current += c;
  }
  flush();
  if (!blocks.empty()) throw err("unterminated block '" + blocks.back() + "'");
  return out;
}

std::vector<std::string> parse_list(const std::string& value) {
  std::string v = trim(value);
  if (v.size() < 2 || v.front() != '[' || v.back() != ']')
    throw ConfigError("expected a list [a, b, ...], got '" + value + "'");
  std::vector<std::string> items;
  std::string cur;
  for (char c : std::string_view(v).substr(1, v.size() - 2)) {
    if (c == ',') {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !items.empty()) items.push_back(trim(cur));
  for (const auto& it : items)
    if (it.empty()) throw ConfigError("empty list item in '" + value + "'");
  return items;
}

std::uint64_t to_count(const std::string& key, const std::string& value) {
  const double v = parse_expression(value);
  if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e18)
    throw ConfigError(key + " must be a non-negative integer, got '" + value + "'");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

double parse_expression(std::string_view text) {
  const double v = ExprParser(text).parse();
  if (!std::isfinite(v)) throw ConfigError("expression '" + std::string(text) + "' is not finite");
  return v;
}

Interval parse_interval_expr(std::string_view text) {
  const auto t = trim(text);
  if (t.size() < 5) throw ConfigError("bad interval '" + t + "'");
  const char open = t.front(), close = t.back();
  if ((open != '[' && open != '(') || (close != ']' && close != ')'))
    throw ConfigError("interval must be written like [a,b), got '" + t + "'");
  const auto body = std::string_view(t).substr(1, t.size() - 2);
  int depth = 0;
  std::size_t comma = std::string_view::npos;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '(') ++depth;
    if (body[i] == ')') --depth;
    if (body[i] == ',' && depth == 0) {
      if (comma != std::string_view::npos) throw ConfigError("too many commas in '" + t + "'");
      comma = i;
    }
  }
  if (comma == std::string_view::npos) throw ConfigError("missing comma in '" + t + "'");
  Interval iv;
  iv.lo = parse_expression(body.substr(0, comma));
  iv.hi = parse_expression(body.substr(comma + 1));
  iv.lo_closed = open == '[';
  iv.hi_closed = close == ']';
  if (!(iv.lo < iv.hi)) throw ConfigError("interval '" + t + "' is empty");
  if (iv.lo < 0.0 || iv.hi > 1.0) throw ConfigError("interval '" + t + "' leaves [0,1]");
  return iv;
}

std::string_view to_string(Analysis a) {
  switch (a) {
    case Analysis::ks:
      return "ks";
    case Analysis::poisson:
      return "poisson";
    case Analysis::sandwich:
      return "sandwich";
    case Analysis::certificate:
      return "certificate";
    case Analysis::hsv:
      return "hsv";
    case Analysis::decay:
      return "decay";
  }
  return "unknown";
}

Analysis parse_analysis(std::string_view name) {
  for (auto a : {Analysis::ks, Analysis::poisson, Analysis::sandwich, Analysis::certificate,
                 Analysis::hsv, Analysis::decay})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown analysis '" + std::string(name) + "'");
}

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
  ExperimentConfig cfg;
  cfg.entries = statements(text, origin);

  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : cfg.entries)
    if (!kv.emplace(k, v).second) throw ConfigError("duplicate key '" + k + "'");

  auto real = [](const std::string& v) { return parse_expression(v); };
  bool have_seed = false, have_map = false, have_center = false;
  for (const auto& [key, value] : kv) {
    if (key == "map") {
      cfg.map_spec = value;
      have_map = true;
    } else if (key == "seed") {
      cfg.seed = to_count(key, value);
      have_seed = true;
    } else if (key == "ball.center" || key == "cylinder.center") {
      if (have_center) throw ConfigError("center given twice");
      cfg.center = real(value);
      have_center = true;
    } else if (key == "ball.radius") {
      cfg.radius = real(value);
    } else if (key == "cylinder.depth") {
      cfg.cylinder_depth = static_cast<int>(to_count(key, value));
    } else if (key == "induce.domain") {
      cfg.induce_domain = parse_interval_expr(value);
    } else if (key == "induce.max_steps") {
      cfg.induce_max_steps = to_count(key, value);
    } else if (key == "samples") {
      cfg.samples = to_count(key, value);
    } else if (key == "n_max") {
      cfg.n_max = to_count(key, value);
    } else if (key == "burn_in") {
      cfg.burn_in = to_count(key, value);
    } else if (key == "streams") {
      cfg.streams = to_count(key, value);
    } else if (key == "workers") {
      cfg.workers = static_cast<unsigned>(to_count(key, value));
    } else if (key == "output") {
      cfg.output = value;
    } else if (key == "analyses") {
      for (const auto& a : parse_list(value)) cfg.analyses.insert(parse_analysis(a));
    } else if (key == "measure") {
      if (value == "birkhoff") cfg.measure = MeasureSource::birkhoff;
      else if (value == "lebesgue") cfg.measure = MeasureSource::lebesgue;
      else throw ConfigError("measure must be birkhoff or lebesgue, got '" + value + "'");
    } else if (key == "measure.steps") {
      cfg.measure_steps = to_count(key, value);
    } else if (key == "measure.bins") {
      cfg.measure_bins = to_count(key, value);
    } else if (key == "short_return.n_max") {
      cfg.short_return_scan = to_count(key, value);
    } else if (key == "short_return.grid") {
      cfg.short_return_grid = to_count(key, value);
    } else if (key == "poisson.t") {
      cfg.poisson_t = real(value);
    } else if (key == "poisson.windows") {
      cfg.poisson_windows = to_count(key, value);
    } else if (key == "sandwich.epsilon") {
      cfg.sandwich_epsilon = real(value);
    } else if (key == "kac.entries") {
      cfg.kac_entries = to_count(key, value);
    } else if (key == "certificate.p_max") {
      cfg.certificate_p_max = to_count(key, value);
    } else if (key == "certificate.grid") {
      cfg.certificate_grid = to_count(key, value);
    } else if (key == "hsv.N") {
      cfg.hsv_N = to_count(key, value);
    } else if (key == "hsv.depth") {
      cfg.hsv_depth = static_cast<int>(to_count(key, value));
    } else if (key == "hsv.samples") {
      cfg.hsv_samples = to_count(key, value);
    } else if (key == "decay.lags") {
      cfg.decay_lags = to_count(key, value);
    } else if (key == "decay.orbit") {
      cfg.decay_orbit = to_count(key, value);
    } else {
      throw ConfigError("unknown key '" + key + "'");
    }
  }

  if (!have_seed) throw ConfigError("seed is mandatory");
  if (!have_map) throw ConfigError("map is mandatory");
  try {
    (void)parse_map_spec(cfg.map_spec);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("map: ") + e.what());
  }
  if (cfg.radius && cfg.cylinder_depth)
    throw ConfigError("give either ball.radius or cylinder.depth, not both");
  const bool needs_target = cfg.has(Analysis::ks) || cfg.has(Analysis::poisson) ||
                            cfg.has(Analysis::sandwich) || cfg.has(Analysis::hsv);
  if (needs_target && !have_center) throw ConfigError("the requested analyses need a center");
  if (needs_target && !cfg.radius && !cfg.cylinder_depth)
    throw ConfigError("the requested analyses need ball.radius or cylinder.depth");
  if (cfg.radius && !(*cfg.radius > 0.0)) throw ConfigError("radius must be positive");
  if (cfg.cylinder_depth && (*cfg.cylinder_depth < 1 || *cfg.cylinder_depth > 50))
    throw ConfigError("cylinder.depth must lie in [1,50]");
  if (have_center && (cfg.center < 0.0 || cfg.center > 1.0))
    throw ConfigError("center must lie in [0,1]");
  if ((cfg.has(Analysis::sandwich) || cfg.has(Analysis::certificate)) && !cfg.induce_domain)
    throw ConfigError("sandwich and certificate need an induce { domain = ... } block");
  if (cfg.samples == 0) throw ConfigError("samples must be positive");
  if (cfg.n_max == 0) throw ConfigError("n_max must be positive");
  if (cfg.streams == 0) throw ConfigError("streams must be positive");
  if (cfg.output.empty()) throw ConfigError("output must not be empty");
  if (!(cfg.poisson_t > 0.0)) throw ConfigError("poisson.t must be positive");
  if (!(cfg.sandwich_epsilon > 0.0)) throw ConfigError("sandwich.epsilon must be positive");
  if (cfg.hsv_depth > 24) throw ConfigError("hsv.depth must be at most 24");
  if (cfg.measure_bins == 0) throw ConfigError("measure.bins must be positive");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

}  // namespace retstat

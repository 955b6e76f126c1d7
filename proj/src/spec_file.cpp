#include "fedrr/spec_file.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "fedrr/errors.hpp"

namespace fedrr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const char* begin = v.data();
  if (!v.empty() && v.front() == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
  return out;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < -2147483647LL || x > 2147483647LL) {
    throw ConfigError(key + ": out of range");
  }
  return static_cast<int>(x);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Nastya:
      return "nastya";
    case Algorithm::GD:
      return "gd";
    case Algorithm::LocalSgdWr:
      return "local_sgd_wr";
  }
  return "unknown";
}

const std::vector<std::string>& spec_keys() {
  static const std::vector<std::string> keys = {
      "problem.kind",          "problem.M",      "problem.n",
      "problem.d",             "problem.mu",     "problem.L",
      "problem.heterogeneity", "problem.seed",   "problem.libsvm_path",
      "problem.lambda",        "problem.label_noise",
      "algo",                  "cstep",          "sstep",
      "cohort",                "T",              "mode",
      "seed",                  "ensemble",       "bounds",
      "x0",                    "out"};
  return keys;
}

ExperimentSpec parse_spec(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  const auto& known = spec_keys();
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown key '" + key + "'");
    }
    if (value.empty()) throw ConfigError(key + ": empty value");
    if (!kv.emplace(key, value).second) {
      throw ConfigError("duplicate key '" + key + "'");
    }
  }

  const auto has = [&](const char* k) { return kv.count(k) != 0; };
  const auto require = [&](const char* k) -> const std::string& {
    const auto it = kv.find(k);
    if (it == kv.end()) {
      throw ConfigError(std::string("missing required key '") + k + "'");
    }
    return it->second;
  };

  ExperimentSpec s;
  ProblemSpec& p = s.problem;
  p.kind = require("problem.kind");
  p.M = to_int("problem.M", require("problem.M"));
  if (p.M < 1) throw ConfigError("problem.M: must be >= 1");

  if (p.kind == "quadratic" || p.kind == "nonconvex" ||
      p.kind == "logreg_synthetic") {
    p.n = to_int("problem.n", require("problem.n"));
    p.d = to_int("problem.d", require("problem.d"));
    if (p.n < 1) throw ConfigError("problem.n: must be >= 1");
    if (p.d < 1) throw ConfigError("problem.d: must be >= 1");
  } else if (p.kind == "logreg") {
    p.libsvm_path = require("problem.libsvm_path");
  } else {
    throw ConfigError("problem.kind: unknown generator '" + p.kind + "'");
  }
  if (p.kind == "quadratic") {
    p.mu = to_double("problem.mu", require("problem.mu"));
    p.L = to_double("problem.L", require("problem.L"));
    if (!(p.mu > 0.0) || p.mu > p.L) {
      throw ConfigError("problem.mu/problem.L: need 0 < mu <= L");
    }
  }
  if (has("problem.heterogeneity")) {
    p.heterogeneity = to_double("problem.heterogeneity", kv["problem.heterogeneity"]);
    if (p.heterogeneity < 0.0) throw ConfigError("problem.heterogeneity: must be >= 0");
  }
  if (has("problem.seed")) p.seed = to_seed("problem.seed", kv["problem.seed"]);
  if (has("problem.lambda")) {
    p.lambda = to_double("problem.lambda", kv["problem.lambda"]);
    if (p.lambda < 0.0) throw ConfigError("problem.lambda: must be >= 0");
  }
  if (has("problem.label_noise")) {
    p.label_noise = to_double("problem.label_noise", kv["problem.label_noise"]);
    if (p.label_noise < 0.0 || p.label_noise > 1.0) {
      throw ConfigError("problem.label_noise: must lie in [0, 1]");
    }
  }

  const std::string& algo = require("algo");
  if (algo == "nastya") {
    s.algo = Algorithm::Nastya;
  } else if (algo == "gd") {
    s.algo = Algorithm::GD;
  } else if (algo == "local_sgd_wr") {
    s.algo = Algorithm::LocalSgdWr;
  } else {
    throw ConfigError("algo: unknown algorithm '" + algo + "'");
  }

  s.sstep = to_double("sstep", require("sstep"));
  if (s.algo == Algorithm::GD) {
    if (!(s.sstep > 0.0)) throw ConfigError("sstep: gd step must be > 0");
    if (has("cstep")) s.cstep = to_double("cstep", kv["cstep"]);
  } else {
    s.cstep = to_double("cstep", require("cstep"));
    if (!(s.cstep > 0.0)) throw ConfigError("cstep: must be > 0");
    if (s.sstep < 0.0) throw ConfigError("sstep: must be >= 0");
  }

  s.T = to_int("T", require("T"));
  if (s.T < 1) throw ConfigError("T: must be >= 1");

  if (has("cohort")) {
    s.cohort = to_int("cohort", kv["cohort"]);
    if (*s.cohort < 1 || *s.cohort > p.M) {
      throw ConfigError("cohort: must lie in [1, problem.M]");
    }
  }
  if (has("mode")) {
    const std::string& m = kv["mode"];
    if (m == "rr" || m == "random_reshuffling") {
      s.mode = ShuffleMode::RandomReshuffling;
    } else if (m == "so" || m == "shuffle_once") {
      s.mode = ShuffleMode::ShuffleOnce;
    } else {
      throw ConfigError("mode: expected rr or so, got '" + m + "'");
    }
  }
  if (has("seed")) s.seed = to_seed("seed", kv["seed"]);
  if (has("ensemble")) {
    s.ensemble = to_int("ensemble", kv["ensemble"]);
    if (s.ensemble < 1) throw ConfigError("ensemble: must be >= 1");
  }
  if (has("bounds")) {
    for (const auto& name : split_list(kv["bounds"])) {
      if (name == "none") continue;
      try {
        s.bounds.push_back(parse_bound_kind(name));
      } catch (const InputError&) {
        throw ConfigError("bounds: unknown bound '" + name + "'");
      }
    }
  }
  if (has("x0")) {
    s.x0.clear();
    for (const auto& item : split_list(kv["x0"])) {
      s.x0.push_back(to_double("x0", item));
    }
    if (s.x0.empty()) throw ConfigError("x0: empty list");
    if (s.x0.size() != 1 && p.kind != "logreg" &&
        static_cast<int>(s.x0.size()) != p.d) {
      throw ConfigError("x0: expected 1 or problem.d values");
    }
  }
  if (has("out")) {
    s.out = kv["out"];
    if (s.out.find('/') != std::string::npos) {
      throw ConfigError("out: must be a file prefix without '/'");
    }
  }
  return s;
}

ExperimentSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read spec file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_spec(buf.str());
}

}  // namespace fedrr

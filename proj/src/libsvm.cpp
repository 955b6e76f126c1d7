#include "fedrr/libsvm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>

#include "fedrr/errors.hpp"

namespace fedrr {

namespace {

bool parse_double(std::string_view s, double& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

LibsvmData parse_libsvm(std::istream& in) {
  LibsvmData data;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream tokens(line);
    std::string token;
    if (!(tokens >> token)) continue;

    SparseRow row;
    if (!parse_double(token, row.label)) {
      throw ParseError("bad label '" + token + "'", line_no);
    }
    int previous = 0;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) {
        throw ParseError("expected idx:val, got '" + token + "'", line_no);
      }
      int index = 0;
      double value = 0.0;
      const std::string_view view(token);
      if (!parse_int(view.substr(0, colon), index) || index < 1) {
        throw ParseError("bad feature index in '" + token + "'", line_no);
      }
      if (!parse_double(view.substr(colon + 1), value)) {
        throw ParseError("bad feature value in '" + token + "'", line_no);
      }
      if (index <= previous) {
        throw ParseError("feature indices must be strictly increasing (" +
                             std::to_string(previous) + " then " +
                             std::to_string(index) + ")",
                         line_no);
      }
      previous = index;
      row.features.emplace_back(index, value);
    }
    data.dim = std::max(data.dim, previous);
    data.rows.push_back(std::move(row));
  }
  return data;
}

LibsvmData parse_libsvm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open LibSVM file " + path.string());
  return parse_libsvm(in);
}

std::vector<double> coerce_binary_labels(const std::vector<SparseRow>& rows) {
  std::set<double> distinct;
  for (const auto& r : rows) distinct.insert(r.label);
  const auto subset_of = [&](std::initializer_list<double> allowed) {
    return std::all_of(distinct.begin(), distinct.end(), [&](double v) {
      return std::find(allowed.begin(), allowed.end(), v) != allowed.end();
    });
  };

  double negative = 0.0;
  if (subset_of({-1.0, 1.0})) {
    negative = -1.0;
  } else if (subset_of({0.0, 1.0})) {
    negative = 0.0;
  } else if (subset_of({1.0, 2.0})) {
    negative = 1.0;
  } else {
    throw InputError("labels cannot be coerced to {-1, +1}");
  }
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.label == negative ? -1.0 : 1.0);
  return out;
}

}  // namespace fedrr

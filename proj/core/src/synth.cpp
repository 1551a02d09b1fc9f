#include "freconv/synth.hpp"

#include <fstream>

namespace freconv {

void write_labels(const std::string& path, const std::vector<std::int64_t>& labels) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  for (std::int64_t v : labels) os << v << '\n';
}

std::vector<std::int64_t> read_labels(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open '" + path + "' for reading");
  std::vector<std::int64_t> labels;
  std::string line;
  long long lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(line, &used);
      if (used != line.size()) throw std::invalid_argument(line);
      labels.push_back(v);
    } catch (const std::exception&) {
      throw FormatError("label file '" + path + "' line " + std::to_string(lineno) +
                        " is not an integer");
    }
  }
  return labels;
}

}  // namespace freconv

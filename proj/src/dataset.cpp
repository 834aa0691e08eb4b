#include "hmmfit/dataset.hpp"

#include <charconv>
#include <fstream>

namespace hmmfit {

ObservationSeq tyt_data() {
  static const std::vector<int> values = {
      6, 5, 3, 6, 4, 3, 5, 6, 6, 6, 4, 6, 6, 4, 6, 6, 6, 6, 6, 4, 6, 5, 6, 7, 6, 5, 5, 5, 7,
      6, 5, 6, 5, 6, 6, 6, 5, 6, 7, 7, 6, 7, 6, 6, 6, 6, 5, 7, 6, 1, 6, 0, 2, 1, 6, 7, 6, 6,
      6, 5, 5, 6, 6, 2, 5, 0, 1, 1, 1, 2, 3, 1, 3, 1, 3, 0, 1, 1, 1, 4, 1, 4, 1, 2, 2, 2, 0};
  return ObservationSeq(values);
}

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

ObservationSeq parse_counts(std::istream& in) {
  std::vector<int> values;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = trim(line);
    if (tok.empty()) continue;
    if (tok == "NA") {
      values.push_back(ObservationSeq::kMissing);
      continue;
    }
    int v = 0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size() || v < 0) {
      throw HmmError(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected a non-negative count or NA, got '" +
                                                std::string(tok) + "'");
    }
    values.push_back(v);
  }
  if (values.empty()) throw HmmError(ErrorCode::EmptyData, "input contains no observations");
  return ObservationSeq(std::move(values));
}

ObservationSeq load_dataset(std::string_view source) {
  if (source == "tyt") return tyt_data();
  std::ifstream in{std::string(source)};
  if (!in) throw HmmError(ErrorCode::ParseError, "cannot open data file '" + std::string(source) + "'");
  return parse_counts(in);
}

}  // namespace hmmfit

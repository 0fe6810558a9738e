#include "crimematch/treatment.hpp"

#include <algorithm>
#include <sstream>

#include "crimematch/csv.hpp"
#include "crimematch/error.hpp"

namespace crimematch::treatment {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::treated:
      return "treated";
    case Label::control:
      return "control";
    case Label::dropped:
      return "dropped";
  }
  return "?";
}

std::string_view to_string(StructureKind kind) { return kind == StructureKind::dense ? "dense" : "sparse"; }

StructureKind parse_structure_kind(std::string_view text) {
  if (text == "sparse") return StructureKind::sparse;
  if (text == "dense") return StructureKind::dense;
  throw Error(ErrorKind::config, "treatment", "unknown structure kind '" + std::string(text) + "'");
}

std::vector<std::string> Assignment::with_label(Label label) const {
  std::vector<std::string> out;
  for (const auto& [geoid, l] : labels) {
    if (l == label) out.push_back(geoid);
  }
  return out;
}

std::size_t Assignment::count(Label label) const {
  return static_cast<std::size_t>(
      std::count_if(labels.begin(), labels.end(), [&](const auto& kv) { return kv.second == label; }));
}

Assignment classify_sparse(const Counts& counts) {
  Assignment a;
  a.kind = StructureKind::sparse;
  a.threshold = 0.0;
  a.counts = counts;
  for (const auto& [geoid, c] : counts) a.labels[geoid] = c >= 1 ? Label::treated : Label::control;
  return a;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::data, "treatment", "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::map<std::string, double> percentile_ranks(const Counts& counts) {
  std::vector<std::int64_t> sorted;
  sorted.reserve(counts.size());
  for (const auto& kv : counts) sorted.push_back(kv.second);
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  std::map<std::string, double> ranks;
  for (const auto& [geoid, c] : counts) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), c);
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), c);
    const auto smaller = static_cast<double>(lo - sorted.begin());
    const auto equal = static_cast<double>(hi - lo);
    ranks[geoid] = (smaller + 0.5 * equal) / n;
  }
  return ranks;
}

Assignment classify_dense(const Counts& counts, DropBand band) {
  if (counts.size() < 10) {
    throw Error(ErrorKind::data, "treatment",
                "dense classification needs at least 10 tracts (deciles undefined), got " +
                    std::to_string(counts.size()));
  }
  if (!(band.lower <= band.upper)) throw Error(ErrorKind::config, "treatment", "drop band lower bound exceeds upper");
  Assignment a;
  a.kind = StructureKind::dense;
  a.counts = counts;
  std::vector<double> values;
  values.reserve(counts.size());
  for (const auto& kv : counts) values.push_back(static_cast<double>(kv.second));
  a.threshold = median(values);
  const auto ranks = percentile_ranks(counts);
  for (const auto& [geoid, c] : counts) {
    const double rank = ranks.at(geoid);
    if (rank >= band.lower && rank < band.upper) {
      a.labels[geoid] = Label::dropped;
    } else {
      a.labels[geoid] = static_cast<double>(c) > a.threshold ? Label::treated : Label::control;
    }
  }
  return a;
}

std::string to_csv(const Assignment& assignment) {
  std::ostringstream out;
  out << "geoid,label,count,threshold\n";
  const std::string thr = csv::format_double(assignment.threshold);
  for (const auto& [geoid, label] : assignment.labels) {
    out << csv::escape(geoid) << ',' << to_string(label) << ',' << assignment.counts.at(geoid) << ',' << thr << '\n';
  }
  return out.str();
}

Assignment assignment_from_csv(std::string_view text, StructureKind kind) {
  Assignment a;
  a.kind = kind;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = csv::split_line(line);
    if (f.size() != 4) throw Error(ErrorKind::data, "treatment", "malformed assignment row: " + line);
    const auto count = csv::parse_int(f[2]);
    const auto thr = csv::parse_double(f[3]);
    if (!count || !thr) throw Error(ErrorKind::data, "treatment", "malformed assignment row: " + line);
    Label label;
    if (f[1] == "treated") {
      label = Label::treated;
    } else if (f[1] == "control") {
      label = Label::control;
    } else if (f[1] == "dropped") {
      label = Label::dropped;
    } else {
      throw Error(ErrorKind::data, "treatment", "unknown label '" + f[1] + "'");
    }
    a.labels[f[0]] = label;
    a.counts[f[0]] = *count;
    a.threshold = *thr;
  }
  return a;
}

}  // namespace crimematch::treatment

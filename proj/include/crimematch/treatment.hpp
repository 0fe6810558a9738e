#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace crimematch::treatment {

enum class Label { treated, control, dropped };
enum class StructureKind { sparse, dense };

std::string_view to_string(Label label);
std::string_view to_string(StructureKind kind);
StructureKind parse_structure_kind(std::string_view text);

using Counts = std::map<std::string, std::int64_t>;

struct Assignment {
  std::map<std::string, Label> labels;
  Counts counts;
  double threshold = 0.0;
  StructureKind kind = StructureKind::sparse;

  std::vector<std::string> with_label(Label label) const;
  std::size_t count(Label label) const;
};

/// Percentile-rank band excluded from dense classification, as fractions:
/// a tract is dropped when lower <= rank < upper.
struct DropBand {
  double lower = 0.30;
  double upper = 0.50;
};

/// Treated iff count >= 1.
Assignment classify_sparse(const Counts& counts);

/// Median threshold (midpoint for even n) with a percentile-rank drop band.
/// A tract's rank is (#strictly smaller + #equal / 2) / n. Needs >= 10 tracts.
Assignment classify_dense(const Counts& counts, DropBand band = {});

double median(std::vector<double> values);
/// Midrank percentile of every entry, in the map's key order.
std::map<std::string, double> percentile_ranks(const Counts& counts);

/// `geoid,label,count,threshold` audit CSV.
std::string to_csv(const Assignment& assignment);
Assignment assignment_from_csv(std::string_view text, StructureKind kind);

}  // namespace crimematch::treatment

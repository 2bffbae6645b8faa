#include <map>
#include <ostream>

#include "tpgm/bench.hpp"
#include "tpgm/cli.hpp"
#include "tpgm/errors.hpp"

namespace tpgm::cli {

std::vector<BlockSummary> summarize_trace(const TrainingTrace& trace) {
  if (trace.events.empty()) throw ContractError("trace has no projection events");
  const ProjectionEvent& last = trace.events.back();
  std::map<int, BlockSummary> blocks;
  for (std::size_t g = 0; g < trace.group_names.size(); ++g) {
    BlockSummary& b = blocks[trace.block_id[g]];
    b.block_id = trace.block_id[g];
    ++b.groups;
    b.mean_gamma += last.gammas[g];
    b.mean_alpha += last.alphas[g];
    b.mean_distance += last.distances[g];
  }
  std::vector<BlockSummary> out;
  for (auto& [id, b] : blocks) {
    const auto n = static_cast<double>(b.groups);
    b.mean_gamma /= n;
    b.mean_alpha /= n;
    b.mean_distance /= n;
    out.push_back(b);
  }
  return out;
}

void write_block_summary_csv(std::ostream& out, const std::vector<BlockSummary>& rows) {
  using bench::format_double;
  out << "block_id,groups,mean_gamma,mean_alpha,mean_distance\n";
  for (const auto& r : rows) {
    out << r.block_id << ',' << r.groups << ',' << format_double(r.mean_gamma) << ','
        << format_double(r.mean_alpha) << ',' << format_double(r.mean_distance) << '\n';
  }
}

}  // namespace tpgm::cli

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tpgm/tpgm.hpp"

namespace tpgm::cli {

/// Exit codes: 0 success, 1 config / contract / usage error, 2 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

struct BlockSummary {
  int block_id = 0;
  std::size_t groups = 0;
  double mean_gamma = 0.0;
  double mean_alpha = 0.0;
  double mean_distance = 0.0;
};

/// Per-block means over the last projection event of a trace.
std::vector<BlockSummary> summarize_trace(const TrainingTrace& trace);

/// Columns: block_id,groups,mean_gamma,mean_alpha,mean_distance
void write_block_summary_csv(std::ostream& out, const std::vector<BlockSummary>& rows);

}  // namespace tpgm::cli

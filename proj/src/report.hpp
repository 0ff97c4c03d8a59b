#pragma once

#include <optional>

#include "wavecomm/artifacts.hpp"
#include "wavecomm/commands.hpp"

namespace wavecomm {

// Writes the report assets for a finished run; used by cmd_report.
ReportOutcome render_report(const RunLayout& layout, const AffinityMatrix& affinity,
                            const CommunityResult& communities, const std::optional<SpectrumReport>& spectrum);

}  // namespace wavecomm

#pragma once

#include <istream>
#include <optional>
#include <string>
#include <string_view>

#include "hmmfit/hmm_core.hpp"

namespace hmmfit {

/// The 87 daily counts of the tinnitus app series.
ObservationSeq tyt_data();

/// One count per line; `NA` marks a missing value and blank lines are
/// skipped. Throws ParseError (with the 1-based line number) or EmptyData.
ObservationSeq parse_counts(std::istream& in);

/// `tyt` selects the embedded series; anything else is read as a file path.
ObservationSeq load_dataset(std::string_view source);

}  // namespace hmmfit

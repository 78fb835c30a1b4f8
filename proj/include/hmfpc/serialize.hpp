#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hmfpc/basis.hpp"
#include "hmfpc/dataset.hpp"
#include "hmfpc/fit.hpp"
#include "hmfpc/inference.hpp"
#include "hmfpc/population.hpp"
#include "hmfpc/simgen.hpp"
#include "hmfpc/tuning.hpp"

namespace hmfpc {

inline constexpr int kModelFormatVersion = 1;

/// FNV-1a digest of subject ids, times and values in dataset order.
std::string data_hash(const LongitudinalDataset& data);

/// A fitted model with everything needed to predict without refitting.
struct SavedModel {
  OrthoBasis basis;
  FittedModel model;
  std::string data_hash;
  std::vector<std::string> subject_ids;
  /// Named seeds used to produce the model (fit, bootstrap, ...).
  std::vector<std::pair<std::string, std::uint64_t>> seeds;
};

SavedModel make_saved_model(const OrthoBasis& basis, const FittedModel& model,
                            const LongitudinalDataset& data);

/// Versioned JSON; doubles are written in shortest round-trip form.
std::string model_to_json(const SavedModel& saved);
/// Throws ParseError on malformed documents and IntegrityError when the
/// stored basis hash does not match the rebuilt basis.
SavedModel model_from_json(const std::string& text);

/// Throws IntegrityError when `data` is not the dataset the model was fit to.
void check_model_matches(const SavedModel& saved, const LongitudinalDataset& data);

std::string trace_to_json(const TuningTrace& trace);

/// Columns subject,time,estimate,lower,upper,level,deriv. `ids` maps band
/// subject indices to names.
void write_bands_csv(std::ostream& out, std::span<const ConfidenceBand> bands,
                     std::span<const std::string> ids);

/// time,mean,variance
void write_gp_mean_csv(std::ostream& out, const GpEstimate& gp);
/// Square matrix; header row holds the grid times.
void write_gp_cov_csv(std::ostream& out, const GpEstimate& gp);
std::string gp_to_json(const GpEstimate& gp);

/// Simulation spec with every dgp parameter block.
std::string simspec_to_json(const SimSpec& spec);
/// Missing fields keep their defaults; unknown dgp names raise DomainError.
SimSpec simspec_from_json(const std::string& text);

/// Writes to a temporary sibling and renames it into place.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace hmfpc

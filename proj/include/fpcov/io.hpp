/// \file io.hpp
/// \brief File formats: long-format CSV, surface/eigen CSV, JSON artifacts.
///
/// All floating-point output is printed with %.17g so that values
/// round-trip bit-exactly through text.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fpcov/covariance.hpp"
#include "fpcov/crossval.hpp"
#include "fpcov/eigensystem.hpp"
#include "fpcov/noise.hpp"
#include "fpcov/presmooth.hpp"

namespace fpcov {
namespace io {

/// Shortest round-trip decimal representation of a double.
std::string fmt17(double v);

/// FNV-1a 64-bit hash of a byte string.
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

/// A stable fingerprint of a dataset (ids, times, values).
std::string dataset_fingerprint(const std::vector<ObservedCurve>& data);

/// Long-format observation CSV with header "curve_id,t,y".  Curves are
/// grouped by id in order of first appearance.  Throws IoError if the file
/// cannot be read, ParseError on malformed content, NoData when no rows.
std::vector<ObservedCurve> read_long_csv(const std::string& path);
void write_long_csv(const std::string& path,
                    const std::vector<ObservedCurve>& data);

/// Surface CSV: one header line with the grid points, then L lines of L
/// values (row-major).
void write_surface_csv(const std::string& path,
                       const CovarianceSurface& surface);
/// Read back (grid points, row-major values); for round-trip checks.
void read_surface_csv(const std::string& path, std::vector<double>* points,
                      std::vector<double>* values);

/// Eigenfunction CSV on the unit-interval nodes: "s,psi1,...,psiK".
void write_eigen_csv(const std::string& path, const EigenSystem& eig);
/// Eigenvalue CSV: header "lambda1,...,lambdaK" plus one value row.
void write_eigenvalues_csv(const std::string& path, const EigenSystem& eig);

/// Noise-variance JSON artifact (estimate plus resolved band).
void write_sigma2_json(const std::string& path, const SigmaEstimate& est);

/// Model-selection table: "K,h,approx_score,exact_score,selected"; the
/// exact column is empty when not computed.
void write_cv_table(const std::string& path, const SelectionResult& sel);

/// Manifest: command, canonical config JSON, its hash, seed, output list,
/// and any non-fatal warnings raised along the way.
void write_manifest(const std::string& path, const std::string& command,
                    const std::string& config_json, std::uint64_t seed,
                    const std::vector<std::string>& outputs,
                    const std::vector<std::string>& warnings = {});

}  // namespace io
}  // namespace fpcov

#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "atse/grid.hpp"
#include "atse/microsim.hpp"
#include "atse/model.hpp"
#include "atse/trajectory.hpp"

namespace atse {

/// Forward pass clamped to [0, v_max]. Throws ConfigError when the field's
/// grid constants differ from the model's.
SpeedField estimate(const EncoderDecoder& model, const PartialField& partial);

/// Baseline reconstruction: every cell copies the nearest observed cell
/// (Euclidean distance in cell indices, first in row-major order on ties).
/// A field without observations is uniform v_max.
SpeedField nearest_observed_fill(const PartialField& partial);

/// Bilinear interpolation with nodes at cell centres, clamped at the edges.
double interpolate_speed(const SpeedField& field, double x, double t);

/// Traces vehicles entering at x = 0 through the field. Explicit Euler with
/// step dt/substeps on a time lattice shared by all vehicles (the first step
/// after entry is shortened to join it). Samples are recorded at entry and at
/// every multiple of dt until the vehicle leaves the road or the time span.
/// Throws DomainError for entry times outside [0, time span) or unsorted.
TrajectorySet infer_trajectories(const SpeedField& field, std::span<const double> entry_times,
                                 std::size_t substeps = 10);

struct FifoReport {
  std::size_t violations = 0;  // sample instants with a later vehicle ahead
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (earlier, later) vehicle indices, distinct
  std::size_t pairs_compared = 0;
};

/// Counts instants where a later-entering vehicle is more than 1e-6 m ahead
/// of an earlier one. Vehicles are taken in set order as entry order.
FifoReport fifo_violations(const TrajectorySet& trajs);

struct EvalReport {
  double rmse_kmph = 0.0;
  double relative_rmse = 0.0;  // rmse / mean(truth); NaN when undefined
  bool relative_defined = true;
  std::optional<double> observed_rmse_kmph;  // over observed cells only
  double mean_truth_kmph = 0.0;
  std::size_t cells = 0;
  std::vector<double> error;  // est − truth per cell, m/s

  /// Flat `key=value` lines.
  std::string to_text() const;
};

/// Throws ShapeError on dimension mismatch.
EvalReport evaluate(const SpeedField& est, const SpeedField& truth, const PartialField* observed = nullptr);

struct PcaResult {
  std::vector<std::vector<double>> components;  // unit vectors
  std::vector<double> variances;                // eigenvalues of the covariance
  std::vector<std::vector<double>> projections; // per sample
  double total_variance = 0.0;
  bool degenerate = false;
};

/// Top principal components by power iteration with deflation.
PcaResult principal_components(std::span<const std::vector<double>> vectors, std::size_t count = 2,
                               double tolerance = 1e-10, std::size_t max_iterations = 10000);

struct SilhouetteResult {
  double overall = 0.0;
  std::vector<std::pair<int, double>> per_label;  // label → mean silhouette
};

/// Mean silhouette with Euclidean distances. Points in singleton clusters
/// score 0.
SilhouetteResult silhouette(std::span<const std::vector<double>> points, std::span<const int> labels);

struct EmbeddingReport {
  std::vector<std::vector<double>> hidden;  // raw hidden vectors
  std::vector<std::pair<double, double>> coords;
  std::vector<Demand> labels;
  double silhouette = 0.0;
  std::vector<std::pair<Demand, double>> per_label;
  std::vector<double> explained_variance;
  bool degenerate = false;
};

/// Hidden vectors → 2-D PCA → silhouette by demand label. Throws DomainError
/// for fewer than 3 samples or fewer than 2 distinct labels.
EmbeddingReport embed_and_score(const EncoderDecoder& model, std::span<const PartialField> samples,
                                std::span<const Demand> labels);

/// Same analysis on precomputed hidden vectors.
EmbeddingReport score_embedding(std::vector<std::vector<double>> hidden, std::span<const Demand> labels);

/// `sample_id,pc1,pc2,label`.
void write_embedding_csv(std::ostream& out, const EmbeddingReport& report);

}  // namespace atse

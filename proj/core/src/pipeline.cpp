#include "atse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include "atse/errors.hpp"

namespace atse {

SpeedField estimate(const EncoderDecoder& model, const PartialField& partial) {
  if (!model.config.matches(partial.spec())) {
    throw ConfigError("field grid constants (dx, dt, v_max, v_cong) differ from the model's");
  }
  return forward(model, partial);
}

SpeedField nearest_observed_fill(const PartialField& partial) {
  const GridSpec& spec = partial.spec();
  const auto speeds = decode_partial(partial);
  std::vector<std::size_t> observed;
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    if (speeds[k]) observed.push_back(k);
  }
  std::vector<double> out(spec.cells(), spec.v_max);
  if (observed.empty()) return SpeedField(spec, std::move(out));
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (speeds[k]) {
      out[k] = *speeds[k];
      continue;
    }
    const auto ix = static_cast<long>(k / spec.nt);
    const auto it = static_cast<long>(k % spec.nt);
    long best = std::numeric_limits<long>::max();
    std::size_t best_k = observed.front();
    for (std::size_t o : observed) {
      const long dx = static_cast<long>(o / spec.nt) - ix;
      const long dt = static_cast<long>(o % spec.nt) - it;
      const long d2 = dx * dx + dt * dt;
      if (d2 < best) {
        best = d2;
        best_k = o;
      }
    }
    out[k] = *speeds[best_k];
  }
  return SpeedField(spec, std::move(out));
}

double interpolate_speed(const SpeedField& field, double x, double t) {
  const GridSpec& spec = field.spec();
  auto locate = [](double coord, double step, std::size_t n, std::size_t& i0, std::size_t& i1, double& w) {
    const double f = std::clamp(coord / step - 0.5, 0.0, static_cast<double>(n - 1));
    i0 = std::min(static_cast<std::size_t>(f), n - 1);
    i1 = std::min(i0 + 1, n - 1);
    w = f - static_cast<double>(i0);
  };
  std::size_t x0, x1, t0, t1;
  double wx, wt;
  locate(x, spec.dx, spec.nx, x0, x1, wx);
  locate(t, spec.dt, spec.nt, t0, t1, wt);
  const double a = field.at(x0, t0) * (1.0 - wt) + field.at(x0, t1) * wt;
  const double b = field.at(x1, t0) * (1.0 - wt) + field.at(x1, t1) * wt;
  return a * (1.0 - wx) + b * wx;
}

TrajectorySet infer_trajectories(const SpeedField& field, std::span<const double> entry_times,
                                 std::size_t substeps) {
  if (substeps == 0) throw DomainError("substeps must be at least 1");
  const GridSpec& spec = field.spec();
  const double road = spec.road_span();
  const double horizon = spec.time_span();
  const double h = spec.dt / static_cast<double>(substeps);
  for (std::size_t k = 0; k < entry_times.size(); ++k) {
    const double t0 = entry_times[k];
    if (!(t0 >= 0.0 && t0 < horizon)) {
      throw DomainError("entry time " + std::to_string(t0) + " outside the field's time span");
    }
    if (k > 0 && t0 < entry_times[k - 1]) throw DomainError("entry times must be sorted ascending");
  }

  TrajectorySet out;
  for (std::size_t k = 0; k < entry_times.size(); ++k) {
    Trajectory traj{static_cast<std::int64_t>(k), {}};
    double t = entry_times[k];
    double x = 0.0;
    traj.samples.push_back({t, x, interpolate_speed(field, x, t)});
    auto n = static_cast<std::uint64_t>(std::floor(t / h)) + 1;
    while (true) {
      const double t_next = static_cast<double>(n) * h;
      if (t_next > horizon + 1e-9 * h) break;
      x += (t_next - t) * interpolate_speed(field, x, t);
      t = t_next;
      if (x >= road) break;
      if (n % substeps == 0) {
        const double t_rec = static_cast<double>(n / substeps) * spec.dt;
        traj.samples.push_back({t_rec, x, interpolate_speed(field, x, t_rec)});
      }
      ++n;
    }
    out.vehicles.push_back(std::move(traj));
  }
  return out;
}

FifoReport fifo_violations(const TrajectorySet& trajs) {
  FifoReport report;
  const auto& veh = trajs.vehicles;
  std::vector<std::map<double, double>> positions(veh.size());
  for (std::size_t i = 0; i < veh.size(); ++i) {
    for (const auto& s : veh[i].samples) positions[i].emplace(s.t, s.x);
  }
  for (std::size_t i = 0; i < veh.size(); ++i) {
    for (std::size_t j = i + 1; j < veh.size(); ++j) {
      ++report.pairs_compared;
      bool crossed = false;
      for (const auto& s : veh[j].samples) {
        const auto it = positions[i].find(s.t);
        if (it == positions[i].end()) continue;
        if (s.x > it->second + 1e-6) {
          ++report.violations;
          crossed = true;
        }
      }
      if (crossed) report.pairs.emplace_back(i, j);
    }
  }
  return report;
}

std::string EvalReport::to_text() const {
  char buf[128];
  std::string out;
  auto line = [&](const char* key, double v) {
    std::snprintf(buf, sizeof buf, "%s=%.10g\n", key, v);
    out += buf;
  };
  line("rmse_kmph", rmse_kmph);
  if (relative_defined) {
    line("relative_rmse", relative_rmse);
  } else {
    out += "relative_rmse=undefined\n";
  }
  if (observed_rmse_kmph) line("observed_rmse_kmph", *observed_rmse_kmph);
  line("mean_truth_kmph", mean_truth_kmph);
  out += "cells=" + std::to_string(cells) + "\n";
  return out;
}

EvalReport evaluate(const SpeedField& est, const SpeedField& truth, const PartialField* observed) {
  const auto& a = est.spec();
  const auto& b = truth.spec();
  if (a.nx != b.nx || a.nt != b.nt) throw ShapeError("estimate and truth differ in dimensions");
  if (observed && (observed->spec().nx != b.nx || observed->spec().nt != b.nt)) {
    throw ShapeError("observation mask differs in dimensions");
  }
  EvalReport r;
  r.cells = b.cells();
  r.error.resize(r.cells);
  double sq = 0.0, truth_sum = 0.0, obs_sq = 0.0;
  std::size_t obs_n = 0;
  for (std::size_t k = 0; k < r.cells; ++k) {
    const double e = est.values()[k] - truth.values()[k];
    r.error[k] = e;
    sq += e * e;
    truth_sum += truth.values()[k];
    if (observed && observed->observed()[k]) {
      obs_sq += e * e;
      ++obs_n;
    }
  }
  const double rmse = std::sqrt(sq / static_cast<double>(r.cells));
  const double mean = truth_sum / static_cast<double>(r.cells);
  r.rmse_kmph = rmse * kMpsToKmph;
  r.mean_truth_kmph = mean * kMpsToKmph;
  r.relative_defined = mean > 0.0;
  r.relative_rmse = r.relative_defined ? rmse / mean : std::numeric_limits<double>::quiet_NaN();
  if (observed && obs_n > 0) r.observed_rmse_kmph = std::sqrt(obs_sq / static_cast<double>(obs_n)) * kMpsToKmph;
  return r;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

void orthogonalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  for (const auto& u : basis) {
    const double p = dot(v, u);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] -= p * u[k];
  }
}

double normalize(std::vector<double>& v) {
  const double n = std::sqrt(dot(v, v));
  if (n > 0.0) {
    for (auto& x : v) x /= n;
  }
  return n;
}

}  // namespace

PcaResult principal_components(std::span<const std::vector<double>> vectors, std::size_t count, double tolerance,
                               std::size_t max_iterations) {
  if (vectors.empty()) throw DomainError("PCA needs at least one vector");
  const std::size_t d = vectors.front().size();
  const std::size_t n = vectors.size();
  for (const auto& v : vectors) {
    if (v.size() != d) throw ShapeError("PCA vectors differ in length");
  }
  count = std::min(count, d);

  std::vector<double> mean(d, 0.0);
  for (const auto& v : vectors) {
    for (std::size_t k = 0; k < d; ++k) mean[k] += v[k];
  }
  for (auto& m : mean) m /= static_cast<double>(n);

  std::vector<std::vector<double>> centered(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < d; ++k) centered[i][k] = vectors[i][k] - mean[k];
  }

  std::vector<double> cov(d * d, 0.0);
  for (const auto& c : centered) {
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) cov[a * d + b] += c[a] * c[b];
    }
  }
  for (auto& c : cov) c /= static_cast<double>(n);

  PcaResult result;
  for (std::size_t a = 0; a < d; ++a) result.total_variance += cov[a * d + a];
  result.degenerate = !(result.total_variance > 1e-18);

  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss;
  std::vector<double> w(d);
  for (std::size_t c = 0; c < count; ++c) {
    std::vector<double> v(d);
    for (auto& x : v) x = gauss(rng);
    orthogonalize(v, result.components);
    normalize(v);
    double lambda = 0.0;
    if (!result.degenerate) {
      for (std::size_t iter = 0; iter < max_iterations; ++iter) {
        for (std::size_t a = 0; a < d; ++a) w[a] = dot(std::span(&cov[a * d], d), v);
        orthogonalize(w, result.components);
        if (normalize(w) <= 1e-300) break;  // remaining spectrum is zero
        double change = 0.0;
        for (std::size_t a = 0; a < d; ++a) change = std::max(change, std::abs(w[a] - v[a]));
        v = w;
        if (change < tolerance) break;
      }
      orthogonalize(v, result.components);
      normalize(v);
      for (std::size_t a = 0; a < d; ++a) w[a] = dot(std::span(&cov[a * d], d), v);
      lambda = std::max(0.0, dot(v, w));
      // Deflate.
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) cov[a * d + b] -= lambda * v[a] * v[b];
      }
    }
    result.components.push_back(v);
    result.variances.push_back(lambda);
  }

  result.projections.assign(n, std::vector<double>(count, 0.0));
  if (!result.degenerate) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < count; ++c) result.projections[i][c] = dot(centered[i], result.components[c]);
    }
  }
  return result;
}

SilhouetteResult silhouette(std::span<const std::vector<double>> points, std::span<const int> labels) {
  if (points.size() != labels.size()) throw ShapeError("one label per point required");
  const std::size_t n = points.size();
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];

  SilhouetteResult result;
  if (n == 0 || sizes.size() < 2) return result;

  std::map<int, std::pair<double, std::size_t>> per_label;
  std::map<int, double> sum_to;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_to.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double d2 = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) {
        const double diff = points[i][k] - points[j][k];
        d2 += diff * diff;
      }
      sum_to[labels[j]] += std::sqrt(d2);
    }
    double s = 0.0;
    const std::size_t own = sizes[labels[i]];
    if (own > 1) {
      const double a = sum_to[labels[i]] / static_cast<double>(own - 1);
      double b = std::numeric_limits<double>::infinity();
      for (const auto& [label, size] : sizes) {
        if (label != labels[i]) b = std::min(b, sum_to[label] / static_cast<double>(size));
      }
      const double denom = std::max(a, b);
      s = denom > 0.0 ? (b - a) / denom : 0.0;
    }
    total += s;
    auto& acc = per_label[labels[i]];
    acc.first += s;
    ++acc.second;
  }
  result.overall = total / static_cast<double>(n);
  for (const auto& [label, acc] : per_label) {
    result.per_label.emplace_back(label, acc.first / static_cast<double>(acc.second));
  }
  return result;
}

EmbeddingReport score_embedding(std::vector<std::vector<double>> hidden, std::span<const Demand> labels) {
  if (hidden.size() < 3) throw DomainError("embedding needs at least 3 samples");
  if (hidden.size() != labels.size()) throw ShapeError("one label per sample required");
  const std::set<Demand> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw DomainError("embedding needs at least 2 distinct labels");

  EmbeddingReport report;
  report.labels.assign(labels.begin(), labels.end());
  const auto pca = principal_components(hidden, 2);
  report.degenerate = pca.degenerate;
  report.explained_variance = pca.variances;
  report.hidden = std::move(hidden);

  std::vector<std::vector<double>> points;
  std::vector<int> ids;
  for (std::size_t i = 0; i < pca.projections.size(); ++i) {
    const auto& p = pca.projections[i];
    report.coords.emplace_back(p.size() > 0 ? p[0] : 0.0, p.size() > 1 ? p[1] : 0.0);
    points.push_back({report.coords.back().first, report.coords.back().second});
    ids.push_back(static_cast<int>(labels[i]));
  }
  if (report.degenerate) {
    for (Demand d : distinct) report.per_label.emplace_back(d, 0.0);
    return report;
  }
  const auto sil = silhouette(points, ids);
  report.silhouette = sil.overall;
  for (const auto& [label, value] : sil.per_label) report.per_label.emplace_back(static_cast<Demand>(label), value);
  return report;
}

EmbeddingReport embed_and_score(const EncoderDecoder& model, std::span<const PartialField> samples,
                                std::span<const Demand> labels) {
  if (samples.size() != labels.size()) throw ShapeError("one label per sample required");
  std::vector<std::vector<double>> hidden;
  hidden.reserve(samples.size());
  for (const auto& s : samples) hidden.push_back(encode_hidden(model, s));
  return score_embedding(std::move(hidden), labels);
}

void write_embedding_csv(std::ostream& out, const EmbeddingReport& report) {
  out << "sample_id,pc1,pc2,label\n";
  char buf[128];
  for (std::size_t i = 0; i < report.coords.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,", i, report.coords[i].first, report.coords[i].second);
    out << buf << to_string(report.labels[i]) << '\n';
  }
}

}  // namespace atse

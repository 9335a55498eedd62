#include "tnesi/learning.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "tnesi/classifier.hpp"
#include "tnesi/inference.hpp"

namespace tnesi {

namespace {

constexpr Index kBlockRows = 1024;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start, Clock::time_point end) {
  return std::chrono::duration<double>(end - start).count();
}

}  // namespace

void FreeEnergyTrace::push(int iteration, double value) {
  if (!entries_.empty() && iteration <= entries_.back().iteration)
    throw ConfigError("free-energy trace iterations must increase");
  entries_.push_back({iteration, value});
}

std::optional<std::size_t> FreeEnergyTrace::first_decrease(double rel_slack) const {
  for (std::size_t i = 1; i < entries_.size(); ++i) {
    const double prev = entries_[i - 1].value;
    if (entries_[i].value < prev - rel_slack * std::abs(prev)) return i;
  }
  return std::nullopt;
}

void FreeEnergyTrace::write_csv(const std::string& path, const std::string& index_name) const {
  std::ofstream out(path);
  if (!out) throw DataError(DataError::Kind::Io, "cannot write " + path);
  out << index_name << ",free_energy\n";
  char buf[64];
  for (const auto& e : entries_) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, e.value);
    out << e.iteration << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
  }
}

void update_top(TopWeights& R, const ClassPosterior& t, const TruncatedPosterior& s, double eps_R) {
  RowMatrix& Rw = R.mutable_weights();
  for (Index k = 0; k < Rw.rows(); ++k) {
    const double rate = eps_R * t[k];
    if (rate == 0.0) continue;
    Rw.row(k) *= 1.0 - rate;
    for (Index i = 0; i < s.size(); ++i) Rw(k, s.support()[i]) += rate * s.probs()(i);
  }
}

double free_energy(const Dataset& data, const BottomWeights& W, std::span<const TruncationSet> sets) {
  if (static_cast<Index>(sets.size()) != data.size())
    throw ConfigError("need one truncation set per data point");
  const Vector row_sums = W.weights().rowwise().sum();
  const double log_prior = -std::log(static_cast<double>(W.clusters()));
  const RowMatrix& logW = W.log_weights();

  double F = 0.0;
  Vector joint;
  for (Index n = 0; n < data.size(); ++n) {
    const auto& set = sets[static_cast<std::size_t>(n)];
    const auto y = data.observation(n);
    joint.resize(set.size());
    for (Index i = 0; i < set.size(); ++i) {
      const Index c = set[i];
      joint(i) = logW.row(c).dot(y) - row_sums(c);
    }
    F += log_sum_exp(joint) + log_prior - data.log_factorial(n);
  }
  return F;
}

namespace {

// Calls visit(n, I_n, set_n, log joint mass of set_n) for every data point.
template <typename Visit>
void sweep(const Dataset& data, const BottomWeights& W, Index C_prime, Visit&& visit) {
  if (data.dim() != W.dim()) throw ConfigError("data and weights differ in dimension");
  const Vector row_sums = W.weights().rowwise().sum();
  const double log_prior = -std::log(static_cast<double>(W.clusters()));
  Vector joint;
  for (Index start = 0; start < data.size(); start += kBlockRows) {
    const Index len = std::min(kBlockRows, data.size() - start);
    const RowMatrix I = integrate_batch(W, data.observations().middleRows(start, len));
    for (Index i = 0; i < len; ++i) {
      const auto In = I.row(i);
      auto set = select_truncation(In, C_prime);
      joint.resize(set.size());
      for (Index j = 0; j < set.size(); ++j) joint(j) = In(set[j]) - row_sums(set[j]);
      visit(start + i, In, std::move(set), log_sum_exp(joint) + log_prior - data.log_factorial(start + i));
    }
  }
}

}  // namespace

double optimal_free_energy(const Dataset& data, const BottomWeights& W, Index C_prime) {
  double F = 0.0;
  sweep(data, W, C_prime, [&F](Index, const auto&, TruncationSet&&, double mass) { F += mass; });
  return F;
}

double log_likelihood(const Dataset& data, const BottomWeights& W) {
  return optimal_free_energy(data, W, W.clusters());
}

EStep truncated_e_step(const Dataset& data, const BottomWeights& W, Index C_prime) {
  EStep out;
  out.sets.reserve(static_cast<std::size_t>(data.size()));
  out.posteriors.reserve(static_cast<std::size_t>(data.size()));
  sweep(data, W, C_prime, [&out](Index, const auto& In, TruncationSet&& set, double mass) {
    out.free_energy += mass;
    out.posteriors.push_back(truncated_posterior(In, set));
    out.sets.push_back(std::move(set));
  });
  return out;
}

std::vector<TruncationSet> batch_e_step(const Dataset& data, const BottomWeights& W, Index C_prime) {
  return truncated_e_step(data, W, C_prime).sets;
}

MStep batch_m_step(const Dataset& data, std::span<const TruncatedPosterior> posteriors,
                   const BottomWeights& previous) {
  if (static_cast<Index>(posteriors.size()) != data.size())
    throw ConfigError("need one posterior per data point");
  SufficientStats stats(previous.clusters(), previous.dim());
  for (Index n = 0; n < data.size(); ++n) stats.add(posteriors[static_cast<std::size_t>(n)], data.observation(n));

  RowMatrix W = previous.weights();
  Index dead = 0;
  for (Index c = 0; c < W.rows(); ++c) {
    if (stats.s_sum(c) > 0.0) {
      W.row(c) = stats.sy_sum.row(c) / stats.s_sum(c);
    } else {
      ++dead;
    }
  }
  return {BottomWeights(std::move(W), previous.mass()), dead};
}

TvEmIteration tv_em_iteration(const Dataset& data, const BottomWeights& W, Index C_prime) {
  EStep e = truncated_e_step(data, W, C_prime);
  MStep m = batch_m_step(data, e.posteriors, W);
  const double F_m = free_energy(data, m.W, e.sets);
  return {std::move(m.W), std::move(e.sets), std::move(e.posteriors), e.free_energy, F_m, m.dead_clusters};
}

BatchRun run_tv_em(const Dataset& data, BottomWeights W, Index C_prime, int iterations) {
  BatchRun run{std::move(W), {}, 0};
  for (int t = 1; t <= iterations; ++t) {
    TvEmIteration it = tv_em_iteration(data, run.W, C_prime);
    run.trace.push(2 * t - 1, it.free_energy_e);
    run.trace.push(2 * t, it.free_energy_m);
    run.dead_clusters += it.dead_clusters;
    run.W = std::move(it.W);
  }
  return run;
}

EpochStats online_epoch(const Dataset& data, BottomWeights& W, TopWeights& R, const ModelConfig& cfg,
                        Rng& rng) {
  if (data.dim() != W.dim() || W.clusters() != R.clusters() || R.classes() != data.classes())
    throw ConfigError("data, bottom and top weights disagree in shape");

  std::vector<Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  LogActivation I(W.clusters());
  for (const Index n : order) {
    const auto y = data.observation(n);
    const auto& label = data.label(n);

    const auto t0 = Clock::now();
    integrate_into(W, y.data(), I);
    const auto t1 = Clock::now();
    const TruncationSet set = select_truncation(I, cfg.C_prime);
    const TruncatedPosterior s = truncated_posterior(I, set);
    const ClassPosterior t = class_activation(s, R, label);
    bool update_r = true;
    std::optional<ClassPosterior> pseudo;
    if (label) {
      ++stats.gate.labeled;
    } else if (passes_gate(t, false, cfg.theta_bvsb)) {
      ++stats.gate.self_labeled;
      pseudo = ClassPosterior::one_hot(R.classes(), argmax(t.values()));
    } else {
      ++stats.gate.gated;
      update_r = false;
    }
    const auto t2 = Clock::now();
    update_bottom(W, s, y, cfg.eps_W);
    if (update_r) update_top(R, pseudo ? *pseudo : t, s, cfg.eps_R);
    const auto t3 = Clock::now();

    stats.seconds.integrate += seconds_since(t0, t1);
    stats.seconds.select += seconds_since(t1, t2);
    stats.seconds.update += seconds_since(t2, t3);
  }
  return stats;
}

}  // namespace tnesi

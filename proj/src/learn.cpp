#include "otproto/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "otproto/cost.hpp"
#include "otproto/error.hpp"
#include "otproto/simd.hpp"

namespace otproto {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void ema_update_rows(PrototypeSet& protos, const TransportPlan& plan,
                     std::span<const float* const> rows, double eta) {
  const std::size_t np = protos.size();
  const std::size_t d = protos.dim();
  if (plan.cols() != np) {
    throw Error(ErrorCode::DimMismatch, "plan has " + std::to_string(plan.cols()) +
                                            " columns for " + std::to_string(np) + " prototypes");
  }
  if (plan.rows() != rows.size()) {
    throw Error(ErrorCode::DimMismatch, "plan rows do not match the batch");
  }
  const auto& k = simd::active();
  std::vector<double> acc(np * d, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto t = plan.row(r);
    for (std::size_t i = 0; i < np; ++i) {
      if (t[i] != 0.0f) k.axpy_f32(t[i], rows[r], acc.data() + i * d, d);
    }
  }
  const double blend = (1.0 - eta) * static_cast<double>(np);
  auto weights = protos.mutable_weights();
  for (std::size_t x = 0; x < weights.size(); ++x) {
    weights[x] = static_cast<float>(eta * weights[x] + blend * acc[x]);
  }
  for (float w : weights) {
    if (!std::isfinite(w)) throw Error(ErrorCode::NonFinite, "prototype update diverged");
  }
}

void check_data(std::span<const ScaleData> data) {
  if (data.empty()) throw Error(ErrorCode::EmptyDataset, "no scales to train");
  const std::size_t count = data.front().grids.size();
  for (const auto& scale : data) {
    if (scale.grids.empty()) {
      throw Error(ErrorCode::EmptyDataset,
                  "scale " + std::to_string(scale.scale_id) + " has no training grids");
    }
    if (scale.grids.size() != count) {
      throw Error(ErrorCode::DimMismatch, "scales list different numbers of samples");
    }
    const auto& first = scale.grids.front();
    for (const auto& g : scale.grids) {
      if (g.height() != first.height() || g.width() != first.width() || g.dim() != first.dim()) {
        throw Error(ErrorCode::DimMismatch,
                    "grids of scale " + std::to_string(scale.scale_id) + " differ in shape");
      }
    }
  }
}

}  // namespace

const Bank* TrainState::find(int scale_id, double alpha) const noexcept {
  for (const auto& b : banks) {
    if (b.protos.scale_id() == scale_id && b.protos.alpha() == alpha) return &b;
  }
  return nullptr;
}

void ema_update(PrototypeSet& protos, const TransportPlan& plan,
                std::span<const float> batch_features, double eta) {
  const std::size_t d = protos.dim();
  if (batch_features.size() % d != 0) {
    throw Error(ErrorCode::DimMismatch, "batch features are not a multiple of the dimension");
  }
  std::vector<const float*> rows(batch_features.size() / d);
  for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = batch_features.data() + r * d;
  ema_update_rows(protos, plan, rows, eta);
}

void ema_update(PrototypeSet& protos, const TransportPlan& plan,
                std::span<const FeatureGrid> batch, double eta) {
  std::vector<const float*> rows;
  for (const auto& g : batch) {
    if (g.dim() != protos.dim()) throw Error(ErrorCode::DimMismatch, "feature dimension differs");
    for (std::size_t c = 0; c < g.cells(); ++c) rows.push_back(g.feature(c).data());
  }
  ema_update_rows(protos, plan, rows, eta);
}

TrainState init_train_state(std::span<const ScaleData> data, const TrainConfig& cfg) {
  cfg.validate();
  check_data(data);
  TrainState state;
  state.rng.seed(cfg.rng_seed);
  std::uint64_t bank_index = 0;
  for (const auto& scale : data) {
    const auto& g = scale.grids.front();
    // Checkpoints store alpha as float32; keep the in-memory value identical
    // so that resumed runs match uninterrupted ones bit for bit.
    for (double alpha : {0.0, static_cast<double>(static_cast<float>(cfg.alpha_local))}) {
      const std::uint64_t seed = splitmix64(cfg.rng_seed + ++bank_index);
      state.banks.push_back({init_prototypes(cfg.n, g.height(), g.width(), g.dim(), alpha, seed,
                                             cfg.init_mean, cfg.init_std, scale.scale_id),
                             {}});
    }
  }
  return state;
}

void train_epoch(TrainState& state, std::span<const ScaleData> data, const TrainConfig& cfg,
                 const AugmentHook& augment) {
  cfg.validate();
  check_data(data);
  const std::size_t count = data.front().grids.size();
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), state.rng);

  const SolverParams params{cfg.epsilon, cfg.max_sinkhorn_iters, cfg.marginal_tol,
                            cfg.log_domain};
  std::vector<StructCostTable> tables;
  for (const auto& scale : data) {
    tables.emplace_back(scale.grids.front().height(), scale.grids.front().width());
  }

  std::vector<double> cost_sum(state.banks.size(), 0.0);
  std::vector<std::size_t> converged(state.banks.size(), 0);
  std::size_t batches = 0;

  for (std::size_t start = 0; start < count; start += cfg.batch_size) {
    const std::size_t size = std::min(cfg.batch_size, count - start);
    if (size < cfg.n) continue;
    for (std::size_t s = 0; s < data.size(); ++s) {
      std::vector<FeatureGrid> batch;
      batch.reserve(size);
      for (std::size_t b = 0; b < size; ++b) batch.push_back(data[s].grids[order[start + b]]);
      if (augment) augment(data[s].scale_id, batch, state.rng);

      for (std::size_t bi = 0; bi < state.banks.size(); ++bi) {
        Bank& bank = state.banks[bi];
        if (bank.protos.scale_id() != data[s].scale_id) continue;
        const CostConfig cost_cfg{bank.protos.alpha(), cfg.zero_vectors};
        const CostMatrix m = cost_matrix(batch, bank.protos, cost_cfg, &tables[s]);
        const TransportPlan plan = solve(m, params);
        cost_sum[bi] += plan.transport_cost(m);
        converged[bi] += plan.converged() ? 1 : 0;
        ema_update(bank.protos, plan, batch, cfg.eta);
      }
    }
    ++batches;
    ++state.batches;
  }

  for (std::size_t bi = 0; bi < state.banks.size(); ++bi) {
    auto& diag = state.banks[bi].diagnostics;
    const double denom = batches == 0 ? 1.0 : static_cast<double>(batches);
    diag.mean_cost.push_back(cost_sum[bi] / denom);
    diag.converged_fraction.push_back(static_cast<double>(converged[bi]) / denom);
  }
  ++state.epoch;
}

void train(TrainState& state, std::span<const ScaleData> data, const TrainConfig& cfg,
           const EpochCallback& on_epoch, const AugmentHook& augment) {
  while (state.epoch < cfg.epochs && !state.stopped_early) {
    train_epoch(state, data, cfg, augment);
    if (cfg.early_stop_tol > 0.0) {
      bool plateau = true;
      for (const auto& bank : state.banks) {
        const auto& c = bank.diagnostics.mean_cost;
        if (c.size() < 2) {
          plateau = false;
          break;
        }
        const double prev = c[c.size() - 2];
        const double rel = std::abs(c.back() - prev) / std::max(std::abs(prev), 1e-300);
        if (rel >= cfg.early_stop_tol) plateau = false;
      }
      state.stopped_early = plateau;
    }
    if (on_epoch) on_epoch(state);
  }
}

TrainState train(std::span<const ScaleData> data, const TrainConfig& cfg,
                 const EpochCallback& on_epoch, const AugmentHook& augment) {
  TrainState state = init_train_state(data, cfg);
  train(state, data, cfg, on_epoch, augment);
  return state;
}

}  // namespace otproto

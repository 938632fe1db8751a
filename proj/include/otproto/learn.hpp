#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "otproto/core.hpp"
#include "otproto/sinkhorn.hpp"

namespace otproto {

/// Training grids of one scale. Every scale lists the same samples in the same order.
struct ScaleData {
  int scale_id = 0;
  std::vector<FeatureGrid> grids;
};

struct BankDiagnostics {
  std::vector<double> mean_cost;           // per epoch, mean <M, T> over batches
  std::vector<double> converged_fraction;  // per epoch, fraction of converged solves
};

/// One prototype set (a scale and an alpha) plus its running diagnostics.
struct Bank {
  PrototypeSet protos;
  BankDiagnostics diagnostics;
};

struct TrainState {
  // Ordered by scale (input order), then global (alpha = 0) before local.
  std::vector<Bank> banks;
  std::size_t epoch = 0;
  std::size_t batches = 0;
  Rng rng;
  bool stopped_early = false;

  const Bank* find(int scale_id, double alpha) const noexcept;
};

/// Optional per-batch transform applied to the copied batch grids of one scale.
using AugmentHook = std::function<void(int scale_id, std::vector<FeatureGrid>& batch, Rng& rng)>;

/// Called after every epoch, e.g. to checkpoint.
using EpochCallback = std::function<void(const TrainState& state)>;

/// p_i <- eta p_i + (1 - eta) Np sum_k T[k][i] z_k for every prototype, all
/// updates reading the pre-update weights. `batch_features` is rows x D in the
/// plan's row order.
void ema_update(PrototypeSet& protos, const TransportPlan& plan,
                std::span<const float> batch_features, double eta);

/// Same update with rows taken batch-major from the grids.
void ema_update(PrototypeSet& protos, const TransportPlan& plan,
                std::span<const FeatureGrid> batch, double eta);

/// Fresh state: two banks per scale (alpha = 0 and alpha = cfg.alpha_local),
/// Gaussian-initialized, and the shuffling generator seeded from cfg.rng_seed.
TrainState init_train_state(std::span<const ScaleData> data, const TrainConfig& cfg);

/// Runs one epoch: shuffle, then per batch and per bank build the normalized
/// cost, solve entropic OT and apply the EMA update. A trailing batch smaller
/// than cfg.n is dropped.
void train_epoch(TrainState& state, std::span<const ScaleData> data, const TrainConfig& cfg,
                 const AugmentHook& augment = {});

/// Trains from `state.epoch` up to cfg.epochs (or an early stop).
void train(TrainState& state, std::span<const ScaleData> data, const TrainConfig& cfg,
           const EpochCallback& on_epoch = {}, const AugmentHook& augment = {});

TrainState train(std::span<const ScaleData> data, const TrainConfig& cfg,
                 const EpochCallback& on_epoch = {}, const AugmentHook& augment = {});

}  // namespace otproto

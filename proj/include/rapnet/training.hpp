#pragma once

#include <functional>

#include "rapnet/data_io.hpp"
#include "rapnet/network.hpp"

namespace rapnet {

struct TrainConfig {
    double lr = 2.5e-4;
    int batch_size = 32;
    int epochs = 500;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::uint64_t seed = 0;
    bool ablate_rapconv = false;
    int checkpoint_every = 0;  // epochs; 0 disables periodic checkpoints
    double grad_clip = 0.0;    // 0 disables clipping

    void validate() const {
        if (lr <= 0.0) throw ValueError("train: lr must be > 0");
        if (beta1 <= 0.0 || beta1 >= 1.0 || beta2 <= 0.0 || beta2 >= 1.0)
            throw ValueError("train: Adam betas must lie in (0, 1)");
        if (batch_size < 1 || epochs < 0) throw ValueError("train: bad batch size or epoch count");
    }
};

// Per-parameter Adam moments, laid out in for_each_param order.
struct AdamState {
    std::vector<std::vector<float>> m, v;
    std::int64_t t = 0;
};

AdamState make_adam_state(RapNetParams<float>& params);

// Standard Adam with bias correction. Gradients are keyed by traversal
// order; a non-finite gradient aborts naming the parameter.
void adam_step(RapNetParams<float>& params,
               const std::vector<std::pair<std::string, Tensor<float>>>& grads, AdamState& state,
               const TrainConfig& cfg);

struct LossRow {
    int epoch = 0;
    int step = 0;  // global step index
    float loss = 0.0f;
};

struct TrainResult {
    std::vector<LossRow> curve;
};

// Deterministic MSE training over batched forward/backward passes. Data
// order reshuffles each epoch from the seeded RNG; the last short batch is
// kept. `on_epoch(epoch, mean_loss)` fires after each epoch when set.
TrainResult train(const std::vector<FusionPair>& dataset, const TrainConfig& cfg,
                  RapNetParams<float>& params,
                  const std::function<void(int, double)>& on_epoch = nullptr,
                  const std::function<void(int)>& on_checkpoint = nullptr);

// One optimizer step on an explicit batch; returns the batch loss.
// Exposed for tests and for step-driven (rather than epoch-driven) runs.
float train_step(const std::vector<const FusionPair*>& batch, const TrainConfig& cfg,
                 RapNetParams<float>& params, AdamState& state);

void write_loss_csv(const std::vector<LossRow>& curve, const std::string& path);

}  // namespace rapnet

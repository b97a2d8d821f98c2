#include "rapnet/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>

namespace rapnet {

AdamState make_adam_state(RapNetParams<float>& params) {
    AdamState st;
    params.for_each_param([&](const std::string&, Tensor<float>& t) {
        st.m.emplace_back(t.data.size(), 0.0f);
        st.v.emplace_back(t.data.size(), 0.0f);
    });
    return st;
}

void adam_step(RapNetParams<float>& params,
               const std::vector<std::pair<std::string, Tensor<float>>>& grads, AdamState& state,
               const TrainConfig& cfg) {
    cfg.validate();
    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    std::size_t idx = 0;
    params.for_each_param([&](const std::string& name, Tensor<float>& t) {
        const auto& [gname, g] = grads[idx];
        if (gname != name || g.data.size() != t.data.size())
            throw ValueError("adam: gradient list out of order at '" + name + "'");
        double scale = 1.0;
        if (cfg.grad_clip > 0.0) {
            double norm2 = 0.0;
            for (float gv : g.data) norm2 += static_cast<double>(gv) * gv;
            const double norm = std::sqrt(norm2);
            if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
        }
        auto& m = state.m[idx];
        auto& v = state.v[idx];
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const float gv = static_cast<float>(g.data[i] * scale);
            if (!std::isfinite(gv))
                throw NumericError("non-finite gradient for parameter '" + name + "'");
            m[i] = static_cast<float>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gv);
            v[i] = static_cast<float>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gv * gv);
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t.data[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
        ++idx;
    });
}

namespace {
// Stack pairs into batch tensors, normalizing by the radiometric max.
void make_batch(const std::vector<const FusionPair*>& batch, TensorF& pan, TensorF& ms,
                TensorF& ref) {
    const FusionPair& f0 = *batch.front();
    const int B = static_cast<int>(batch.size());
    pan = TensorF(B, 1, f0.pan.h, f0.pan.w);
    ms = TensorF(B, f0.ms.c, f0.ms.h, f0.ms.w);
    ref = TensorF(B, f0.ms.c, f0.pan.h, f0.pan.w);
    for (int b = 0; b < B; ++b) {
        const FusionPair& f = *batch[static_cast<std::size_t>(b)];
        if (f.ms.c != f0.ms.c || f.ratio != f0.ratio)
            throw ShapeError("train: inconsistent band count or ratio across dataset");
        if (!f.ref) throw ValueError("train: sample without reference");
        const float inv = 1.0f / f.radiometric_max;
        auto copy_plane = [&](const TensorF& src, TensorF& dst) {
            std::size_t len = static_cast<std::size_t>(src.size());
            for (std::size_t i = 0; i < len; ++i)
                dst.data[static_cast<std::size_t>(b) * len + i] = src.data[i] * inv;
        };
        copy_plane(f.pan, pan);
        copy_plane(f.ms, ms);
        copy_plane(*f.ref, ref);
    }
}
}  // namespace

float train_step(const std::vector<const FusionPair*>& batch, const TrainConfig& cfg,
                 RapNetParams<float>& params, AdamState& state) {
    TensorF pan, ms, ref;
    make_batch(batch, pan, ms, ref);
    Tape<float> tape;
    BoundNet net = bind_network(tape, params, true);
    const int out = rapnet_forward(tape, tape.leaf(std::move(pan)), tape.leaf(std::move(ms)), net);
    const int loss = tape.mse(out, tape.leaf(std::move(ref)));
    tape.backward(loss);
    std::vector<std::pair<std::string, Tensor<float>>> grads;
    std::size_t leaf_idx = 0;
    // leaves were bound in traversal order, so grads line up with it
    std::vector<int> leaf_ids;
    collect_leaf_ids(net, leaf_ids);
    params.for_each_param([&](const std::string& name, Tensor<float>&) {
        grads.emplace_back(name, tape.grad(leaf_ids[leaf_idx]));
        ++leaf_idx;
    });
    adam_step(params, grads, state, cfg);
    return tape.value(loss).data[0];
}

TrainResult train(const std::vector<FusionPair>& dataset, const TrainConfig& cfg,
                  RapNetParams<float>& params, const std::function<void(int, double)>& on_epoch,
                  const std::function<void(int)>& on_checkpoint) {
    cfg.validate();
    if (dataset.empty()) throw ValueError("train: empty dataset");
    AdamState state = make_adam_state(params);
    Rng shuffle_rng(cfg.seed ^ 0xa5a5a5a5a5a5a5a5ull);
    TrainResult result;
    int global_step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(dataset.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const FusionPair*> batch;
            for (std::size_t i = pos;
                 i < std::min(order.size(), pos + static_cast<std::size_t>(cfg.batch_size)); ++i)
                batch.push_back(&dataset[order[i]]);
            const float loss = train_step(batch, cfg, params, state);
            result.curve.push_back({epoch, global_step, loss});
            epoch_loss += loss;
            ++batches;
            ++global_step;
        }
        if (on_epoch) on_epoch(epoch, epoch_loss / std::max(1, batches));
        if (on_checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            on_checkpoint(epoch);
    }
    return result;
}

void write_loss_csv(const std::vector<LossRow>& curve, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os << "epoch,step,loss\n";
    os.precision(std::numeric_limits<float>::max_digits10);
    for (const auto& row : curve) os << row.epoch << "," << row.step << "," << row.loss << "\n";
    if (!os) throw IoError("short write to " + path);
}

}  // namespace rapnet

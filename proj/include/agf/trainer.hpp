#pragma once

#include <vector>

#include "agf/model.hpp"
#include "agf/rng.hpp"
#include "agf/tasks.hpp"

namespace agf {

struct TrainOptions {
    int epochs = 10;
    int batch_size = 16;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    long long max_steps = -1;   // <0: no cap
    double stop_at_acc = -1.0;  // percent; >=0 enables early stopping
    int eval_every = 0;         // extra validation probes every N steps
    int threads = 1;

    void validate() const;
};

struct LossPoint {
    long long step = 0;
    double loss = 0.0;
};

struct EvalPoint {
    long long step = 0;
    double accuracy = 0.0;
};

struct TrainingTrace {
    std::vector<double> epoch_scores;  // validation accuracy after each epoch
    std::vector<LossPoint> losses;     // one per optimizer step
    std::vector<EvalPoint> evals;
    long long steps = 0;
    double final_accuracy = 0.0;
    long long target_reached_step = -1;  // first step where stop_at_acc was met
};

class Adam {
public:
    Adam(std::vector<Param*>& params, double lr, double beta1, double beta2, double eps);

    void step(const Grads& g);
    long long steps_taken() const { return t_; }

private:
    std::vector<Param*>* params_;
    double lr_, b1_, b2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Mean per-token loss over the batch with gradients accumulated into grads.
// With threads > 1 the batch is split into contiguous chunks and the partial
// gradients are reduced in chunk order, so results are reproducible for a
// fixed thread count.
double batch_loss_threaded(const Model& model, const std::vector<const Example*>& batch,
                           Grads& grads, int threads);

// Runs Adam over shuffled batches. The rng drives only the epoch shuffles.
// Throws TrainingError when a batch loss turns non-finite.
TrainingTrace train(Model& model, const Dataset& train_set, const Dataset& val_set,
                    const TrainOptions& opts, Rng& rng);

}  // namespace agf

#include "agf/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "agf/error.hpp"

namespace agf {

void TrainOptions::validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw ConfigError("betas must lie in [0, 1)");
    if (eps <= 0.0) throw ConfigError("eps must be positive");
    if (eval_every < 0) throw ConfigError("eval_every must be non-negative");
    if (threads < 1) throw ConfigError("threads must be positive");
}

Adam::Adam(std::vector<Param*>& params, double lr, double beta1, double beta2, double eps)
    : params_(&params), lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        m_[i].assign(params[i]->v.size(), 0.0);
        v_[i].assign(params[i]->v.size(), 0.0);
    }
}

void Adam::step(const Grads& g) {
    if (g.g.size() != params_->size()) throw ShapeError("gradient/parameter list mismatch");
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_->size(); ++i) {
        std::vector<double>& p = (*params_)[i]->v;
        const std::vector<double>& gr = g.g[i];
        for (size_t j = 0; j < p.size(); ++j) {
            m_[i][j] = b1_ * m_[i][j] + (1.0 - b1_) * gr[j];
            v_[i][j] = b2_ * v_[i][j] + (1.0 - b2_) * gr[j] * gr[j];
            p[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
        }
    }
}

double batch_loss_threaded(const Model& model, const std::vector<const Example*>& batch,
                           Grads& grads, int threads) {
    const int t_count = std::min<int>(threads, static_cast<int>(batch.size()));
    if (t_count <= 1) return model.batch_loss(batch, &grads);

    size_t total_tokens = 0;
    for (const Example* ex : batch) total_tokens += ex->tgt.size();

    std::vector<std::vector<const Example*>> chunks(t_count);
    std::vector<size_t> chunk_tokens(t_count, 0);
    for (int t = 0; t < t_count; ++t) {
        size_t lo = batch.size() * t / t_count;
        size_t hi = batch.size() * (t + 1) / t_count;
        chunks[t].assign(batch.begin() + lo, batch.begin() + hi);
        for (const Example* ex : chunks[t]) chunk_tokens[t] += ex->tgt.size();
    }

    std::vector<Grads> partial(t_count);
    for (Grads& p : partial) p.g.assign(grads.g.size(), {});
    for (size_t i = 0; i < grads.g.size(); ++i)
        for (Grads& p : partial) p.g[i].assign(grads.g[i].size(), 0.0);

    std::vector<double> chunk_loss(t_count, 0.0);
    std::vector<std::thread> pool;
    pool.reserve(t_count);
    for (int t = 0; t < t_count; ++t)
        pool.emplace_back([&, t] { chunk_loss[t] = model.batch_loss(chunks[t], &partial[t]); });
    for (std::thread& th : pool) th.join();

    // Each chunk normalized by its own token count; rescale before reducing.
    double loss = 0.0;
    for (int t = 0; t < t_count; ++t) {
        const double f =
            static_cast<double>(chunk_tokens[t]) / static_cast<double>(total_tokens);
        loss += chunk_loss[t] * f;
        for (std::vector<double>& v : partial[t].g)
            for (double& x : v) x *= f;
        grads.add(partial[t]);
    }
    return loss;
}

TrainingTrace train(Model& model, const Dataset& train_set, const Dataset& val_set,
                    const TrainOptions& opts, Rng& rng) {
    opts.validate();
    if (train_set.empty()) throw ConfigError("empty training set");

    Adam adam(model.params(), opts.lr, opts.beta1, opts.beta2, opts.eps);
    Grads grads;
    grads.init_like(model.params());
    TrainingTrace trace;

    std::vector<size_t> idx(train_set.size());
    std::iota(idx.begin(), idx.end(), size_t{0});

    auto evaluate = [&](long long step) {
        double acc = val_set.empty() ? 0.0 : model.accuracy(val_set);
        trace.evals.push_back({step, acc});
        trace.final_accuracy = acc;
        if (opts.stop_at_acc >= 0.0 && acc >= opts.stop_at_acc &&
            trace.target_reached_step < 0)
            trace.target_reached_step = step;
        return acc;
    };

    bool done = false;
    for (int epoch = 0; epoch < opts.epochs && !done; ++epoch) {
        rng.shuffle(idx);
        for (size_t b0 = 0; b0 < idx.size() && !done; b0 += opts.batch_size) {
            std::vector<const Example*> batch;
            const size_t b1 = std::min(idx.size(), b0 + opts.batch_size);
            batch.reserve(b1 - b0);
            for (size_t i = b0; i < b1; ++i) batch.push_back(&train_set[idx[i]]);

            grads.zero();
            double loss = batch_loss_threaded(model, batch, grads, opts.threads);
            ++trace.steps;
            if (!std::isfinite(loss)) throw TrainingError("training loss diverged", trace.steps);
            adam.step(grads);
            trace.losses.push_back({trace.steps, loss});

            if (opts.eval_every > 0 && trace.steps % opts.eval_every == 0) {
                evaluate(trace.steps);
                if (trace.target_reached_step >= 0) done = true;
            }
            if (opts.max_steps >= 0 && trace.steps >= opts.max_steps) done = true;
        }
        trace.epoch_scores.push_back(evaluate(trace.steps));
        if (trace.target_reached_step >= 0) done = true;
    }
    return trace;
}

}  // namespace agf

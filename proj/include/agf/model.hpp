#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "agf/attention.hpp"
#include "agf/matrix.hpp"
#include "agf/poscoeff.hpp"
#include "agf/rng.hpp"
#include "agf/tasks.hpp"

namespace agf {

struct ModelConfig {
    int layers = 2;  // encoder layers and decoder layers each
    int heads = 4;
    int d_model = 64;
    int d_ff = 128;
    int seq_len = 64;  // table size and hard input cap
    int vocab = 64;
    AttentionOptions attn;  // mask is set per context, not here
    bool use_abs_pe = false;
    // Cross-attention carries no positional coefficient unless this is set,
    // in which case a plain field coefficient over signed offsets is used.
    bool cross_positional = false;
    uint64_t seed = 1;

    int d_k() const { return d_model / heads; }
    void validate() const;
};

// One trainable tensor. Gradients live outside the parameter (keyed by id) so
// that forward/backward never mutate the model.
struct Param {
    std::vector<double> v;
    int id = -1;
};

struct Grads {
    std::vector<std::vector<double>> g;

    void init_like(const std::vector<Param*>& params);
    void zero();
    void add(const Grads& other);  // fixed-order reduction
    std::vector<double>& of(const Param& p) { return g[p.id]; }
};

std::vector<double> sinusoidal_pe(int position, int d_model);

struct ShiftCheckReport {
    bool applicable = false;
    std::string reason;  // when not applicable
    double max_deviation = 0.0;
};

class Model {
public:
    explicit Model(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    std::vector<Param*>& params() { return params_; }

    // Mean cross-entropy per target token over the batch; accumulates into
    // grads when given. Examples must not exceed the sequence cap.
    double batch_loss(const std::vector<const Example*>& batch, Grads* grads) const;

    // Teacher-forced logits for one example (rows = target positions).
    Dense2 logits(const Example& ex) const;

    // Token-level teacher-forced accuracy, in percent.
    double accuracy(const Dataset& ds) const;

    // Per-head pre-softmax scores of the first encoder layer; the probe used
    // by the shift-equivariance check.
    std::vector<Dense2> first_layer_scores(const std::vector<int>& tokens) const;

    ShiftCheckReport shift_equivariance_check(const std::vector<int>& tokens, int shift) const;

    size_t positional_params_per_attention_layer() const;
    size_t total_positional_params() const;
    size_t total_params() const;

    void save_checkpoint(const std::string& path, uint64_t rng_state) const;
    static Model load_checkpoint(const std::string& path, uint64_t* rng_state);

    struct Impl;
    Impl& impl() { return *impl_; }
    const Impl& impl() const { return *impl_; }

private:
    ModelConfig cfg_;
    std::shared_ptr<Impl> impl_;
    std::vector<Param*> params_;
};

}  // namespace agf

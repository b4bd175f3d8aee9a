#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "agf/error.hpp"
#include "agf/model.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace agf;

namespace {

ModelConfig tiny_config(PositionalMode mode) {
    ModelConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 8;
    c.d_ff = 16;
    c.seq_len = 8;
    c.vocab = 8;
    c.attn.positional_mode = mode;
    c.seed = 7;
    return c;
}

std::vector<Example> tiny_examples() {
    return {{{2, 3, 4, 5}, {5, 4, 3, 2}}, {{6, 7, 2}, {6, 7, 2}}};
}

std::vector<const Example*> as_batch(const std::vector<Example>& ex) {
    std::vector<const Example*> b;
    for (const Example& e : ex) b.push_back(&e);
    return b;
}

struct FdResult {
    int failures = 0;
    size_t worst_param = 0, worst_coord = 0;
    double worst_analytic = 0.0, worst_numeric = 0.0;
};

// Central-difference check of every trainable scalar against the analytic
// batch gradient. Near-zero gradients are held to an absolute band because
// the relative quotient is meaningless under float noise there. A coordinate
// that misses the band is re-probed with a smaller step: activation kinks
// inside the probe interval bias the estimate, and that bias vanishes once
// the step no longer straddles the kink, while a wrong analytic gradient
// stays wrong at every step size.
FdResult fd_check_params(Model& model, const std::vector<const Example*>& batch) {
    std::vector<Param*>& ps = model.params();
    Grads g;
    g.init_like(ps);
    model.batch_loss(batch, &g);

    auto probe = [&](size_t pi, size_t j, double h) {
        const double save = ps[pi]->v[j];
        ps[pi]->v[j] = save + h;
        const double fp = model.batch_loss(batch, nullptr);
        ps[pi]->v[j] = save - h;
        const double fm = model.batch_loss(batch, nullptr);
        ps[pi]->v[j] = save;
        return (fp - fm) / (2.0 * h);
    };

    FdResult r;
    for (size_t pi = 0; pi < ps.size(); ++pi) {
        for (size_t j = 0; j < ps[pi]->v.size(); ++j) {
            const double a = g.g[pi][j];
            double num = probe(pi, j, 1e-5);
            double mag = std::max(std::abs(a), std::abs(num));
            bool ok = mag >= 1e-6 ? std::abs(a - num) / mag < 1e-4
                                  : std::abs(a - num) < 1e-8;
            if (!ok) {
                num = probe(pi, j, 1e-6);
                mag = std::max(std::abs(a), std::abs(num));
                ok = std::abs(a - num) < std::max(1e-4 * mag, 1e-9);
            }
            if (!ok) {
                ++r.failures;
                r.worst_param = pi;
                r.worst_coord = j;
                r.worst_analytic = a;
                r.worst_numeric = num;
            }
        }
    }
    return r;
}

struct TempPath {
    std::string path;
    explicit TempPath(const std::string& name) : path("/tmp/agf_test_" + name) {}
    ~TempPath() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("sinusoidal encoding basics") {
    std::vector<double> p0 = sinusoidal_pe(0, 16);
    for (int i = 0; i < 16; i += 2) {
        CHECK(p0[i] == doctest::Approx(0.0));
        CHECK(p0[i + 1] == doctest::Approx(1.0));
    }
    // every (sin, cos) pair has unit norm, so |pe|^2 = d_model / 2
    std::vector<double> p9 = sinusoidal_pe(9, 16);
    double n2 = 0.0;
    for (double v : p9) n2 += v * v;
    CHECK(n2 == doctest::Approx(8.0));

    // pair dot products depend only on the position difference
    std::vector<double> p4 = sinusoidal_pe(4, 16);
    std::vector<double> p7 = sinusoidal_pe(7, 16);
    std::vector<double> p2 = sinusoidal_pe(2, 16);
    std::vector<double> p5 = sinusoidal_pe(5, 16);
    for (int i = 0; i < 16; i += 2) {
        double d47 = p4[i] * p7[i] + p4[i + 1] * p7[i + 1];
        double d25 = p2[i] * p5[i] + p2[i + 1] * p5[i + 1];
        CHECK(d47 == doctest::Approx(d25).epsilon(1e-12));
    }
    CHECK_THROWS_AS(sinusoidal_pe(-1, 8), DomainError);
}

TEST_CASE("config validation") {
    ModelConfig c = tiny_config(PositionalMode::agf);
    c.d_model = 10;  // not divisible by heads=2? it is; make it odd against 2 heads
    c.heads = 4;
    CHECK_THROWS_AS(Model{c}, ConfigError);

    c = tiny_config(PositionalMode::none);
    c.attn.pcm_v = true;  // multiplicative coefficient required
    CHECK_THROWS_AS(Model{c}, ConfigError);

    c = tiny_config(PositionalMode::agf);
    c.attn.mask = MaskKind::causal;  // per-context, not configurable
    CHECK_THROWS_AS(Model{c}, ConfigError);

    c = tiny_config(PositionalMode::agf);
    c.vocab = 2;
    CHECK_THROWS_AS(Model{c}, ConfigError);
}

TEST_CASE("positional parameter counts") {
    ModelConfig c;
    c.layers = 2;
    c.heads = 4;
    c.d_model = 64;
    c.d_ff = 128;
    c.seq_len = 32;
    c.vocab = 32;

    auto per_layer = [&](PositionalMode m) {
        c.attn.positional_mode = m;
        Model model(c);
        return model.positional_params_per_attention_layer();
    };
    CHECK(per_layer(PositionalMode::none) == 0);
    CHECK(per_layer(PositionalMode::agf) == 16);                     // 4 per head
    CHECK(per_layer(PositionalMode::agf_m) == 4 * (4 + 2 * 32));     // + per-distance amps
    CHECK(per_layer(PositionalMode::agf_full) ==
          4 * (4 + 2 * 32 + 2 * 32 * 16));                           // + per-dim tables
    CHECK(per_layer(PositionalMode::alibi_add) == 8);                // slope pair per head

    c.attn.positional_mode = PositionalMode::agf;
    Model m(c);
    // encoder self + decoder self carry the mode; cross carries none
    CHECK(m.total_positional_params() == 2 * 2 * 16);

    c.cross_positional = true;
    Model mc(c);
    CHECK(mc.total_positional_params() == 2 * 2 * 16 + 2 * 16);
}

TEST_CASE("total parameter count matches the layer arithmetic") {
    ModelConfig c = tiny_config(PositionalMode::agf);
    Model m(c);
    const size_t d = 8, ff = 16, v = 8;
    const size_t attn_core = 2 * d + 4 * d * d;  // ln + q,k,v,o
    const size_t pos = 2 * 4;                    // 2 heads, 4 scalars
    const size_t ffb = 2 * d + d * ff + ff + ff * d + d;
    const size_t enc = (attn_core + pos) + ffb;
    const size_t dec = (attn_core + pos) + attn_core + ffb;  // cross carries no positional
    const size_t expected = v * d + enc + dec + 2 * d + 2 * d + d * v + v;
    CHECK(m.total_params() == expected);
}

TEST_CASE("construction is deterministic in the seed") {
    ModelConfig c = tiny_config(PositionalMode::agf_m);
    Model a(c), b(c);
    auto& pa = a.params();
    auto& pb = b.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->v == pb[i]->v);

    Example ex{{2, 3, 4}, {4, 3, 2}};
    Dense2 la = a.logits(ex), lb = b.logits(ex);
    CHECK(la.data == lb.data);
}

TEST_CASE("field parameters start at the documented defaults") {
    ModelConfig c = tiny_config(PositionalMode::agf);
    Model m(c);
    int agf_params = 0;
    for (const Param* p : m.params()) {
        if (p->v.size() == 4 && p->v[2] == AgfHeadParams::kDefaultRho) {
            ++agf_params;
            CHECK(p->v[0] == 0.0);
            CHECK(p->v[1] == 0.0);
            CHECK(p->v[3] == AgfHeadParams::kDefaultRho);
        }
    }
    CHECK(agf_params == 2 * 2);  // two heads in each of encoder and decoder self-attention
}

TEST_CASE("batch gradients match finite differences across positional modes") {
    const std::vector<Example> ex = tiny_examples();
    const std::vector<const Example*> batch = as_batch(ex);

    auto run = [&](ModelConfig cfg) {
        Model model(cfg);
        FdResult r = fd_check_params(model, batch);
        INFO("worst param ", r.worst_param, " coord ", r.worst_coord, " analytic ",
             r.worst_analytic, " numeric ", r.worst_numeric);
        CHECK(r.failures == 0);
    };

    SUBCASE("vanilla with absolute encodings") {
        ModelConfig c = tiny_config(PositionalMode::none);
        c.use_abs_pe = true;
        run(c);
    }
    SUBCASE("field coefficient") { run(tiny_config(PositionalMode::agf)); }
    SUBCASE("field with amplitudes, value reweighting, key normalization") {
        ModelConfig c = tiny_config(PositionalMode::agf_m);
        c.attn.pcm_v = true;
        c.attn.sco = true;
        run(c);
    }
    SUBCASE("per-dimension tables") { run(tiny_config(PositionalMode::agf_full)); }
    SUBCASE("additive slopes with exponential value reweighting") {
        ModelConfig c = tiny_config(PositionalMode::alibi_add);
        c.attn.pcm_v_exp = true;
        run(c);
    }
    SUBCASE("multiplicative slope integration") {
        run(tiny_config(PositionalMode::alibi_mul));
    }
    SUBCASE("positional cross-attention") {
        ModelConfig c = tiny_config(PositionalMode::agf);
        c.cross_positional = true;
        run(c);
    }
}

TEST_CASE("aggregation stop-gradient only changes positional gradients") {
    const std::vector<Example> ex = tiny_examples();
    const std::vector<const Example*> batch = as_batch(ex);

    ModelConfig c = tiny_config(PositionalMode::agf);
    c.attn.pcm_v = true;
    Model full(c);
    c.attn.pcm_v_stop_grad = true;
    Model ablated(c);

    Grads gf, ga;
    gf.init_like(full.params());
    ga.init_like(ablated.params());
    full.batch_loss(batch, &gf);
    ablated.batch_loss(batch, &ga);

    bool pos_differs = false;
    REQUIRE(gf.g.size() == ga.g.size());
    for (size_t i = 0; i < gf.g.size(); ++i) {
        const bool is_pos = full.params()[i]->v.size() == 4 &&
                            full.params()[i]->v[2] == AgfHeadParams::kDefaultRho;
        if (is_pos) {
            if (gf.g[i] != ga.g[i]) pos_differs = true;
        } else {
            CHECK(gf.g[i] == ga.g[i]);
        }
    }
    CHECK(pos_differs);
}

TEST_CASE("decoder logits ignore future target tokens") {
    ModelConfig c = tiny_config(PositionalMode::agf);
    Model m(c);
    Example a{{2, 3, 4, 5}, {5, 4, 3, 2}};
    Example b = a;
    b.tgt[2] = 7;  // feeds decoder input at position 3 only

    Dense2 la = m.logits(a), lb = m.logits(b);
    for (int i = 0; i <= 2; ++i)
        for (int j = 0; j < c.vocab; ++j) CHECK(la.at(i, j) == lb.at(i, j));
    bool later_differs = false;
    for (int j = 0; j < c.vocab; ++j)
        if (la.at(3, j) != lb.at(3, j)) later_differs = true;
    CHECK(later_differs);
}

TEST_CASE("untrained accuracy sits near chance") {
    ModelConfig c;
    c.layers = 1;
    c.heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.seq_len = 16;
    c.vocab = 32;
    c.attn.positional_mode = PositionalMode::agf;
    c.seed = 3;
    Model m(c);

    TaskSpec spec;
    spec.kind = TaskKind::copy;
    spec.min_len = 4;
    spec.max_len = 16;
    spec.vocab = 32;
    spec.n_examples = 1100;
    spec.seed = 21;
    Dataset ds = generate_task(spec);
    size_t tokens = 0;
    for (const Example& e : ds) tokens += e.tgt.size();
    REQUIRE(tokens >= 10000);

    double acc = m.accuracy(ds);
    CHECK(acc > 100.0 / 32.0 - 1.0);
    CHECK(acc < 100.0 / 32.0 + 1.0);
}

TEST_CASE("first-layer scores shift with the sequence") {
    std::vector<int> tokens{2, 5, 3, 7, 4};

    SUBCASE("relative modes are shift-equivariant") {
        for (PositionalMode mode :
             {PositionalMode::agf, PositionalMode::agf_m, PositionalMode::alibi_add}) {
            ModelConfig c = tiny_config(mode);
            Model m(c);
            ShiftCheckReport r0 = m.shift_equivariance_check(tokens, 0);
            CHECK(r0.applicable);
            CHECK(r0.max_deviation == 0.0);
            ShiftCheckReport r3 = m.shift_equivariance_check(tokens, 3);
            CHECK(r3.applicable);
            CHECK(r3.max_deviation < 1e-10);
        }
    }
    SUBCASE("absolute encodings break the property") {
        ModelConfig c = tiny_config(PositionalMode::none);
        c.use_abs_pe = true;
        Model m(c);
        ShiftCheckReport r = m.shift_equivariance_check(tokens, 3);
        CHECK(!r.applicable);
        CHECK(!r.reason.empty());
    }
    SUBCASE("shift past the cap is rejected") {
        ModelConfig c = tiny_config(PositionalMode::agf);
        Model m(c);
        CHECK_THROWS_AS(m.shift_equivariance_check(tokens, 6), ShapeError);
    }
}

TEST_CASE("sequences beyond the cap are rejected") {
    ModelConfig c = tiny_config(PositionalMode::agf);
    Model m(c);
    Example too_long;
    for (int i = 0; i < 9; ++i) too_long.src.push_back(2);
    too_long.tgt = too_long.src;
    CHECK_THROWS_AS(m.logits(too_long), ShapeError);

    Example bad_token{{2, 3}, {2, 9}};
    CHECK_THROWS_AS(m.logits(bad_token), DomainError);
}

TEST_CASE("checkpoint round-trip preserves the model") {
    ModelConfig c = tiny_config(PositionalMode::agf_m);
    c.cross_positional = true;
    c.attn.pcm_v = true;
    c.attn.sco = true;
    Model m(c);
    Rng rng(99);
    for (Param* p : m.params())
        for (double& x : p->v) x += 0.01 * rng.normal();

    TempPath tmp("checkpoint.json");
    m.save_checkpoint(tmp.path, 0xDEADBEEFull);

    uint64_t state = 0;
    Model back = Model::load_checkpoint(tmp.path, &state);
    CHECK(state == 0xDEADBEEFull);
    CHECK(back.config().layers == c.layers);
    CHECK(back.config().attn.positional_mode == PositionalMode::agf_m);
    CHECK(back.config().attn.pcm_v);
    CHECK(back.config().cross_positional);

    auto& pa = m.params();
    auto& pb = back.params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->v == pb[i]->v);

    Example ex{{2, 3, 4}, {4, 3, 2}};
    CHECK(m.logits(ex).data == back.logits(ex).data);
}

TEST_CASE("checkpoint carries a readable positional section") {
    ModelConfig c = tiny_config(PositionalMode::alibi_add);
    Model m(c);
    TempPath tmp("checkpoint_pos.json");
    m.save_checkpoint(tmp.path, 1);

    std::ifstream in(tmp.path);
    nlohmann::json j;
    in >> j;
    REQUIRE(j.contains("positional"));
    // one entry per attention block: enc self, dec self, dec cross
    REQUIRE(j["positional"].size() == 3);
    const auto& enc0 = j["positional"][0];
    CHECK(enc0["context"] == "encoder_self");
    REQUIRE(enc0["heads"].size() == 2);
    CHECK(enc0["heads"][0]["mode"] == "alibi_add");
    CHECK(enc0["heads"][0]["slopes"].size() == 2);
    CHECK(enc0["heads"][0]["slopes"][0] == doctest::Approx(std::pow(2.0, -4.0)));
}

TEST_CASE("checkpoint loading errors") {
    CHECK_THROWS_AS(Model::load_checkpoint("/tmp/agf_test_missing_ckpt", nullptr), IoError);

    TempPath tmp("ckpt_garbage.json");
    {
        std::ofstream out(tmp.path);
        out << "{\"format\": \"something-else\"}";
    }
    CHECK_THROWS(Model::load_checkpoint(tmp.path, nullptr));
}

TEST_CASE("value reweighting is inert when the field is flat") {
    // With rho pushed to +30 the coefficient is 1 up to ~1e-11 at any
    // in-range distance, so reweighting the value path must not move logits.
    ModelConfig c = tiny_config(PositionalMode::agf);
    c.attn.pcm_v = true;
    Model m(c);
    for (Param* p : m.params())
        if (p->v.size() == 4 && p->v[2] == AgfHeadParams::kDefaultRho)
            p->v[2] = p->v[3] = 30.0;

    TempPath tmp("ckpt_flat.json");
    m.save_checkpoint(tmp.path, 0);

    nlohmann::json j;
    {
        std::ifstream in(tmp.path);
        in >> j;
    }
    j["config"]["attention"]["pcm_v"] = false;
    {
        std::ofstream out(tmp.path);
        out << j.dump();
    }
    Model plain = Model::load_checkpoint(tmp.path, nullptr);
    REQUIRE(!plain.config().attn.pcm_v);

    Example ex{{2, 3, 4, 5, 6}, {6, 5, 4, 3, 2}};
    Dense2 a = m.logits(ex), b = plain.logits(ex);
    double dmax = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        dmax = std::max(dmax, std::abs(a.data[i] - b.data[i]));
    CHECK(dmax < 1e-6);
}

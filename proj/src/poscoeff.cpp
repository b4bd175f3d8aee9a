#include "agf/poscoeff.hpp"

#include <cmath>
#include <cstdlib>

#include "agf/error.hpp"

namespace agf {

const char* to_string(PositionalMode mode) {
    switch (mode) {
        case PositionalMode::none: return "none";
        case PositionalMode::agf: return "agf";
        case PositionalMode::agf_m: return "agf_m";
        case PositionalMode::agf_full: return "agf_full";
        case PositionalMode::alibi_add: return "alibi_add";
        case PositionalMode::alibi_mul: return "alibi_mul";
    }
    return "?";
}

PositionalMode parse_positional_mode(const std::string& name) {
    if (name == "none") return PositionalMode::none;
    if (name == "agf") return PositionalMode::agf;
    if (name == "agf_m") return PositionalMode::agf_m;
    if (name == "agf_full") return PositionalMode::agf_full;
    if (name == "alibi_add") return PositionalMode::alibi_add;
    if (name == "alibi_mul") return PositionalMode::alibi_mul;
    throw ConfigError("unknown positional mode: '" + name + "'");
}

bool mode_is_multiplicative(PositionalMode mode) {
    switch (mode) {
        case PositionalMode::none:
        case PositionalMode::alibi_add:
            return false;
        default:
            return true;
    }
}

bool mode_uses_lc2(PositionalMode mode) {
    return mode == PositionalMode::agf_m || mode == PositionalMode::agf_full;
}

bool mode_uses_lc3(PositionalMode mode) { return mode == PositionalMode::agf_full; }

size_t positional_param_count(PositionalMode mode, int seq_len, int d_k) {
    size_t n = 0;
    switch (mode) {
        case PositionalMode::none:
            return 0;
        case PositionalMode::alibi_add:
        case PositionalMode::alibi_mul:
            return 2;
        case PositionalMode::agf_full:
            n += 2 * static_cast<size_t>(seq_len) * d_k;
            [[fallthrough]];
        case PositionalMode::agf_m:
            n += 2 * static_cast<size_t>(seq_len);
            [[fallthrough]];
        case PositionalMode::agf:
            n += 4;
    }
    return n;
}

double AgfHeadParams::g(Direction d) const { return std::exp(gamma[static_cast<int>(d)]); }
double AgfHeadParams::r(Direction d) const { return std::exp(rho[static_cast<int>(d)]); }

double agf_coeff(const AgfHeadParams& p, long long offset) {
    Direction dir = offset_direction(offset);
    double d = std::abs(static_cast<double>(offset));
    double u = 1.0 + d / p.r(dir);
    return p.g(dir) * std::pow(u, -p.k_exp);
}

void agf_coeff_grads(const AgfHeadParams& p, long long offset, double upstream, double grad4[4]) {
    Direction dir = offset_direction(offset);
    int di = static_cast<int>(dir);
    double d = std::abs(static_cast<double>(offset));
    double g = p.g(dir);
    double r = p.r(dir);
    double u = 1.0 + d / r;
    double coeff = g * std::pow(u, -p.k_exp);
    grad4[di] += upstream * coeff;
    // d(coeff)/d(rho) = G * k * u^(-k-1) * d/r; vanishes at d = 0.
    grad4[2 + di] += upstream * g * p.k_exp * std::pow(u, -p.k_exp - 1.0) * (d / r);
}

static int clamped_distance(int seq_len, long long offset) {
    long long d = offset >= 0 ? offset : -offset;
    long long cap = seq_len - 1;
    return static_cast<int>(d > cap ? cap : d);
}

double lc2_lookup(int seq_len, const double* amp, long long offset) {
    int dir = offset >= 0 ? 0 : 1;
    return amp[dir * seq_len + clamped_distance(seq_len, offset)];
}

void lc2_grad(int seq_len, double* amp_grad, long long offset, double upstream) {
    int dir = offset >= 0 ? 0 : 1;
    amp_grad[dir * seq_len + clamped_distance(seq_len, offset)] += upstream;
}

size_t lc3_index(int seq_len, int d_k, long long offset) {
    size_t dir = offset >= 0 ? 0 : 1;
    return (dir * seq_len + clamped_distance(seq_len, offset)) * static_cast<size_t>(d_k);
}

std::span<const double> lc3_weights(const Lc3Weights& t, long long offset) {
    return {t.w.data() + lc3_index(t.seq_len, t.d_k, offset), static_cast<size_t>(t.d_k)};
}

double alibi_bias(const AlibiHeadParams& p, long long offset) {
    Direction dir = offset_direction(offset);
    double d = std::abs(static_cast<double>(offset));
    return -p.slope[static_cast<int>(dir)] * d;
}

void alibi_bias_grads(long long offset, double upstream, double gslope[2]) {
    Direction dir = offset_direction(offset);
    double d = std::abs(static_cast<double>(offset));
    gslope[static_cast<int>(dir)] += -d * upstream;
}

double alibi_default_slope(int head, int n_heads) {
    if (n_heads <= 0 || head < 0 || head >= n_heads)
        throw ConfigError("alibi slope: head index out of range");
    return std::pow(2.0, -8.0 * (head + 1) / n_heads);
}

double kerple_log_bias(const KerpleLogParams& p, long long offset) {
    if (p.r1 <= 0.0 || p.r2 <= 0.0) throw DomainError("kerple kernel requires r1 > 0 and r2 > 0");
    double d = std::abs(static_cast<double>(offset));
    return p.c - p.r1 * std::log1p(p.r2 * d);
}

double kerple_coeff_exp_form(const KerpleLogParams& p, long long offset) {
    return std::exp(kerple_log_bias(p, offset));
}

AgfHeadParams kerple_to_agf(const KerpleLogParams& p) {
    if (p.r1 <= 0.0 || p.r2 <= 0.0) throw DomainError("kerple kernel requires r1 > 0 and r2 > 0");
    AgfHeadParams a;
    a.gamma[0] = a.gamma[1] = p.c;
    a.rho[0] = a.rho[1] = -std::log(p.r2);
    a.k_exp = p.r1;
    return a;
}

HeadPosParams::HeadPosParams(PositionalMode m, int seq_len, int d_k)
    : mode(m), lc2(mode_uses_lc2(m) ? seq_len : 1), lc3(mode_uses_lc3(m) ? seq_len : 1, d_k) {}

HeadPosRef HeadPosParams::ref() const {
    HeadPosRef r;
    r.mode = mode;
    r.agf = agf;
    r.alibi = alibi;
    if (mode_uses_lc2(mode)) {
        r.seq_len = lc2.seq_len;
        r.lc2 = lc2.amp.data();
    }
    if (mode_uses_lc3(mode)) r.lc3 = {lc3.seq_len, lc3.d_k, lc3.w.data()};
    return r;
}

double coeff_entry(const HeadPosRef& p, long long offset) {
    switch (p.mode) {
        case PositionalMode::none:
            return 1.0;
        case PositionalMode::agf:
            return agf_coeff(p.agf, offset);
        case PositionalMode::agf_m:
        case PositionalMode::agf_full:
            if (!p.lc2) throw ConfigError("mode needs an amplitude table");
            return agf_coeff(p.agf, offset) * lc2_lookup(p.seq_len, p.lc2, offset);
        case PositionalMode::alibi_add:
            return alibi_bias(p.alibi, offset);
        case PositionalMode::alibi_mul:
            return std::exp(alibi_bias(p.alibi, offset));
    }
    throw ConfigError("bad positional mode");
}

CoeffMatrix build_coeff_matrix(const HeadPosRef& p, int lq, int lk) {
    if (lq <= 0 || lk <= 0) throw ShapeError("coefficient matrix needs positive dims");
    CoeffMatrix m(lq, lk, p.mode == PositionalMode::alibi_add);
    for (int q = 0; q < lq; ++q)
        for (int k = 0; k < lk; ++k) m.at(q, k) = coeff_entry(p, static_cast<long long>(k) - q);
    return m;
}

void accumulate_entry_grads(const HeadPosRef& p, long long offset, double upstream,
                            const PosGradSink& sink) {
    switch (p.mode) {
        case PositionalMode::none:
            return;
        case PositionalMode::agf:
            if (sink.agf4) agf_coeff_grads(p.agf, offset, upstream, sink.agf4);
            return;
        case PositionalMode::agf_m:
        case PositionalMode::agf_full: {
            double base = agf_coeff(p.agf, offset);
            double amp = lc2_lookup(p.seq_len, p.lc2, offset);
            if (sink.agf4) agf_coeff_grads(p.agf, offset, upstream * amp, sink.agf4);
            if (sink.lc2) lc2_grad(p.seq_len, sink.lc2, offset, upstream * base);
            return;
        }
        case PositionalMode::alibi_add:
            if (sink.slopes) alibi_bias_grads(offset, upstream, sink.slopes);
            return;
        case PositionalMode::alibi_mul:
            // entry = exp(bias): d(entry)/d(bias) = entry.
            if (sink.slopes)
                alibi_bias_grads(offset, upstream * std::exp(alibi_bias(p.alibi, offset)),
                                 sink.slopes);
            return;
    }
}

}  // namespace agf

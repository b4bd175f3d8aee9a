#include "agf/pasl.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "agf/error.hpp"

namespace agf {

std::string normalize_token(const std::string& raw) {
    size_t b = 0, e = raw.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(raw[e - 1]))) --e;
    std::string out;
    out.reserve(e - b);
    for (size_t i = b; i < e; ++i)
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(raw[i]))));
    return out;
}

TokenStream ingest_text(const std::string& text) {
    TokenStream ts;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        size_t start = ts.tokens.size();
        std::istringstream words(line);
        std::string w;
        while (words >> w) {
            std::string tok = normalize_token(w);
            if (!tok.empty()) ts.tokens.push_back(std::move(tok));
        }
        if (ts.tokens.size() > start) ts.doc_starts.push_back(start);
    }
    if (ts.tokens.empty()) throw IoError("corpus contains no tokens");
    ts.doc_starts.push_back(ts.tokens.size());
    return ts;
}

TokenStream ingest_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return ingest_text(buf.str());
}

PaslDistribution follower_distribution(const TokenStream& ts, const std::string& anchor,
                                       const std::string& target, int max_d) {
    if (max_d < 1) throw DomainError("max_d must be at least 1");
    if (ts.tokens.empty() || ts.doc_starts.size() < 2) throw DomainError("empty token stream");

    const bool any = target == kAnyToken;
    std::vector<long long> counts(max_d, 0);
    long long total = 0;
    for (size_t d = 0; d + 1 < ts.doc_starts.size(); ++d) {
        const size_t lo = ts.doc_starts[d], hi = ts.doc_starts[d + 1];
        for (size_t p = lo; p < hi; ++p) {
            if (ts.tokens[p] != anchor) continue;
            const size_t reach = std::min(hi, p + 1 + static_cast<size_t>(max_d));
            for (size_t q = p + 1; q < reach; ++q) {
                if (!any && ts.tokens[q] != target) continue;
                ++counts[q - p - 1];
                ++total;
            }
        }
    }
    if (total == 0)
        throw DomainError("no occurrences of '" + target + "' within " + std::to_string(max_d) +
                          " tokens after '" + anchor + "'");

    PaslDistribution dist;
    dist.anchor = anchor;
    dist.target = target;
    dist.total_count = total;
    dist.density.resize(max_d);
    for (int i = 0; i < max_d; ++i)
        dist.density[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
    return dist;
}

DecaySamples distance_decay_samples(const TokenStream& ts, std::span<const std::string> anchors,
                                    int max_d) {
    if (anchors.empty()) throw DomainError("anchor set is empty");
    DecaySamples out;
    out.x.resize(max_d);
    out.y.assign(max_d, 0.0);
    for (int i = 0; i < max_d; ++i) out.x[i] = i + 1;
    for (const std::string& anchor : anchors) {
        PaslDistribution d = follower_distribution(ts, anchor, kAnyToken, max_d);
        for (int i = 0; i < max_d; ++i) out.y[i] += d.density[i];
    }
    for (double& v : out.y) v /= static_cast<double>(anchors.size());
    return out;
}

void write_synthetic_power_corpus(const std::string& path, const std::string& anchor,
                                  const std::string& filler, double r, double k, int max_d,
                                  double scale) {
    if (r <= 0.0 || k <= 0.0 || max_d < 2 || scale <= 0.0)
        throw DomainError("synthetic corpus needs r>0, k>0, max_d>=2, scale>0");
    // Target cumulative window counts; count(i) non-increasing in i.
    std::vector<long long> count(max_d + 1);
    for (int i = 1; i <= max_d; ++i)
        count[i] = std::llround(scale * std::pow(1.0 + i / r, -k));
    if (count[max_d] < 1) throw DomainError("scale too small: tail count rounds to zero");

    std::ofstream out(path);
    if (!out) throw IoError("cannot write corpus file: " + path);
    // A document with f fillers contributes one window at each offset 1..f,
    // so emitting count(f) - count(f+1) documents per length f (and count(max_d)
    // at the cap) realizes the target counts exactly.
    for (int f = 1; f <= max_d; ++f) {
        long long copies = f == max_d ? count[f] : count[f] - count[f + 1];
        for (long long c = 0; c < copies; ++c) {
            out << anchor;
            for (int j = 0; j < f; ++j) out << ' ' << filler;
            out << '\n';
        }
    }
    if (!out) throw IoError("failed writing corpus file: " + path);
}

}  // namespace agf

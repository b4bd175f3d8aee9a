#pragma once

#include <span>
#include <string>
#include <vector>

namespace agf {

// Wildcard target: any token counts.
inline constexpr const char* kAnyToken = "*";

struct TokenStream {
    std::vector<std::string> tokens;
    // Start index of each document, with tokens.size() appended as sentinel.
    std::vector<size_t> doc_starts;

    size_t doc_count() const { return doc_starts.empty() ? 0 : doc_starts.size() - 1; }
};

struct PaslDistribution {
    std::string anchor;
    std::string target;
    std::vector<double> density;  // density[i] = P(offset = i+1), size max_d
    long long total_count = 0;
};

// Lowercases and strips surrounding punctuation; applied per whitespace token.
std::string normalize_token(const std::string& raw);

// One document per line. Throws IoError on unreadable or token-free input.
TokenStream ingest_corpus(const std::string& path);
TokenStream ingest_text(const std::string& text);

// Counts target occurrences at offsets 1..max_d after each anchor, never
// crossing document boundaries; normalizes to sum 1. Target kAnyToken counts
// every in-document window.
PaslDistribution follower_distribution(const TokenStream& ts, const std::string& anchor,
                                       const std::string& target, int max_d);

struct DecaySamples {
    std::vector<double> x;  // offsets 1..max_d
    std::vector<double> y;  // mean wildcard density per offset
};

DecaySamples distance_decay_samples(const TokenStream& ts,
                                    std::span<const std::string> anchors, int max_d);

// Writes a corpus whose wildcard follower counts follow
// count(i) = round(scale * (1 + i/r)^(-k)) exactly, by emitting documents of
// the form "<anchor> <filler>*f" with the matching length multiplicities.
void write_synthetic_power_corpus(const std::string& path, const std::string& anchor,
                                  const std::string& filler, double r, double k, int max_d,
                                  double scale);

}  // namespace agf

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "semformer/config.hpp"
#include "semformer/tensor.hpp"

namespace semformer {

struct MetricEntry {
    std::int64_t epoch;
    std::string term;
    double value;
};

// Single-archive checkpoint: version header, JSON metadata (stage tag,
// config snapshot, iteration count, metric log, rng state), then named
// weight arrays. Writes go to a temp file renamed into place.
struct Checkpoint {
    std::string stage;
    std::int64_t iteration = 0;
    TrainConfig config;
    std::vector<MetricEntry> metric_log;
    std::string rng_state;
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Metric log as CSV with header `epoch,term,value`.
void write_metric_csv(const std::vector<MetricEntry>& log, const std::string& path);
std::vector<MetricEntry> read_metric_csv(const std::string& path);

// FNV-1a 64 over names and raw tensor bytes, order-sensitive.
std::uint64_t hash_tensors(const std::vector<std::pair<std::string, Tensor*>>& named);

}  // namespace semformer

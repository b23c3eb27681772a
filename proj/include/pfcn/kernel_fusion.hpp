#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pfcn/kernel_generator.hpp"

namespace pfcn {

/// One fused kernel: a single object (thing) or a whole category (stuff).
struct InstanceKernel {
    std::vector<float> vec;
    float score = 0;
    int category = 0;
    Kind kind = Kind::Thing;
    int member_count = 1;
    int stage = 0;  // stage of the founding candidate
};

/// Inner product over norms. A zero vector yields 0 and bumps the counter
/// returned by zero_vector_similarity_count().
double cosine_similarity(std::span<const float> a, std::span<const float> b);
uint64_t zero_vector_similarity_count();

struct FusionOptions {
    double thres = 0.90;
    bool class_aware = true;
    /// Compare against the founding vector instead of the running mean.
    bool founder_mode = false;
};

/// What happened to each candidate during greedy fusion, in processing order.
struct JoinEvent {
    int candidate = 0;  // index into the input list
    int cluster = 0;
    bool founded = false;
    double similarity = 0;  // against the reference vector at join time
    std::vector<float> reference;  // cluster mean (or founder) the candidate was compared with
};

/// Greedy, score-descending clustering. A candidate joins the first cluster
/// (in creation order) whose reference vector is at least `thres` similar and,
/// when class-aware, shares its category; otherwise it founds a new cluster.
std::vector<InstanceKernel> fuse_thing_kernels(const std::vector<KernelCandidate>& candidates,
                                               const FusionOptions& opts, std::vector<JoinEvent>* log = nullptr);

/// One kernel per distinct category: the mean of all its candidates.
std::vector<InstanceKernel> fuse_stuff_kernels(const std::vector<KernelCandidate>& candidates);

}  // namespace pfcn

#include "pfcn/kernel_fusion.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <numeric>

namespace pfcn {

namespace {

std::atomic<uint64_t> g_zero_vectors{0};

struct Cluster {
    std::vector<double> sum;
    std::vector<float> founder;
    int count = 0;
    float score = 0;
    int category = 0;
    int stage = 0;

    std::vector<float> mean() const {
        std::vector<float> m(sum.size());
        for (size_t i = 0; i < sum.size(); ++i) m[i] = static_cast<float>(sum[i] / count);
        return m;
    }
};

}  // namespace

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    double dot = 0, na = 0, nb = 0;
    const size_t n = std::min(a.size(), b.size());
    for (size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0 || nb == 0) {
        ++g_zero_vectors;
        return 0;
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

uint64_t zero_vector_similarity_count() { return g_zero_vectors.load(); }

std::vector<InstanceKernel> fuse_thing_kernels(const std::vector<KernelCandidate>& candidates,
                                               const FusionOptions& opts, std::vector<JoinEvent>* log) {
    std::vector<int> order(candidates.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return candidates[a].score > candidates[b].score; });

    std::vector<Cluster> clusters;
    for (int idx : order) {
        const auto& cand = candidates[idx];
        int joined = -1;
        double sim = 0;
        std::vector<float> ref;
        for (size_t c = 0; c < clusters.size(); ++c) {
            if (opts.class_aware && clusters[c].category != cand.category) continue;
            std::vector<float> r = opts.founder_mode ? clusters[c].founder : clusters[c].mean();
            const double s = cosine_similarity(cand.vec, r);
            if (s >= opts.thres) {
                joined = static_cast<int>(c);
                sim = s;
                ref = std::move(r);
                break;
            }
        }
        if (joined < 0) {
            Cluster cl;
            cl.sum.assign(cand.vec.begin(), cand.vec.end());
            cl.founder = cand.vec;
            cl.count = 1;
            cl.score = cand.score;
            cl.category = cand.category;
            cl.stage = cand.stage;
            clusters.push_back(std::move(cl));
            if (log) log->push_back({idx, static_cast<int>(clusters.size()) - 1, true, 1.0, cand.vec});
        } else {
            auto& cl = clusters[joined];
            for (size_t i = 0; i < cl.sum.size(); ++i) cl.sum[i] += cand.vec[i];
            ++cl.count;
            cl.score = std::max(cl.score, cand.score);
            if (log) log->push_back({idx, joined, false, sim, std::move(ref)});
        }
    }

    std::vector<InstanceKernel> out;
    out.reserve(clusters.size());
    for (const auto& cl : clusters) out.push_back({cl.mean(), cl.score, cl.category, Kind::Thing, cl.count, cl.stage});
    return out;
}

std::vector<InstanceKernel> fuse_stuff_kernels(const std::vector<KernelCandidate>& candidates) {
    struct Acc {
        std::vector<double> sum;
        double score = 0;
        int count = 0;
        int stage = 0;
    };
    std::map<int, Acc> by_category;
    for (const auto& c : candidates) {
        auto& a = by_category[c.category];
        if (a.count == 0) {
            a.sum.assign(c.vec.size(), 0.0);
            a.stage = c.stage;
        }
        for (size_t i = 0; i < c.vec.size(); ++i) a.sum[i] += c.vec[i];
        a.score += c.score;
        ++a.count;
    }
    std::vector<InstanceKernel> out;
    for (const auto& [cat, a] : by_category) {
        InstanceKernel k;
        k.vec.resize(a.sum.size());
        for (size_t i = 0; i < a.sum.size(); ++i) k.vec[i] = static_cast<float>(a.sum[i] / a.count);
        k.score = static_cast<float>(a.score / a.count);
        k.category = cat;
        k.kind = Kind::Stuff;
        k.member_count = a.count;
        k.stage = a.stage;
        out.push_back(std::move(k));
    }
    return out;
}

}  // namespace pfcn

#include "pfcn/losses.hpp"

#include <numeric>

namespace pfcn {

template <typename T>
DiceResult dice_loss(std::span<const T> p, std::span<const uint8_t> labels, std::span<T> dp, double scale) {
    if (p.size() != labels.size()) throw InputError("dice_loss: prediction and target sizes differ");
    double inter = 0, pp = 0, yy = 0;
    size_t counted = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (labels[i] == kSegIgnore) continue;
        const double pi = p[i];
        const double yi = labels[i] == kSegPositive ? 1.0 : 0.0;
        inter += pi * yi;
        pp += pi * pi;
        yy += yi;
        ++counted;
    }
    if (counted == 0) return {0.0, true};
    const double num = 2.0 * inter + kDiceEps;
    const double den = pp + yy + kDiceEps;
    if (!dp.empty()) {
        for (size_t i = 0; i < p.size(); ++i) {
            if (labels[i] == kSegIgnore) continue;
            const double yi = labels[i] == kSegPositive ? 1.0 : 0.0;
            // d/dp of -(num/den)
            const double g = -(2.0 * yi * den - num * 2.0 * p[i]) / (den * den);
            dp[i] += T(g * scale);
        }
    }
    return {1.0 - num / den, false};
}

DiceResult dice_loss(std::span<const float> p, const Mask& target, const Mask& ignore) {
    if (target.size() != p.size() || ignore.size() != p.size()) throw InputError("dice_loss: size mismatch");
    std::vector<uint8_t> labels(p.size());
    for (size_t i = 0; i < p.size(); ++i)
        labels[i] = ignore.data[i] ? kSegIgnore : (target.data[i] ? kSegPositive : kSegNegative);
    return dice_loss<float>(p, labels);
}

std::vector<double> score_weights(std::span<const double> scores) {
    std::vector<double> w(scores.size(), 0.0);
    if (scores.empty()) return w;
    const double total = std::accumulate(scores.begin(), scores.end(), 0.0);
    for (size_t i = 0; i < scores.size(); ++i)
        w[i] = total > 0 ? scores[i] / total : 1.0 / static_cast<double>(scores.size());
    return w;
}

double weighted_dice(std::span<const double> scores, std::span<const double> dice_values) {
    if (scores.size() != dice_values.size()) throw InputError("weighted_dice: size mismatch");
    const auto w = score_weights(scores);
    double acc = 0;
    for (size_t k = 0; k < w.size(); ++k) acc += w[k] * dice_values[k];
    return acc;
}

double weighted_dice_loss(const std::vector<WeightedInstance>& instances) {
    if (instances.empty()) return 0.0;
    double total = 0;
    for (const auto& inst : instances) {
        std::vector<double> dice;
        for (const auto& m : inst.masks) dice.push_back(dice_loss<float>(m, inst.target.data).loss);
        total += weighted_dice(inst.scores, dice);
    }
    return total / static_cast<double>(instances.size());
}

double total_objective(double l_pos, double l_seg, double lambda_pos, double lambda_seg) {
    if (lambda_pos < 0 || lambda_seg < 0) throw ConfigError("loss weights must be non-negative");
    return lambda_pos * l_pos + lambda_seg * l_seg;
}

template DiceResult dice_loss(std::span<const float>, std::span<const uint8_t>, std::span<float>, double);
template DiceResult dice_loss(std::span<const double>, std::span<const uint8_t>, std::span<double>, double);

}  // namespace pfcn

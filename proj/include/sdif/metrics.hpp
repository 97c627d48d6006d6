#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdif::train {

enum class Averaging { Macro, Weighted };

struct ClassScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct Metrics {
    double accuracy = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::vector<ClassScores> per_class;
};

/// counts[gold][pred]
using ConfusionMatrix = std::vector<std::vector<std::size_t>>;

inline ConfusionMatrix confusion_matrix(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred,
                                        std::size_t n_classes) {
    if (gold.size() != pred.size()) throw std::invalid_argument("metrics: gold and prediction lengths differ");
    ConfusionMatrix cm(n_classes, std::vector<std::size_t>(n_classes, 0));
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (gold[i] >= n_classes || pred[i] >= n_classes) {
            throw std::out_of_range("metrics: class index outside [0, " + std::to_string(n_classes) + ")");
        }
        ++cm[gold[i]][pred[i]];
    }
    return cm;
}

/// Accuracy plus per-class precision/recall/F1 averaged over the classes that
/// occur in `gold`. Empty denominators score 0.
inline Metrics compute_metrics(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred,
                               std::size_t n_classes, Averaging avg = Averaging::Macro) {
    if (gold.empty()) throw std::invalid_argument("metrics: empty evaluation set");
    const ConfusionMatrix cm = confusion_matrix(gold, pred, n_classes);
    Metrics m;
    m.per_class.resize(n_classes);
    std::size_t correct = 0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        std::size_t tp = cm[c][c], predicted = 0, actual = 0;
        for (std::size_t o = 0; o < n_classes; ++o) {
            predicted += cm[o][c];
            actual += cm[c][o];
        }
        correct += tp;
        auto& s = m.per_class[c];
        s.support = actual;
        s.precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
        s.recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
        s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());

    double total_weight = 0.0;
    for (const auto& s : m.per_class) {
        if (s.support == 0) continue;
        const double w = avg == Averaging::Macro ? 1.0 : static_cast<double>(s.support);
        m.precision += w * s.precision;
        m.recall += w * s.recall;
        m.f1 += w * s.f1;
        total_weight += w;
    }
    m.precision /= total_weight;
    m.recall /= total_weight;
    m.f1 /= total_weight;
    return m;
}

}  // namespace sdif::train

#include "cer/metrics.hpp"

#include <stdexcept>
#include <string>

namespace cer {

ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> targets,
                                 int num_classes) {
    if (predictions.size() != targets.size())
        throw std::invalid_argument("prediction and target sequences differ in length");
    if (predictions.empty()) throw std::invalid_argument("cannot score empty sequences");
    ConfusionMatrix cm = ConfusionMatrix::Zero(num_classes, num_classes);
    for (size_t i = 0; i < targets.size(); ++i) {
        const int t = targets[i];
        const int p = predictions[i];
        if (t < 0 || t >= num_classes || p < 0 || p >= num_classes)
            throw std::out_of_range("class index out of range at position " + std::to_string(i));
        ++cm(t, p);
    }
    return cm;
}

F1Report f1_report(std::span<const int> predictions, std::span<const int> targets, int num_classes) {
    F1Report report;
    report.confusion = confusion_matrix(predictions, targets, num_classes);
    const auto& cm = report.confusion;
    double sum = 0;
    for (int c = 0; c < num_classes; ++c) {
        const long tp = cm(c, c);
        const long fn = cm.row(c).sum() - tp;
        const long fp = cm.col(c).sum() - tp;
        ClassScore s;
        s.support = tp + fn;
        s.precision = tp + fp > 0 ? double(tp) / double(tp + fp) : 0.0;
        s.recall = tp + fn > 0 ? double(tp) / double(tp + fn) : 0.0;
        s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
        sum += s.f1;
        report.per_class.push_back(s);
    }
    report.macro_f1 = sum / num_classes;
    return report;
}

}  // namespace cer

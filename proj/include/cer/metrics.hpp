#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace cer {

using ConfusionMatrix = Eigen::Matrix<long, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Rows are true classes, columns are predicted classes.
ConfusionMatrix confusion_matrix(std::span<const int> predictions, std::span<const int> targets,
                                 int num_classes);

struct ClassScore {
    long support = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct F1Report {
    ConfusionMatrix confusion;
    std::vector<ClassScore> per_class;
    double macro_f1 = 0;
};

/// Per-class precision/recall/F1 (0/0 counts as 0) and their unweighted mean over all classes.
F1Report f1_report(std::span<const int> predictions, std::span<const int> targets, int num_classes);

inline double macro_f1(std::span<const int> predictions, std::span<const int> targets, int num_classes) {
    return f1_report(predictions, targets, num_classes).macro_f1;
}

}  // namespace cer

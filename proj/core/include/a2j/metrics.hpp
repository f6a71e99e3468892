#pragma once

// Root-aligned 3D joint errors. In-plane residuals are converted to mm with
// the dataset's mm-per-pixel scale; depth is already in mm. Each hand is
// translated so that its predicted root coincides with the ground-truth
// root, and the root itself is left out of every mean.

#include <optional>
#include <vector>

#include "a2j/anchors.hpp"

namespace a2j {

// Per-joint aligned error in mm; nullopt for invalid joints, roots and
// hands whose root is invalid.
std::vector<std::optional<double>> aligned_joint_errors(const std::vector<JointCoord>& pred,
                                                        const JointTarget& gt, double mm_per_pixel);

// Mean aligned error over valid non-root joints of one sample; nullopt when
// there are none.
std::optional<double> epe(const std::vector<JointCoord>& pred, const JointTarget& gt,
                          double mm_per_pixel);

struct MetricReport {
  std::optional<double> mpjpe_all;
  std::optional<double> mpjpe_single;  // samples with one hand present
  std::optional<double> mpjpe_two;     // samples with both hands present
  std::optional<double> epe;           // mean over samples of per-sample EPE
  std::vector<std::optional<double>> per_joint;
  std::size_t samples = 0;
};

// Accumulates joint errors over a dataset. MPJPE pools every valid non-root
// joint; EPE averages per-sample means.
class MetricAccumulator {
 public:
  MetricAccumulator(std::size_t joint_count, double mm_per_pixel);

  void add(const std::vector<JointCoord>& pred, const JointTarget& gt, std::size_t hand_count);
  MetricReport report() const;

 private:
  struct Sum {
    double total = 0;
    std::size_t count = 0;
    std::optional<double> mean() const {
      return count ? std::optional<double>(total / double(count)) : std::nullopt;
    }
  };
  double mm_per_pixel_;
  Sum all_, single_, two_, epe_;
  std::vector<Sum> per_joint_;
  std::size_t samples_ = 0;
};

}  // namespace a2j

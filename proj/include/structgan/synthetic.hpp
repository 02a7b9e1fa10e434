#ifndef STRUCTGAN_SYNTHETIC_HPP
#define STRUCTGAN_SYNTHETIC_HPP

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "structgan/config.hpp"

namespace structgan {

enum class CorruptionKind { fog, night, rain };

std::string_view to_string(CorruptionKind kind);
CorruptionKind corruption_kind_from_string(std::string_view s);

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::fog;
  double severity = 0.5;  // [0, 1]; 0 leaves the image untouched
  std::uint64_t seed = 0;
};

// Label ids written by the procedural scene renderer.
enum SceneClass : int { kSky = 0, kBuilding = 1, kVegetation = 2, kRoad = 3, kVehicle = 4 };
inline constexpr int kSceneClasses = 5;

struct Scene {
  cv::Mat image;   // CV_32FC3 RGB in [0, 1]
  cv::Mat labels;  // CV_8UC1 class ids
};

// Procedural street scene: sky, buildings with windows, trees, road with lane
// markings and vehicles. Deterministic in `seed`.
Scene render_scene(std::uint64_t seed, Extent size);

// Applies one degradation to a CV_32FC3 RGB image in [0, 1]:
//   fog   blend toward white, alpha = severity * (1 - y / (H - 1))
//   night gamma darkening, channel collapse toward luma, additive noise
//   rain  bright pseudo-random slanted streak segments
cv::Mat corrupt(const cv::Mat& clean, const CorruptionSpec& spec, std::uint64_t image_seed);

struct SyntheticDataset {
  std::vector<std::string> pair_ids;
  std::vector<cv::Mat> clean;     // CV_8UC3 RGB
  std::vector<cv::Mat> degraded;  // CV_8UC3 RGB
  std::vector<cv::Mat> labels;    // CV_8UC1, empty when built from base images
};

// Degraded twins of caller-supplied 8-bit RGB images.
SyntheticDataset synthesize_desk_dataset(const std::vector<cv::Mat>& base_images,
                                         const CorruptionSpec& spec);
// Degraded twins of `count` procedural scenes drawn from `scene_seed`.
SyntheticDataset synthesize_desk_dataset(int count, Extent size, const CorruptionSpec& spec,
                                         std::uint64_t scene_seed);

// Writes root/{trainA,trainB,testA,testB} (A = degraded), labelsB/ for the
// clean training images, and pairs.csv covering every pair.
void write_synthetic_dataset(const std::filesystem::path& root, const SyntheticDataset& train,
                             const SyntheticDataset& test);

// (H, W) class ids -> (K, H, W) float one-hot.
torch::Tensor labels_to_onehot(const cv::Mat& labels, int classes);

}  // namespace structgan

#endif

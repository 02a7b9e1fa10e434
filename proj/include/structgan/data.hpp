#ifndef STRUCTGAN_DATA_HPP
#define STRUCTGAN_DATA_HPP

#include <opencv2/core.hpp>
#include <torch/torch.h>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "structgan/config.hpp"

namespace structgan {

enum class Domain { A, B };
enum class Split { train, test };

// Unpaired image folder, root/{trainA,trainB,testA,testB}. Items are sorted
// lexicographically. By convention A is the degraded domain.
struct UnpairedDataset {
  std::filesystem::path root;
  Domain domain = Domain::A;
  Split split = Split::train;
  std::vector<std::filesystem::path> items;

  std::size_t size() const { return items.size(); }
};

std::string subdir_name(Domain domain, Split split);

// Lists and decodes every image once; throws naming the first undecodable file.
UnpairedDataset load_unpaired_dataset(const std::filesystem::path& root, Domain domain,
                                      Split split = Split::train);
// Same contract for a bare folder of images.
UnpairedDataset load_image_folder(const std::filesystem::path& dir, Domain domain,
                                  Split split = Split::train);
// Sorted PNG/JPEG files of a folder (not decoded).
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// 8-bit RGB image; throws std::runtime_error naming the file when decoding fails.
cv::Mat read_image(const std::filesystem::path& path);
void write_image(const std::filesystem::path& path, const cv::Mat& rgb);

// RGB uint8 (H, W) <-> float (3, H, W) in [-1, 1].
torch::Tensor image_to_tensor(const cv::Mat& rgb);
cv::Mat tensor_to_image(const torch::Tensor& image);

// Bilinear resize to `load`, uniform random crop to `crop`, optional
// horizontal flip with probability 1/2, scaled to [-1, 1]. Returns (3, crop.h, crop.w).
torch::Tensor preprocess(const cv::Mat& rgb, Extent load, Extent crop, std::mt19937_64& rng,
                         bool flip = true);

// Pairs indices of two domains for one epoch: the smaller domain is visited
// once in shuffled order; the larger one is drawn without replacement from a
// queue that is refilled with a fresh permutation when exhausted.
class EpochSampler {
 public:
  EpochSampler(std::size_t size_a, std::size_t size_b);
  std::vector<std::pair<std::size_t, std::size_t>> next_epoch(std::mt19937_64& rng);
  std::size_t steps_per_epoch() const { return std::min(size_a_, size_b_); }

  std::string save_state() const;
  void load_state(const std::string& state);

 private:
  std::size_t size_a_, size_b_;
  std::deque<std::size_t> queue_;
};

// Test pairs declared in root/pairs.csv (pair_id,clean_path,degraded_path),
// restricted to rows whose degraded image lives under testA/.
struct TestPair {
  std::string pair_id;
  std::filesystem::path clean;
  std::filesystem::path degraded;
};

struct PairedTestset {
  std::filesystem::path root;
  std::vector<TestPair> pairs;  // sorted by pair_id
};

PairedTestset load_paired_testset(const std::filesystem::path& root);

}  // namespace structgan

#endif

#include "structgan/data.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace structgan {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    out.push_back(cell);
  }
  return out;
}

}  // namespace

std::string subdir_name(Domain domain, Split split) {
  return std::string(split == Split::train ? "train" : "test") + (domain == Domain::A ? "A" : "B");
}

cv::Mat read_image(const fs::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw std::runtime_error("cannot decode image: " + path.string());
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  return rgb;
}

void write_image(const fs::path& path, const cv::Mat& rgb) {
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write image: " + path.string());
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("image folder not found: " + dir.string());
  std::vector<fs::path> items;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) items.push_back(entry.path());
  std::sort(items.begin(), items.end());
  return items;
}

UnpairedDataset load_unpaired_dataset(const fs::path& root, Domain domain, Split split) {
  return load_image_folder(root / subdir_name(domain, split), domain, split);
}

UnpairedDataset load_image_folder(const fs::path& dir, Domain domain, Split split) {
  UnpairedDataset ds;
  ds.root = dir.parent_path();
  ds.domain = domain;
  ds.split = split;
  ds.items = list_images(dir);
  if (ds.items.empty()) throw std::runtime_error("dataset folder has no images: " + dir.string());
  for (const auto& item : ds.items) read_image(item);
  return ds;
}

torch::Tensor image_to_tensor(const cv::Mat& rgb) {
  if (rgb.type() != CV_8UC3) throw std::invalid_argument("image_to_tensor: expected 8-bit RGB");
  cv::Mat contiguous = rgb.isContinuous() ? rgb : rgb.clone();
  auto t = torch::from_blob(contiguous.data, {contiguous.rows, contiguous.cols, 3}, torch::kUInt8)
               .permute({2, 0, 1})
               .to(torch::kFloat32)
               .clone();
  return t / 127.5 - 1.0;
}

cv::Mat tensor_to_image(const torch::Tensor& image) {
  auto t = image.detach().cpu();
  if (t.dim() == 4 && t.size(0) == 1) t = t.squeeze(0);
  if (t.dim() != 3 || t.size(0) != 3)
    throw std::invalid_argument("tensor_to_image: expected (3, H, W)");
  auto bytes = ((t.clamp(-1, 1) + 1) * 127.5).round().to(torch::kUInt8).permute({1, 2, 0}).contiguous();
  cv::Mat out(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3);
  std::memcpy(out.data, bytes.data_ptr(), static_cast<std::size_t>(bytes.numel()));
  return out;
}

torch::Tensor preprocess(const cv::Mat& rgb, Extent load, Extent crop, std::mt19937_64& rng,
                         bool flip) {
  if (crop.width > load.width || crop.height > load.height)
    throw std::invalid_argument("preprocess: crop " + to_string(crop) + " exceeds load size " +
                                to_string(load));
  if (crop.width < 1 || crop.height < 1) throw std::invalid_argument("preprocess: empty crop");
  cv::Mat resized;
  if (rgb.cols == load.width && rgb.rows == load.height)
    resized = rgb;
  else
    cv::resize(rgb, resized, cv::Size(load.width, load.height), 0, 0, cv::INTER_LINEAR);
  std::uniform_int_distribution<int> ox(0, load.width - crop.width);
  std::uniform_int_distribution<int> oy(0, load.height - crop.height);
  const int x = ox(rng);
  const int y = oy(rng);
  cv::Mat patch = resized(cv::Rect(x, y, crop.width, crop.height));
  auto t = image_to_tensor(patch.clone());
  if (flip && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.5) t = t.flip({2});
  return t;
}

EpochSampler::EpochSampler(std::size_t size_a, std::size_t size_b) : size_a_(size_a), size_b_(size_b) {
  if (size_a == 0 || size_b == 0) throw std::invalid_argument("EpochSampler: empty domain");
}

std::vector<std::pair<std::size_t, std::size_t>> EpochSampler::next_epoch(std::mt19937_64& rng) {
  const bool a_smaller = size_a_ <= size_b_;
  const std::size_t small = a_smaller ? size_a_ : size_b_;
  const std::size_t large = a_smaller ? size_b_ : size_a_;
  std::vector<std::size_t> order(small);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::pair<std::size_t, std::size_t>> epoch;
  epoch.reserve(small);
  for (std::size_t i : order) {
    if (queue_.empty()) {
      std::vector<std::size_t> perm(large);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      queue_.assign(perm.begin(), perm.end());
    }
    const std::size_t j = queue_.front();
    queue_.pop_front();
    epoch.emplace_back(a_smaller ? std::pair{i, j} : std::pair{j, i});
  }
  return epoch;
}

std::string EpochSampler::save_state() const {
  std::ostringstream os;
  os << queue_.size();
  for (auto v : queue_) os << ' ' << v;
  return os.str();
}

void EpochSampler::load_state(const std::string& state) {
  std::istringstream is(state);
  std::size_t n = 0;
  is >> n;
  queue_.clear();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t v = 0;
    is >> v;
    queue_.push_back(v);
  }
  if (!is) throw std::runtime_error("EpochSampler: corrupt state");
}

PairedTestset load_paired_testset(const fs::path& root) {
  const auto csv = root / "pairs.csv";
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("paired evaluation needs " + csv.string());
  PairedTestset set;
  set.root = root;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv_line(line);
    if (header) {
      header = false;
      if (!cells.empty() && cells[0] == "pair_id") continue;
    }
    if (cells.size() != 3) throw std::runtime_error("malformed row in " + csv.string() + ": " + line);
    if (cells[2].rfind("testA/", 0) != 0) continue;
    set.pairs.push_back({cells[0], root / cells[1], root / cells[2]});
  }
  if (set.pairs.empty()) throw std::runtime_error("no test pairs listed in " + csv.string());
  std::sort(set.pairs.begin(), set.pairs.end(),
            [](const TestPair& a, const TestPair& b) { return a.pair_id < b.pair_id; });
  return set;
}

}  // namespace structgan

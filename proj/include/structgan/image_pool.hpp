#ifndef STRUCTGAN_IMAGE_POOL_HPP
#define STRUCTGAN_IMAGE_POOL_HPP

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace structgan {

// History buffer of generated samples shown to the discriminator.
//
// While not full, every query is stored and returned unchanged. Once full, a
// query returns a uniformly chosen stored item (which is replaced by the new
// one) with probability 1/2, and the new item itself otherwise. Capacity 0
// disables the buffer.
template <typename T>
class BasicImagePool {
 public:
  explicit BasicImagePool(std::size_t capacity = 50, std::uint64_t seed = 0)
      : capacity_(capacity), rng_(seed) {}

  T query(T item) {
    if (capacity_ == 0) return item;
    if (buffer_.size() < capacity_) {
      buffer_.push_back(item);
      return item;
    }
    if (coin_(rng_) < 0.5) {
      std::uniform_int_distribution<std::size_t> slot(0, buffer_.size() - 1);
      const auto i = slot(rng_);
      T previous = std::move(buffer_[i]);
      buffer_[i] = std::move(item);
      return previous;
    }
    return item;
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return buffer_.size(); }
  const std::vector<T>& items() const { return buffer_; }

  // Checkpoint support.
  std::mt19937_64& rng() { return rng_; }
  const std::mt19937_64& rng() const { return rng_; }
  void restore(std::vector<T> items, const std::mt19937_64& rng) {
    buffer_ = std::move(items);
    rng_ = rng;
  }

 private:
  std::size_t capacity_;
  std::vector<T> buffer_;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> coin_{0.0, 1.0};
};

}  // namespace structgan

#endif

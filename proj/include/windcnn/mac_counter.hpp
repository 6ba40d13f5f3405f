#pragma once

#include <cstdint>

namespace windcnn {

/// Counts multiply-accumulates issued by conv2d on the current thread while
/// alive. Scopes nest; the innermost one receives the counts.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;

  std::int64_t count() const { return count_; }

  static void record(std::int64_t macs);

 private:
  std::int64_t count_ = 0;
  MacCounter* previous_;
};

}  // namespace windcnn

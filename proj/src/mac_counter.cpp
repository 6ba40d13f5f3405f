#include "windcnn/mac_counter.hpp"

namespace windcnn {

namespace {
thread_local MacCounter* g_active = nullptr;
}

MacCounter::MacCounter() : previous_(g_active) { g_active = this; }
MacCounter::~MacCounter() { g_active = previous_; }

void MacCounter::record(std::int64_t macs) {
  if (g_active) g_active->count_ += macs;
}

}  // namespace windcnn

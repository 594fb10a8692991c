#include <atomic>
#include <cstdlib>
#include <string>

#include "fedquad/error.hpp"
#include "fedquad/kernels.hpp"

namespace fedquad::kernels {
namespace {

const KernelTable* table_for(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return &scalar_table();
    case Backend::kAvx2:
      return avx2_table();
    case Backend::kNeon:
      return neon_table();
  }
  return nullptr;
}

const KernelTable* initial_table() {
  // FEDQUAD_KERNELS pins the backend before any run starts.
  if (const char* forced = std::getenv("FEDQUAD_KERNELS"); forced != nullptr && *forced != '\0') {
    if (const KernelTable* t = table_for(parse_backend(forced)); t != nullptr) return t;
  }
  return table_for(detect_backend());
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Backend active_backend() { return active().backend; }

Backend detect_backend() {
  if (avx2_table() != nullptr) return Backend::kAvx2;
  if (neon_table() != nullptr) return Backend::kNeon;
  return Backend::kScalar;
}

bool backend_available(Backend backend) { return table_for(backend) != nullptr; }

void set_backend(Backend backend) {
  const KernelTable* t = table_for(backend);
  if (t == nullptr) {
    throw InputError("kernel backend '" + std::string(backend_name(backend)) +
                     "' is not available on this machine");
  }
  current().store(t, std::memory_order_release);
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  throw ConfigError("unknown kernel backend '" + std::string(name) +
                    "' (expected scalar, avx2 or neon)");
}

}  // namespace fedquad::kernels

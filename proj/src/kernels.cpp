// Copyright 2026 The softprompt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "softprompt/kernels.hpp"

namespace softprompt::kernels {
namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("SOFTPROMPT_KERNELS");
  if (env != nullptr && std::string(env) == "scalar") return &scalar_table();
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

const KernelTable& table_for(Backend backend) {
  if (backend == Backend::kScalar) return scalar_table();
  const KernelTable* t = avx2_table();
  if (t == nullptr) {
    throw std::invalid_argument("AVX2 kernels are not available on this host");
  }
  return *t;
}

}  // namespace

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool avx2_available() { return avx2_table() != nullptr; }

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

void select(Backend backend) {
  current().store(&table_for(backend), std::memory_order_relaxed);
}

ScopedBackend::ScopedBackend(Backend backend) : previous_(active().backend) {
  select(backend);
}

ScopedBackend::~ScopedBackend() { select(previous_); }

}  // namespace softprompt::kernels

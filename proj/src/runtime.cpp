// SPDX-License-Identifier: Apache-2.0
#include "stdet/runtime.hpp"

#include <cstdlib>  // defines __GLIBC__

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace stdet {

void configure_allocator() {
#if defined(__GLIBC__)
  // Setting any of these disables glibc's adaptive mmap threshold, so all
  // three are pinned together.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);  // the largest value glibc accepts
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace stdet

// SPDX-License-Identifier: Apache-2.0
/**
 * @file   runtime.hpp
 * @brief  Process-level settings for the long-running binaries.
 */
#ifndef STDET_RUNTIME_HPP_
#define STDET_RUNTIME_HPP_

namespace stdet {

/// Keeps large tensor buffers on the heap instead of returning them to the
/// kernel after every training step. Training allocates and frees
/// megabyte-sized activations per clip; with glibc defaults each one is an
/// mmap/munmap pair. No-op on other C libraries.
void configure_allocator();

}  // namespace stdet

#endif  // STDET_RUNTIME_HPP_

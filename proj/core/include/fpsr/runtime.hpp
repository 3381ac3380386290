#pragma once

namespace fpsr {

/// Keeps freed heap memory in the process instead of returning it to the
/// operating system. Training allocates and frees tensors of the same sizes
/// every step, and without this glibc unmaps and re-faults them each time.
/// Call once at program start; does nothing on other C libraries.
void retain_freed_memory();

}  // namespace fpsr

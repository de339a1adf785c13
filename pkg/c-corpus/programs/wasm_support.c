#include "entry.h"

/* Linked into wasm builds only.  The host stages input buffers through
 * an exported "malloc", and these programs never free, so a bump
 * pointer is enough.  Grows linear memory when a request runs past the
 * pages wasm-ld reserved (the sieve's flag buffer does). */

extern u8 __heap_base;

#define WASM_PAGE 65536UL

static unsigned long next_free = 0;

/* unsigned long, not u64: wasm32 size_t, matches the clang builtin. */
void *malloc(unsigned long n) {
    if (next_free == 0)
        next_free = (unsigned long)&__heap_base;
    unsigned long p = (next_free + 15UL) & ~15UL;
    unsigned long have = __builtin_wasm_memory_size(0) * WASM_PAGE;
    if (p + n > have) {
        unsigned long pages = (p + n - have + WASM_PAGE - 1) / WASM_PAGE;
        if (__builtin_wasm_memory_grow(0, pages) == (unsigned long)-1)
            return 0;
    }
    next_free = p + n;
    return (void *)p;
}

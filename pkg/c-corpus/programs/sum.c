#include "entry.h"

u64 sum_entry(u8 *mem, u64 mem_len, u64 a, u64 b) {
    (void)a; (void)b;
    u64 total = 0;
    for (u64 i = 0; i + 8 <= mem_len; i += 8)
        total += *(u64 *)(mem + i);
    return total;
}

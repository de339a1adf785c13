#include "entry.h"

/* Sieve of Eratosthenes over the staged buffer; mem[i] != 0 marks i
 * composite.  The buffer arrives zeroed and must hold n + 1 flags. */
u64 prime_count_entry(u8 *mem, u64 mem_len, u64 a, u64 b) {
    (void)b;
    u64 n = a;
    if (n + 1 > mem_len)
        return (u64)-1;
    u64 count = 0;
    for (u64 i = 2; i <= n; i++) {
        if (mem[i])
            continue;
        count++;
        for (u64 j = i * i; j <= n; j += i)
            mem[j] = 1;
    }
    return count;
}

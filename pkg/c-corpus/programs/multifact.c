#include "entry.h"

/* Falling product a * (a - b) * (a - 2b) * ... over the positive terms;
 * b = 1 gives the plain factorial.  The product wraps modulo 2^64. */
u64 multifact_entry(u8 *mem, u64 mem_len, u64 a, u64 b) {
    (void)mem; (void)mem_len;
    if (b == 0)
        return 0;
    u64 product = 1;
    /* i <= a catches the unsigned wrap when the next term would have
     * gone negative. */
    for (u64 i = a; i > 0 && i <= a; i -= b)
        product *= i;
    return product;
}

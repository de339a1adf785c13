/* Not part of the corpus.  Exists to demonstrate the one C construct
 * the eBPF lane rejects at compile time: clang's BPF backend has no
 * signed divide, so this source must fail with its "convert to
 * unsigned div/mod" diagnostic.  The build never links it. */

typedef long long s64;
typedef unsigned long long u64;
typedef unsigned char u8;

u64 sdiv_entry(u8 *mem, u64 mem_len, u64 a, u64 b) {
    (void)mem; (void)mem_len;
    s64 sa = (s64)a, sb = (s64)b;
    return (u64)(sa / sb);
}

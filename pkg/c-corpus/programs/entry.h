#ifndef CCORPUS_ENTRY_H
#define CCORPUS_ENTRY_H

/* Shared entry contract: one source serves the native, eBPF, and wasm
 * targets.  mem points at externally staged memory (null when none was
 * granted), mem_len is its size in bytes, a and b are scalar arguments.
 * Results use the full unsigned 64-bit range. */

typedef unsigned char u8;
typedef unsigned long long u64;

#endif

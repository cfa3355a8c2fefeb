/* simpl_rt.h - self-contained runtime for generated sampling programs and
 * the handcoded baseline: deterministic PRNG, timing, failure reporting and
 * memo tables. Header-only, C99, no dependencies beyond libc/libm.
 *
 * The PRNG is the shared contract across every backend: splitmix-style
 * mixing (gamma 0x9E3779B97F4A7C15, two xor-shift-multiply rounds), uniform
 * doubles from the top 53 bits, flip(p) true iff uniform < p.
 */
#ifndef SIMPL_RT_H
#define SIMPL_RT_H

/* clock_gettime needs POSIX.1b; must precede the first libc include */
#if !defined(_POSIX_C_SOURCE) || _POSIX_C_SOURCE < 199309L
#undef _POSIX_C_SOURCE
#define _POSIX_C_SOURCE 199309L
#endif

#define SIMPL_RT_VERSION 1

#include <inttypes.h>
#include <math.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <time.h>

/* ---- PRNG ---------------------------------------------------------------- */

typedef struct {
    uint64_t state;
    uint64_t draws;
} simpl_rng;

static inline uint64_t simpl_next(simpl_rng *r)
{
    uint64_t z = (r->state += UINT64_C(0x9E3779B97F4A7C15));
    z = (z ^ (z >> 30)) * UINT64_C(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)) * UINT64_C(0x94D049BB133111EB);
    r->draws++;
    return z ^ (z >> 31);
}

static inline double simpl_uniform(simpl_rng *r)
{
    return (double)(simpl_next(r) >> 11) * (1.0 / 9007199254740992.0);
}

static inline bool simpl_flip(simpl_rng *r, double p)
{
    return simpl_uniform(r) < p;
}

static inline int64_t simpl_random_index(simpl_rng *r, int64_t k)
{
    return (int64_t)(simpl_uniform(r) * (double)k);
}

/* ---- misc ------------------------------------------------------------------ */

static inline int64_t simpl_now_ns(void)
{
    struct timespec ts;
    clock_gettime(CLOCK_MONOTONIC, &ts);
    return (int64_t)ts.tv_sec * 1000000000 + ts.tv_nsec;
}

static inline void simpl_fail(const char *msg, int code)
{
    fprintf(stderr, "simpl runtime error: %s\n", msg);
    exit(code);
}

static inline uint64_t simpl_d2u(double d)
{
    uint64_t u;
    memcpy(&u, &d, sizeof u);
    return u;
}

/* ---- cache key packing -------------------------------------------------------
 * Keys are packed into u64 words: booleans bitwise in order, integer and
 * double components aligned to the next word boundary. The generator fixes
 * the layout; store and lookup just compare whole words. */

static inline void simpl_key_bit(uint64_t *kw, int *pos, bool b)
{
    if (b)
        kw[*pos >> 6] |= UINT64_C(1) << (*pos & 63);
    (*pos)++;
}

static inline void simpl_key_word(uint64_t *kw, int *pos, uint64_t w)
{
    *pos = (*pos + 63) / 64 * 64;
    kw[*pos >> 6] = w;
    *pos += 64;
}

/* ---- memo tables ---------------------------------------------------------------
 * Dense mode (all-boolean keys of at most 20 bits): direct-indexed value
 * array plus an occupancy bit array - never a magic value, cached results
 * may legitimately be 0.0. Otherwise open-addressing hash on the key words. */

typedef struct {
    int nwords;
    bool dense;
    int dense_bits;
    double *vals;      /* dense: 2^bits entries; hash: cap entries */
    uint8_t *occ;      /* dense/hash occupancy */
    uint64_t *keys;    /* hash: cap * nwords words */
    size_t cap;
    size_t count;
    uint64_t hits;
    uint64_t misses;
} simpl_cache;

static inline void simpl_cache_init(simpl_cache *c, int nwords, bool dense, int bits)
{
    memset(c, 0, sizeof *c);
    c->nwords = nwords;
    c->dense = dense;
    c->dense_bits = bits;
    if (dense) {
        size_t n = (size_t)1 << bits;
        c->vals = (double *)calloc(n, sizeof(double));
        c->occ = (uint8_t *)calloc(n, 1);
        if (!c->vals || !c->occ)
            simpl_fail("cache allocation failed", 1);
    } else {
        c->cap = 64;
        c->vals = (double *)calloc(c->cap, sizeof(double));
        c->occ = (uint8_t *)calloc(c->cap, 1);
        c->keys = (uint64_t *)calloc(c->cap * (size_t)nwords, sizeof(uint64_t));
        if (!c->vals || !c->occ || !c->keys)
            simpl_fail("cache allocation failed", 1);
    }
}

static inline uint64_t simpl_key_hash(const uint64_t *key, int nwords)
{
    uint64_t h = UINT64_C(0xcbf29ce484222325);
    for (int i = 0; i < nwords; i++) {
        h ^= key[i];
        h *= UINT64_C(0x100000001b3);
        h ^= h >> 29;
    }
    return h;
}

static inline void simpl_cache_grow(simpl_cache *c)
{
    size_t ncap = c->cap * 2;
    double *nvals = (double *)calloc(ncap, sizeof(double));
    uint8_t *nocc = (uint8_t *)calloc(ncap, 1);
    uint64_t *nkeys = (uint64_t *)calloc(ncap * (size_t)c->nwords, sizeof(uint64_t));
    if (!nvals || !nocc || !nkeys)
        simpl_fail("cache allocation failed", 1);
    for (size_t i = 0; i < c->cap; i++) {
        if (!c->occ[i])
            continue;
        const uint64_t *k = c->keys + i * c->nwords;
        size_t j = (size_t)(simpl_key_hash(k, c->nwords) & (ncap - 1));
        while (nocc[j])
            j = (j + 1) & (ncap - 1);
        nocc[j] = 1;
        nvals[j] = c->vals[i];
        memcpy(nkeys + j * c->nwords, k, sizeof(uint64_t) * (size_t)c->nwords);
    }
    free(c->vals);
    free(c->occ);
    free(c->keys);
    c->vals = nvals;
    c->occ = nocc;
    c->keys = nkeys;
    c->cap = ncap;
}

/* Returns the value slot on a hit (counting a hit), NULL on a miss (counting
 * a miss). A miss must be followed by simpl_cache_store with the same key. */
static inline double *simpl_cache_lookup(simpl_cache *c, const uint64_t *key)
{
    if (c->dense) {
        uint64_t idx = key[0];
        if (c->occ[idx]) {
            c->hits++;
            return &c->vals[idx];
        }
        c->misses++;
        return NULL;
    }
    size_t mask = c->cap - 1;
    size_t j = (size_t)(simpl_key_hash(key, c->nwords) & mask);
    while (c->occ[j]) {
        if (memcmp(c->keys + j * c->nwords, key,
                   sizeof(uint64_t) * (size_t)c->nwords) == 0) {
            c->hits++;
            return &c->vals[j];
        }
        j = (j + 1) & mask;
    }
    c->misses++;
    return NULL;
}

static inline void simpl_cache_store(simpl_cache *c, const uint64_t *key, double v)
{
    if (c->dense) {
        uint64_t idx = key[0];
        c->occ[idx] = 1;
        c->vals[idx] = v;
        c->count++;
        return;
    }
    if ((c->count + 1) * 10 >= c->cap * 7)
        simpl_cache_grow(c);
    size_t mask = c->cap - 1;
    size_t j = (size_t)(simpl_key_hash(key, c->nwords) & mask);
    while (c->occ[j])
        j = (j + 1) & mask;
    c->occ[j] = 1;
    c->vals[j] = v;
    memcpy(c->keys + j * c->nwords, key, sizeof(uint64_t) * (size_t)c->nwords);
    c->count++;
}

static inline uint64_t simpl_cache_size(const simpl_cache *c)
{
    return (uint64_t)c->count;
}

#endif /* SIMPL_RT_H */

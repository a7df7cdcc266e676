/* Elementwise GRU gate math over one timestep, row-major (B rows).
 * Written as flat loops over restrict pointers so the compiler can
 * vectorize the transcendental calls (libmvec).
 */
#ifndef FETSGAN_GRU_GATES_H
#define FETSGAN_GRU_GATES_H

#include <math.h>
#include <stddef.h>

#define FETSGAN_DEFINE_GATES(T, SUF, EXP, TANH)                                  \
static void gates_fwd_##SUF(ptrdiff_t B, ptrdiff_t H,                            \
        const T *restrict gx, const T *restrict gh, const T *restrict hprev,     \
        const T *restrict mask, T *restrict r, T *restrict z, T *restrict n,     \
        T *restrict ghn, T *restrict h)                                          \
{                                                                                \
    for (ptrdiff_t b = 0; b < B; b++) {                                          \
        const T *gxb = gx + b * 3 * H, *ghb = gh + b * 3 * H;                    \
        const T *hpb = hprev + b * H;                                            \
        T *rb = r + b * H, *zb = z + b * H, *nb = n + b * H;                     \
        T *gnb = ghn + b * H, *hb = h + b * H;                                   \
        const T m = mask[b];                                                     \
        for (ptrdiff_t j = 0; j < H; j++) {                                      \
            T rr = (T)1 / ((T)1 + EXP(-(gxb[j] + ghb[j])));                      \
            T zz = (T)1 / ((T)1 + EXP(-(gxb[H + j] + ghb[H + j])));              \
            T g = ghb[2 * H + j];                                                \
            T nn = TANH(gxb[2 * H + j] + rr * g);                                \
            T hp = hpb[j];                                                       \
            rb[j] = rr; zb[j] = zz; nb[j] = nn; gnb[j] = g;                      \
            hb[j] = hp + m * ((nn + zz * (hp - nn)) - hp);                       \
        }                                                                        \
    }                                                                            \
}                                                                                \
                                                                                 \
static void gates_bwd_##SUF(ptrdiff_t B, ptrdiff_t H,                            \
        const T *restrict dh, const T *restrict dhs, const T *restrict hprev,    \
        const T *restrict mask, const T *restrict r, const T *restrict z,        \
        const T *restrict n, const T *restrict ghn, T *restrict dgx,             \
        T *restrict dgh, T *restrict dnext)                                      \
{                                                                                \
    for (ptrdiff_t b = 0; b < B; b++) {                                          \
        const T m = mask[b];                                                     \
        const ptrdiff_t o = b * H, o3 = b * 3 * H;                               \
        for (ptrdiff_t j = 0; j < H; j++) {                                      \
            T g = dh[o + j] + dhs[o + j];                                        \
            T dhn = m * g;                                                       \
            T rr = r[o + j], zz = z[o + j], nn = n[o + j];                       \
            T dn = dhn * ((T)1 - zz);                                            \
            T dz = dhn * (hprev[o + j] - nn);                                    \
            T dan = dn * ((T)1 - nn * nn);                                       \
            T dar = dan * ghn[o + j] * rr * ((T)1 - rr);                         \
            T daz = dz * zz * ((T)1 - zz);                                       \
            dgx[o3 + j] = dar; dgx[o3 + H + j] = daz; dgx[o3 + 2 * H + j] = dan; \
            dgh[o3 + j] = dar; dgh[o3 + H + j] = daz;                            \
            dgh[o3 + 2 * H + j] = dan * rr;                                      \
            dnext[o + j] = ((T)1 - m) * g + dhn * zz;                            \
        }                                                                        \
    }                                                                            \
}

FETSGAN_DEFINE_GATES(float, f, expf, tanhf)
FETSGAN_DEFINE_GATES(double, d, exp, tanh)

#endif

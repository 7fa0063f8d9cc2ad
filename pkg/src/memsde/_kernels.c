/* Hot loops: Philox4x32-10 counter-based noise, inverse-CDF normals
 * (Wichura's AS241 split into a branch-free central pass plus a scalar
 * tail fixup), and a fused multi-level driver for scalar cubic SDEs.
 *
 * The per-step loops are phase-separated over a block of trajectories so
 * the compiler can vectorize each phase independently.  Every lane's
 * arithmetic depends only on its own data, so results are independent of
 * block size and worker count.
 */

#include "_kernels.h"

#include <math.h>
#include <stdlib.h>
#include <string.h>

#define PH_M0 0xD2511F53u
#define PH_M1 0xCD9E8D57u
#define PH_W0 0x9E3779B9u
#define PH_W1 0xBB67AE85u

#define DIVERGENCE_THRESHOLD 1e37
#define BLOCK 4096L

/* AS241 rational approximations for the inverse normal CDF. */
static const double A[8] = {
    3.3871328727963666080e0, 1.3314166789178437745e2,
    1.9715909503065514427e3, 1.3731693765509461125e4,
    4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3};
static const double B_[8] = {
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4,
    3.9307895800092710610e4, 2.8729085735721942674e4,
    5.2264952788528545610e3};
static const double Cc[8] = {
    1.42343711074968357734e0, 4.63033784615654529590e0,
    5.76949722146069140550e0, 3.64784832476320460504e0,
    1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4};
static const double Dd[8] = {
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1,
    1.51986665636164571966e-2, 5.47593808499534494600e-4,
    1.05075007164441684324e-9};
static const double Ee[8] = {
    6.65790464350110377720e0, 5.46378491116411436990e0,
    1.78482653991729133580e0, 2.96560571828504891230e-1,
    2.65321895265761230930e-2, 1.24150027683134789380e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7};
static const double Ff[8] = {
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4,
    1.84631831751005468180e-5, 1.42151175831644588870e-7,
    2.04426310338993978564e-15};

static inline double poly7(const double *c, double r)
{
    return ((((((c[7] * r + c[6]) * r + c[5]) * r + c[4]) * r + c[3]) * r
             + c[2]) * r + c[1]) * r + c[0];
}

static double tail_z(double p)
{
    double q = p - 0.5;
    double r = (q < 0.0) ? p : 1.0 - p;
    double z;
    r = sqrt(-log(r));
    if (r <= 5.0) {
        r -= 1.6;
        z = poly7(Cc, r) / poly7(Dd, r);
    } else {
        r -= 5.0;
        z = poly7(Ee, r) / poly7(Ff, r);
    }
    return (q < 0.0) ? -z : z;
}

/* One Philox4x32-10 block.  Counter: (block_lo, block_hi, traj_lo,
 * traj_hi); key: (seed_lo, seed_hi).  Outputs the four words. */
static inline void philox_block(uint64_t blk, uint64_t traj, uint64_t seed,
                                uint32_t w[4])
{
    uint32_t c0 = (uint32_t)blk, c1 = (uint32_t)(blk >> 32);
    uint32_t c2 = (uint32_t)traj, c3 = (uint32_t)(traj >> 32);
    uint32_t k0 = (uint32_t)seed, k1 = (uint32_t)(seed >> 32);
    for (int r = 0; r < 10; r++) {
        uint64_t p0 = (uint64_t)PH_M0 * c0;
        uint64_t p1 = (uint64_t)PH_M1 * c2;
        uint32_t n0 = (uint32_t)(p1 >> 32) ^ c1 ^ k0;
        uint32_t n1 = (uint32_t)p1;
        uint32_t n2 = (uint32_t)(p0 >> 32) ^ c3 ^ k1;
        uint32_t n3 = (uint32_t)p0;
        c0 = n0; c1 = n1; c2 = n2; c3 = n3;
        k0 += PH_W0; k1 += PH_W1;
    }
    w[0] = c0; w[1] = c1; w[2] = c2; w[3] = c3;
}

static inline double u64_to_uniform(uint64_t u)
{
    return ((double)(u >> 11) + 0.5) * 1.1102230246251565e-16; /* 2^-53 */
}

void mem_uniforms(uint64_t seed, const uint64_t *traj, long nt,
                  long g_lo, long g_hi, double *out)
{
    long ng = g_hi - g_lo;
    for (long t = 0; t < nt; t++) {
        double *row = out + t * ng;
        for (long g = g_lo; g < g_hi; g++) {
            uint32_t w[4];
            philox_block((uint64_t)(g >> 1), traj[t], seed, w);
            uint64_t u = (g & 1)
                ? (((uint64_t)w[3] << 32) | w[2])
                : (((uint64_t)w[1] << 32) | w[0]);
            row[g - g_lo] = u64_to_uniform(u);
        }
    }
}

void mem_gaussians(uint64_t seed, const uint64_t *traj, long nt,
                   long g_lo, long g_hi, double *out)
{
    long ng = g_hi - g_lo;
    mem_uniforms(seed, traj, nt, g_lo, g_hi, out);
    for (long i = 0; i < nt * ng; i++) {
        double p = out[i];
        double q = p - 0.5;
        if (q <= 0.425 && q >= -0.425) {
            double r = 0.180625 - q * q;
            out[i] = q * poly7(A, r) / poly7(B_, r);
        } else {
            out[i] = tail_z(p);
        }
    }
}

/* --- fused multi-level chain driver ------------------------------------ */

enum { V_EM, V_TEM8, V_TEM2, V_TEM_GEN, V_PEM };

/* Advance one level: y[i] <- step(y[i], dW = dw[i] * dws) with
 * clamp-freeze at the divergence threshold.  Frozen lanes (|y| already
 * at the threshold) keep their value.  All selects are branch-free so
 * the loops vectorize; the first-divergence scan only runs when some
 * lane actually reached the threshold this step. */
static void level_step(int variant, double *restrict y,
                       const double *restrict dw, double dws, long bw,
                       double tau_l, double a1, double a3,
                       double s0, double s2, double e4, double radius,
                       int64_t *restrict div, int64_t cs)
{
    const double TH = DIVERGENCE_THRESHOLD;
    double badsum = 0.0;
    long i;
    switch (variant) {
    case V_EM:
        for (i = 0; i < bw; i++) {
            double x = y[i];
            double x2 = x * x;
            double b = a1 * x - a3 * x * x2;
            double sg = sqrt(s0 + s2 * x2);
            double yn = x + b * tau_l + sg * (dw[i] * dws);
            double a = fabs(yn);
            badsum += (a >= TH) ? 1.0 : 0.0;
            yn = (a >= TH) ? copysign(TH, yn) : yn;
            y[i] = (fabs(x) >= TH) ? x : yn;
        }
        break;
    case V_TEM8:
        for (i = 0; i < bw; i++) {
            double x = y[i];
            double x2 = x * x, x4 = x2 * x2, x8 = x4 * x4;
            double b = a1 * x - a3 * x * x2;
            double inv = 1.0 / sqrt(sqrt(1.0 + tau_l * x8));
            double sg = sqrt(s0 + s2 * x2);
            double yn = x + b * inv * tau_l + sg * inv * (dw[i] * dws);
            double a = fabs(yn);
            badsum += (a >= TH) ? 1.0 : 0.0;
            yn = (a >= TH) ? copysign(TH, yn) : yn;
            y[i] = (fabs(x) >= TH) ? x : yn;
        }
        break;
    case V_TEM2:
        for (i = 0; i < bw; i++) {
            double x = y[i];
            double x2 = x * x;
            double b = a1 * x - a3 * x * x2;
            double inv = 1.0 / sqrt(sqrt(1.0 + tau_l * x2));
            double sg = sqrt(s0 + s2 * x2);
            double yn = x + b * inv * tau_l + sg * inv * (dw[i] * dws);
            double a = fabs(yn);
            badsum += (a >= TH) ? 1.0 : 0.0;
            yn = (a >= TH) ? copysign(TH, yn) : yn;
            y[i] = (fabs(x) >= TH) ? x : yn;
        }
        break;
    case V_TEM_GEN:
        for (i = 0; i < bw; i++) {
            double x = y[i];
            double x2 = x * x;
            double b = a1 * x - a3 * x * x2;
            double inv = 1.0 / sqrt(sqrt(1.0 + tau_l * pow(fabs(x), e4)));
            double sg = sqrt(s0 + s2 * x2);
            double yn = x + b * inv * tau_l + sg * inv * (dw[i] * dws);
            double a = fabs(yn);
            badsum += (a >= TH) ? 1.0 : 0.0;
            yn = (a >= TH) ? copysign(TH, yn) : yn;
            y[i] = (fabs(x) >= TH) ? x : yn;
        }
        break;
    case V_PEM:
        for (i = 0; i < bw; i++) {
            double x = y[i];
            double px = (fabs(x) > radius) ? copysign(radius, x) : x;
            double p2 = px * px;
            double b = a1 * px - a3 * px * p2;
            double sg = sqrt(s0 + s2 * p2);
            double yn = px + b * tau_l + sg * (dw[i] * dws);
            double a = fabs(yn);
            badsum += (a >= TH) ? 1.0 : 0.0;
            yn = (a >= TH) ? copysign(TH, yn) : yn;
            y[i] = (fabs(x) >= TH) ? x : yn;
        }
        break;
    }
    if (badsum != 0.0)
        for (i = 0; i < bw; i++)
            div[i] = (div[i] < 0 && fabs(y[i]) >= TH) ? cs : div[i];
}

int mem_run_chain(uint64_t seed, uint64_t traj0, const double *y0, long M,
                  double tau_fine, const int64_t *refs, int nlev,
                  long n_fine, int scheme,
                  double a1, double a3, double s0, double s2, double gamma,
                  long snap_step, double *term, int64_t *div, double *snap)
{
    if (M < 1 || nlev < 1 || n_fine < 1 || tau_fine <= 0.0)
        return 1;
    for (int l = 0; l < nlev; l++) {
        int64_t r = refs[l];
        if (r < 1 || (r & (r - 1)) != 0 || n_fine % r != 0)
            return 2;
        if (snap_step > 0 && snap_step % r != 0)
            return 2;
    }
    if (scheme < 0 || scheme > 2)
        return 3;

    double e4 = 4.0 * (gamma - 1.0);
    int variant;
    if (scheme == 0) variant = V_EM;
    else if (scheme == 2) variant = V_PEM;
    else if (e4 == 8.0) variant = V_TEM8;
    else if (e4 == 2.0) variant = V_TEM2;
    else variant = V_TEM_GEN;

    /* Coarse levels accumulate through a shared base accumulator with
     * period r_base = min coarse refinement (which divides every coarse
     * refinement, all being powers of two).  This keeps one accumulate
     * pass per fine step regardless of the number of levels; per-level
     * sums therefore group fine increments in blocks of r_base, which
     * differs from a flat left-to-right sum only by rounding. */
    int64_t r_base = 0;
    for (int l = 0; l < nlev; l++)
        if (refs[l] > 1 && (r_base == 0 || refs[l] < r_base))
            r_base = refs[l];

    double sqf = sqrt(tau_fine);
    double *Y = malloc((size_t)nlev * BLOCK * sizeof(double));
    double *ACC = malloc((size_t)nlev * BLOCK * sizeof(double));
    double *base = malloc(BLOCK * sizeof(double));
    double *un = malloc(2 * BLOCK * sizeof(double));
    double *z = malloc(2 * BLOCK * sizeof(double));
    uint64_t *uu = malloc(2 * BLOCK * sizeof(uint64_t));
    double *tau_l = malloc((size_t)nlev * sizeof(double));
    double *radius = malloc((size_t)nlev * sizeof(double));
    if (!Y || !ACC || !base || !un || !z || !uu || !tau_l || !radius) {
        free(Y); free(ACC); free(base); free(un); free(z); free(uu);
        free(tau_l); free(radius);
        return 4;
    }
    for (int l = 0; l < nlev; l++) {
        tau_l[l] = refs[l] * tau_fine;
        radius[l] = pow(tau_l[l], -1.0 / (2.0 * gamma));
    }
    uint32_t k0 = (uint32_t)seed, k1 = (uint32_t)(seed >> 32);

    for (long nb = 0; nb < M; nb += BLOCK) {
        long bw = (M - nb < BLOCK) ? (M - nb) : BLOCK;
        for (int l = 0; l < nlev; l++) {
            memcpy(Y + l * BLOCK, y0 + nb, bw * sizeof(double));
            memset(ACC + l * BLOCK, 0, bw * sizeof(double));
            for (long i = 0; i < bw; i++)
                div[(long)l * M + nb + i] = -1;
        }
        memset(base, 0, bw * sizeof(double));
        for (long n0 = 0; n0 < n_fine; n0 += 2) {
            int npair = (n0 + 1 < n_fine) ? 2 : 1;
            /* phase 1: one Philox block per lane yields the uniforms
             * for both steps of the pair (branch-free). */
            for (long i = 0; i < bw; i++) {
                uint64_t traj = traj0 + (uint64_t)(nb + i);
                uint64_t blk = (uint64_t)(n0 >> 1);
                uint32_t c0 = (uint32_t)blk, c1 = (uint32_t)(blk >> 32);
                uint32_t c2 = (uint32_t)traj, c3 = (uint32_t)(traj >> 32);
                uint32_t kk0 = k0, kk1 = k1;
                for (int r = 0; r < 10; r++) {
                    uint64_t p0 = (uint64_t)PH_M0 * c0;
                    uint64_t p1 = (uint64_t)PH_M1 * c2;
                    uint32_t m0 = (uint32_t)(p1 >> 32) ^ c1 ^ kk0;
                    uint32_t m1 = (uint32_t)p1;
                    uint32_t m2 = (uint32_t)(p0 >> 32) ^ c3 ^ kk1;
                    uint32_t m3 = (uint32_t)p0;
                    c0 = m0; c1 = m1; c2 = m2; c3 = m3;
                    kk0 += PH_W0; kk1 += PH_W1;
                }
                uu[i] = ((uint64_t)c1 << 32) | c0;
                uu[BLOCK + i] = ((uint64_t)c3 << 32) | c2;
            }
            /* phase 2: uniform + central inverse normal (branch-free). */
            long nz = npair * BLOCK;
            for (long i = 0; i < nz; i++) {
                double p = u64_to_uniform(uu[i]);
                un[i] = p;
                double q = p - 0.5;
                double r = 0.180625 - q * q;
                z[i] = q * poly7(A, r) / poly7(B_, r);
            }
            /* phase 3: tail fixup, scalar, rare. */
            for (long i = 0; i < nz; i++) {
                double q = un[i] - 0.5;
                if (q > 0.425 || q < -0.425)
                    z[i] = tail_z(un[i]);
            }
            for (int s = 0; s < npair; s++) {
                long n = n0 + s;
                double *zs = z + (size_t)s * BLOCK;
                /* phase 4: fine-step levels consume dW = z*sqf directly;
                 * coarse levels go through the base accumulator. */
                for (int l = 0; l < nlev; l++)
                    if (refs[l] == 1)
                        level_step(variant, Y + l * BLOCK, zs, sqf, bw,
                                   tau_l[l], a1, a3, s0, s2, e4,
                                   radius[l], div + (long)l * M + nb,
                                   n + 1);
                if (r_base > 0) {
                    for (long i = 0; i < bw; i++)
                        base[i] += zs[i] * sqf;
                    if (((n + 1) & (r_base - 1)) == 0) {
                        for (int l = 0; l < nlev; l++) {
                            if (refs[l] == 1)
                                continue;
                            double *acc = ACC + l * BLOCK;
                            for (long i = 0; i < bw; i++)
                                acc[i] += base[i];
                            if (((n + 1) & (refs[l] - 1)) == 0) {
                                level_step(variant, Y + l * BLOCK, acc,
                                           1.0, bw, tau_l[l], a1, a3,
                                           s0, s2, e4, radius[l],
                                           div + (long)l * M + nb,
                                           (n + 1) / refs[l]);
                                memset(acc, 0, bw * sizeof(double));
                            }
                        }
                        memset(base, 0, bw * sizeof(double));
                    }
                }
                if (snap_step > 0 && n + 1 == snap_step)
                    for (int l = 0; l < nlev; l++)
                        memcpy(snap + (long)l * M + nb, Y + l * BLOCK,
                               bw * sizeof(double));
            }
        }
        for (int l = 0; l < nlev; l++)
            memcpy(term + (long)l * M + nb, Y + l * BLOCK,
                   bw * sizeof(double));
    }
    free(Y); free(ACC); free(base); free(un); free(z); free(uu);
    free(tau_l); free(radius);
    return 0;
}

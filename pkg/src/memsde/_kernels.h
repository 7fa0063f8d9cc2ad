#ifndef MEMSDE_KERNELS_H
#define MEMSDE_KERNELS_H

#include <stdint.h>

/* Counter-based uniforms/normals.  Value index g addresses one draw per
 * (trajectory, g); see noise.py for the block/parity layout.  out has
 * shape (nt, g_hi - g_lo), row-major. */
void mem_uniforms(uint64_t seed, const uint64_t *traj, long nt,
                  long g_lo, long g_hi, double *out);
void mem_gaussians(uint64_t seed, const uint64_t *traj, long nt,
                   long g_lo, long g_hi, double *out);

/* Fused 1-D multi-level driver for scalar SDEs with drift
 * b(x) = a1*x - a3*x^3 and diffusion sigma(x) = sqrt(s0 + s2*x^2).
 *
 * Level l advances with step refs[l]*tau_fine driven by left-to-right
 * sums of the shared fine increments.  scheme: 0 = unmodified Euler,
 * 1 = tamed, 2 = projected.  Lanes reaching |y| >= 1e37 are clamped
 * there and frozen; div[l*M+i] records the first offending coarse step
 * (-1 otherwise).  If snap_step > 0 (a fine-step index divisible by
 * every refinement), snap[l*M+i] receives the level states there.
 * Returns 0 on success, nonzero on bad arguments. */
int mem_run_chain(uint64_t seed, uint64_t traj0, const double *y0, long M,
                  double tau_fine, const int64_t *refs, int nlev,
                  long n_fine, int scheme,
                  double a1, double a3, double s0, double s2, double gamma,
                  long snap_step, double *term, int64_t *div, double *snap);

#endif

"""Counter-based Brownian increments.

Every Gaussian draw is a pure function of (seed, trajectory_id, value
index) through a Philox4x32-10 block cipher, so ensembles are identical
for any worker count or evaluation order.  Value index g = step*m + j
for Wiener component j.  Two 32-bit output words form one 53-bit
uniform; blocks are shared between consecutive value indices (g >> 1
selects the block, g & 1 the word pair).

Coarse increments are left-to-right sums of their constituent fine
increments; this order is part of the contract and is mirrored by the
compiled core.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ._backend import HAVE_COMPILED, core
from .errors import ConfigError

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_INV53 = 2.0 ** -53


def philox4x32(c0, c1, c2, c3, k0, k1):
    """One Philox4x32-10 block per element; 32-bit lanes held in uint64."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = ((p1 >> _S32) ^ c1 ^ k0) & _MASK32
        n1 = p1 & _MASK32
        n2 = ((p0 >> _S32) ^ c3 ^ k1) & _MASK32
        n3 = p0 & _MASK32
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _W0) & _MASK32
        k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


def uniforms(seed, traj_ids, g_lo, g_hi):
    """Open-interval (0,1) uniforms for value indices [g_lo, g_hi).

    Returns an array of shape (len(traj_ids), g_hi - g_lo).
    """
    traj = np.asarray(traj_ids, dtype=np.uint64).reshape(-1, 1)
    g = np.arange(g_lo, g_hi, dtype=np.uint64).reshape(1, -1)
    blk = g >> np.uint64(1)
    par = (g & np.uint64(1)).astype(bool)
    blk, traj, par = np.broadcast_arrays(blk, traj, par)
    seed = np.uint64(seed)
    k0 = seed & _MASK32
    k1 = (seed >> _S32) & _MASK32
    w0, w1, w2, w3 = philox4x32(
        blk & _MASK32, (blk >> _S32) & _MASK32,
        traj & _MASK32, (traj >> _S32) & _MASK32, k0, k1)
    u = np.where(par, (w3 << _S32) | w2, (w1 << _S32) | w0)
    return ((u >> _S11).astype(np.float64) + 0.5) * _INV53


def gaussians(seed, traj_ids, g_lo, g_hi):
    """Standard normals for value indices [g_lo, g_hi), shape (ntraj, ng)."""
    traj_ids = np.ascontiguousarray(traj_ids, dtype=np.uint64)
    if HAVE_COMPILED:
        return core().gaussians(np.uint64(seed), traj_ids, int(g_lo), int(g_hi))
    return ndtri(uniforms(seed, traj_ids, g_lo, g_hi))


@dataclass(frozen=True)
class NoisePlan:
    """Addressing plan for one family of coupled Brownian paths."""

    seed: int
    m: int
    tau_fine: float
    refinement: int
    n_steps_fine: int

    def __post_init__(self):
        if self.m < 1 or self.n_steps_fine < 1:
            raise ConfigError("m and n_steps_fine must be positive")
        if self.tau_fine <= 0.0:
            raise ConfigError("tau_fine must be positive")
        r = self.refinement
        if r < 1 or (r & (r - 1)) != 0:
            raise ConfigError("refinement must be a power of two")
        if self.n_steps_fine % r != 0:
            raise ConfigError("n_steps_fine must be divisible by refinement")


def fine_gaussians(plan, trajectory_ids, step_lo, step_hi):
    """Unit normals for fine steps [step_lo, step_hi), shape (ntraj, nsteps, m)."""
    n = step_hi - step_lo
    z = gaussians(plan.seed, np.atleast_1d(trajectory_ids),
                  step_lo * plan.m, step_hi * plan.m)
    return z.reshape(-1, n, plan.m)


def brownian_increments(plan, trajectory_id, level="fine"):
    """Brownian increments for one trajectory at the fine or coarse level.

    Fine: n_steps_fine i.i.d. N(0, tau_fine * I_m) vectors.  Coarse:
    exact left-to-right sums over blocks of `refinement` fine increments.
    """
    if level not in ("fine", "coarse"):
        raise ConfigError(f"unknown level {level!r}")
    z = fine_gaussians(plan, [trajectory_id], 0, plan.n_steps_fine)[0]
    dw = z * np.sqrt(plan.tau_fine)
    if level == "fine":
        return dw
    r = plan.refinement
    n_coarse = plan.n_steps_fine // r
    acc = np.zeros((n_coarse, plan.m))
    for k in range(r):
        acc += dw[k::r]
    return acc

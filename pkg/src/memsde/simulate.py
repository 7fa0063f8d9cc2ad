"""Ensemble simulation with coupled coarse/fine Brownian refinement and
first-variation paths for gradient estimation.

Trajectories are independent work items addressed by trajectory id; the
counter-based noise stream makes results identical for any worker count.
The compiled core runs the fused 1-D loops when the problem/scheme pair
supports it; everything else goes through the generic vectorized path.
"""

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import HAVE_COMPILED, core
from .errors import ConfigError, SingularDiffusion
from .noise import NoisePlan, fine_gaussians
from .schemes import DIVERGENCE_THRESHOLD

_SCHEME_CODE = {"em": 0, "tem": 1, "pem": 2}


@dataclass
class Ensemble:
    """Terminal states of M trajectories plus divergence records.

    diverged[i] is the first step index at which trajectory i left the
    finite range (-1 if it never did); its sample row is NaN.
    """

    samples: np.ndarray        # (M, d)
    diverged: np.ndarray       # (M,) int64, -1 = finite
    meta: dict = field(default_factory=dict)

    @property
    def n_diverged(self):
        return int(np.count_nonzero(self.diverged >= 0))

    def finite_samples(self):
        return self.samples[self.diverged < 0]


@dataclass
class FirstVariationState:
    """Solution X_t, directional derivative eta = DX_t v, and the running
    stochastic integral of <sigma(X)^-1 eta, dW>."""

    x: np.ndarray
    eta: np.ndarray
    accum: float


class GaussianInitial:
    """Initial-value sampler N(mean, sd^2 I); seeded per ensemble."""

    def __init__(self, mean, sd):
        self.mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        self.sd = float(sd)

    def sample(self, seed, n):
        rng = np.random.default_rng(seed)
        d = self.mean.size
        return self.mean + self.sd * rng.standard_normal((n, d))


def _initial_states(x0, d, M, seed):
    if hasattr(x0, "sample"):
        y0 = np.asarray(x0.sample(seed, M), dtype=np.float64)
        if y0.shape != (M, d):
            raise ConfigError(f"sampler produced shape {y0.shape}, "
                              f"expected {(M, d)}")
        return y0
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    if x0.shape != (d,):
        raise ConfigError(f"x0 has shape {x0.shape}, expected {(d,)}")
    return np.broadcast_to(x0, (M, d)).copy()


def _kernel_ok(problem, scheme):
    return (HAVE_COMPILED and problem.kernel_coeffs is not None
            and problem.d == 1 and scheme.kind in _SCHEME_CODE)


def _run_chain_kernel(problem, scheme, y0, tau_fine, refinements, n_fine,
                      seed, traj0, snap_step):
    a1, a3, s0, s2 = problem.kernel_coeffs
    refs = np.asarray(refinements, dtype=np.int64)
    M = y0.shape[0]
    term = np.empty((len(refs), M), dtype=np.float64)
    div = np.empty((len(refs), M), dtype=np.int64)
    snap = np.empty((len(refs), M), dtype=np.float64) if snap_step else None
    core().run_chain(np.uint64(seed), np.uint64(traj0),
                     np.ascontiguousarray(y0[:, 0]),
                     float(tau_fine), refs, int(n_fine),
                     _SCHEME_CODE[scheme.kind],
                     float(a1), float(a3), float(s0), float(s2),
                     float(problem.gamma),
                     int(snap_step or 0), term, div,
                     snap if snap is not None else np.empty((0, 0)))
    terms, divs = [], []
    for i in range(len(refs)):
        t = term[i].reshape(M, 1).copy()
        t[div[i] >= 0] = np.nan
        terms.append(t)
        divs.append(div[i].copy())
    snaps = ([snap[i].reshape(M, 1).copy() for i in range(len(refs))]
             if snap_step else None)
    return terms, divs, snaps


def _run_chain_generic(problem, scheme, y0, tau_fine, refinements, n_fine,
                       seed, traj0, snap_step):
    """Lockstep multi-level run over one pass of the fine noise.

    Level l advances with step refinements[l] * tau_fine, driven by the
    left-to-right sum of its block's fine increments.
    """
    M, d = y0.shape
    m = problem.m
    nlev = len(refinements)
    ys = [y0.copy() for _ in range(nlev)]
    divs = [np.full(M, -1, dtype=np.int64) for _ in range(nlev)]
    accs = [np.zeros((M, m)) for _ in range(nlev)]
    snaps = [None] * nlev if snap_step else None
    sq = np.sqrt(tau_fine)
    traj_ids = np.arange(traj0, traj0 + M, dtype=np.uint64)
    block = 1024
    for blk_lo in range(0, n_fine, block):
        blk_hi = min(blk_lo + block, n_fine)
        z = fine_gaussians(
            NoisePlan(seed, m, tau_fine, 1, n_fine), traj_ids, blk_lo, blk_hi)
        for n in range(blk_lo, blk_hi):
            w = z[:, n - blk_lo, :] * sq
            for l, r in enumerate(refinements):
                accs[l] += w
                if (n + 1) % r == 0:
                    _level_step(problem, scheme, ys[l], accs[l],
                                r * tau_fine, divs[l], (n + 1) // r)
                    accs[l][:] = 0.0
                if snap_step and n + 1 == snap_step:
                    snaps[l] = ys[l].copy()
    terms = []
    for l in range(nlev):
        y = ys[l]
        y[divs[l] >= 0] = np.nan
        terms.append(y)
    return terms, divs, snaps


def _level_step(problem, scheme, y, dW, tau, div, step_idx):
    """In-place MEM step for all still-finite rows of one level."""
    alive = div < 0
    if not alive.any():
        return
    ya = y[alive]
    with np.errstate(over="ignore", invalid="ignore"):
        z = scheme.modification(ya, tau)
        drift = scheme.modified_drift(z, tau)
        diff = scheme.modified_diffusion(z, tau)
        y_new = z + drift * tau + np.einsum("ijk,ik->ij", diff, dW[alive])
    bad = (~np.all(np.isfinite(y_new), axis=1)
           | (np.linalg.norm(y_new, axis=1) >= DIVERGENCE_THRESHOLD))
    y[alive] = y_new
    if bad.any():
        idx = np.flatnonzero(alive)[bad]
        div[idx] = step_idx


def run_levels(problem, scheme, x0, tau_fine, refinements, n_fine, plan,
               M, workers=1, snap_step=0):
    """Coupled ensembles at several step sizes over one Brownian family.

    refinements[l] * tau_fine is the step of level l; n_fine must be a
    multiple of every refinement.  Returns (ensembles, snapshots) where
    snapshots are level states after fine step snap_step (or None).
    """
    for r in refinements:
        if n_fine % r != 0:
            raise ConfigError("n_fine must be divisible by every refinement")
    if snap_step:
        for r in refinements:
            if snap_step % r != 0:
                raise ConfigError("snap_step must align with every level")
    y0 = _initial_states(x0, problem.d, M, plan.seed ^ 0x5EED0)
    use_kernel = _kernel_ok(problem, scheme)
    runner = _run_chain_kernel if use_kernel else _run_chain_generic

    chunks = _chunk_ranges(M, workers)

    def work(lo, hi):
        return runner(problem, scheme, y0[lo:hi], tau_fine, refinements,
                      n_fine, plan.seed, lo, snap_step)

    if len(chunks) == 1:
        results = [work(*chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(lambda c: work(*c), chunks))

    nlev = len(refinements)
    d = problem.d
    ens, snaps = [], []
    for l in range(nlev):
        samples = np.vstack([res[0][l] for res in results])
        div = np.concatenate([res[1][l] for res in results])
        meta = {"problem": problem.name, "scheme": scheme.kind,
                "tau": refinements[l] * tau_fine,
                "T": n_fine * tau_fine, "seed": plan.seed, "M": M}
        ens.append(Ensemble(samples=samples, diverged=div, meta=meta))
        if snap_step:
            snaps.append(np.vstack([res[2][l] for res in results]))
    return ens, (snaps if snap_step else None)


_CHUNK_ALIGN = 4096


def _chunk_ranges(M, workers):
    """Split [0, M) into per-worker ranges cut at multiples of
    _CHUNK_ALIGN.

    Alignment makes the lane tiling inside each chunk identical to the
    single-chunk tiling, so results are bitwise independent of the
    worker count (vectorized loop epilogues see the same lane groups).
    """
    workers = max(1, int(workers))
    n = min(workers, max(1, M))
    bounds = np.linspace(0, M, n + 1)
    cuts = [0]
    for b in bounds[1:-1]:
        c = int(round(b / _CHUNK_ALIGN)) * _CHUNK_ALIGN
        if c > cuts[-1] and c < M:
            cuts.append(c)
    cuts.append(M)
    return [(cuts[i], cuts[i + 1]) for i in range(len(cuts) - 1)]


def simulate_ensemble(problem, scheme, x0, tau, T, M, plan, workers=1):
    """M independent trajectories to horizon T with step tau."""
    tau_max = problem.constants.tau_max
    if not (0.0 < tau < tau_max):
        raise ConfigError(f"tau {tau} outside (0, tau_max={tau_max})")
    n = T / tau
    if abs(n - round(n)) > 1e-9:
        raise ConfigError(f"T/tau = {n} is not an integer")
    n = int(round(n))
    n_fine = n * plan.refinement
    tau_fine = tau / plan.refinement
    ens, _ = run_levels(problem, scheme, x0, tau_fine, [plan.refinement],
                        n_fine, plan, M, workers=workers)
    return ens[0]


def simulate_coupled(problem, s_coarse, s_fine, x0, tau_coarse, T, M, plan,
                     workers=1):
    """Coarse and fine ensembles driven by the same Brownian paths.

    tau_fine = tau_coarse / plan.refinement; coarse increments are the
    exact block sums of the fine ones.
    """
    n_c = T / tau_coarse
    if abs(n_c - round(n_c)) > 1e-9:
        raise ConfigError("T/tau_coarse is not an integer")
    n_fine = int(round(n_c)) * plan.refinement
    tau_fine = tau_coarse / plan.refinement
    if s_coarse.kind != s_fine.kind:
        # mixed schemes: two generic lockstep runs over the same noise
        e_c, _ = run_levels(problem, s_coarse, x0, tau_fine,
                            [plan.refinement], n_fine, plan, M, workers)
        e_f, _ = run_levels(problem, s_fine, x0, tau_fine, [1], n_fine,
                            plan, M, workers)
        return e_c[0], e_f[0]
    ens, _ = run_levels(problem, s_coarse, x0, tau_fine,
                        [plan.refinement, 1], n_fine, plan, M, workers)
    return ens[0], ens[1]


def simulate_first_variation_ensemble(problem, x0, v, tau, T, plan,
                                      traj0=0, M=1, cond_tol=1e12):
    """Jointly advance X (tamed Euler) and its first variation eta by
    explicit Euler, accumulating int <sigma(X)^-1 eta, dW> per path.

    Requires drift_jacobian and diffusion_jacobians, and square
    invertible diffusion (m = d).
    """
    from .schemes import tame_drift, tame_diffusion
    if problem.m != problem.d:
        raise SingularDiffusion("first variation requires m = d")
    if problem.drift_jacobian is None or problem.diffusion_jacobians is None:
        raise ConfigError("problem must supply drift and diffusion jacobians")
    n = T / tau
    if abs(n - round(n)) > 1e-9:
        raise ConfigError("T/tau is not an integer")
    n = int(round(n))
    d = problem.d
    x = _initial_states(x0, d, M, plan.seed ^ 0x5EED0)
    v = np.atleast_1d(np.asarray(v, dtype=np.float64))
    eta = np.broadcast_to(v, (M, d)).copy()
    accum = np.zeros(M)
    sq = np.sqrt(tau)
    traj_ids = np.arange(traj0, traj0 + M, dtype=np.uint64)
    nplan = NoisePlan(plan.seed, problem.m, tau, 1, n)
    block = 256
    for blk_lo in range(0, n, block):
        blk_hi = min(blk_lo + block, n)
        z = fine_gaussians(nplan, traj_ids, blk_lo, blk_hi)
        for k in range(blk_lo, blk_hi):
            dW = z[:, k - blk_lo, :] * sq
            sig = problem.diffusion(x)                       # (M, d, m)
            if d == 1:
                bad = np.abs(sig[:, 0, 0]) < 1.0 / cond_tol
            else:
                bad = np.linalg.cond(sig) > cond_tol
            if np.any(bad):
                raise SingularDiffusion(
                    "diffusion matrix ill-conditioned along the path")
            s_inv_eta = np.linalg.solve(sig, eta[..., None])[..., 0]
            accum += np.einsum("ij,ij->i", s_inv_eta, dW)
            jac_b = problem.drift_jacobian(x)                # (M, d, d)
            jac_s = problem.diffusion_jacobians(x)           # (M, m, d, d)
            eta_new = (eta + np.einsum("ijk,ik->ij", jac_b, eta) * tau
                       + np.einsum("imjk,ik,im->ij", jac_s, eta, dW))
            x_new = (x + tame_drift(problem, x, tau) * tau
                     + np.einsum("ijk,ik->ij", tame_diffusion(problem, x, tau),
                                 dW))
            x, eta = x_new, eta_new
    return x, eta, accum


def simulate_first_variation(problem, x0, v, tau, T, plan, trajectory_id=0):
    """Single-trajectory first-variation state (see the ensemble variant)."""
    x, eta, accum = simulate_first_variation_ensemble(
        problem, x0, v, tau, T, plan, traj0=trajectory_id, M=1)
    return FirstVariationState(x=x[0], eta=eta[0], accum=float(accum[0]))


# --- serialization ---------------------------------------------------------

def ensemble_to_csv(ens, path):
    d = ens.samples.shape[1]
    header = "id,diverged_step," + ",".join(f"x_{j+1}" for j in range(d))
    with open(path, "w", newline="") as f:
        f.write(header + "\n")
        for i in range(ens.samples.shape[0]):
            vals = ",".join(f"{v:.17g}" for v in ens.samples[i])
            f.write(f"{i},{int(ens.diverged[i])},{vals}\n")


def ensemble_from_csv(path):
    data = np.genfromtxt(path, delimiter=",", skip_header=1)
    data = np.atleast_2d(data)
    return Ensemble(samples=data[:, 2:].copy(),
                    diverged=data[:, 1].astype(np.int64))


_MAGIC = b"MEM1"


def ensemble_to_binary(ens, path):
    """Little-endian dump: magic "MEM1", uint64 M, uint64 d, then M*d
    float64 samples (NaN rows for diverged trajectories)."""
    M, d = ens.samples.shape
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<QQ", M, d))
        f.write(ens.samples.astype("<f8").tobytes())


def ensemble_from_binary(path):
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _MAGIC:
            raise ConfigError(f"bad magic {magic!r}, expected {_MAGIC!r}")
        M, d = struct.unpack("<QQ", f.read(16))
        samples = np.frombuffer(f.read(M * d * 8), dtype="<f8").reshape(M, d)
    samples = samples.copy()
    div = np.where(np.all(np.isfinite(samples), axis=1), -1, 0).astype(np.int64)
    return Ensemble(samples=samples, diverged=div)

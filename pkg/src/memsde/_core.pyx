# cython: language_level=3, boundscheck=False, wraparound=False
"""Thin wrapper over the C hot loops; all numeric work lives in
_kernels.c so this module only validates shapes and releases the GIL."""

import numpy as np

from libc.stdint cimport uint64_t, int64_t


cdef extern from "_kernels.h":
    void mem_uniforms(uint64_t seed, const uint64_t *traj, long nt,
                      long g_lo, long g_hi, double *out) nogil
    void mem_gaussians(uint64_t seed, const uint64_t *traj, long nt,
                       long g_lo, long g_hi, double *out) nogil
    int mem_run_chain(uint64_t seed, uint64_t traj0, const double *y0,
                      long M, double tau_fine, const int64_t *refs,
                      int nlev, long n_fine, int scheme,
                      double a1, double a3, double s0, double s2,
                      double gamma, long snap_step, double *term,
                      int64_t *div, double *snap) nogil


def uniforms(uint64_t seed, traj_ids, long g_lo, long g_hi):
    cdef uint64_t[::1] traj = np.ascontiguousarray(traj_ids, dtype=np.uint64)
    cdef long nt = traj.shape[0]
    cdef long ng = g_hi - g_lo
    if ng < 0:
        raise ValueError("g_hi must be >= g_lo")
    out_arr = np.empty((nt, ng), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if nt > 0 and ng > 0:
        with nogil:
            mem_uniforms(seed, &traj[0], nt, g_lo, g_hi, &out[0, 0])
    return out_arr


def gaussians(uint64_t seed, traj_ids, long g_lo, long g_hi):
    cdef uint64_t[::1] traj = np.ascontiguousarray(traj_ids, dtype=np.uint64)
    cdef long nt = traj.shape[0]
    cdef long ng = g_hi - g_lo
    if ng < 0:
        raise ValueError("g_hi must be >= g_lo")
    out_arr = np.empty((nt, ng), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    if nt > 0 and ng > 0:
        with nogil:
            mem_gaussians(seed, &traj[0], nt, g_lo, g_hi, &out[0, 0])
    return out_arr


def run_chain(uint64_t seed, uint64_t traj0, y0, double tau_fine,
              refinements, long n_fine, int scheme,
              double a1, double a3, double s0, double s2, double gamma,
              long snap_step, term, div, snap):
    cdef double[::1] y0v = np.ascontiguousarray(y0, dtype=np.float64)
    cdef int64_t[::1] refs = np.ascontiguousarray(refinements,
                                                  dtype=np.int64)
    cdef double[:, ::1] termv = term
    cdef int64_t[:, ::1] divv = div
    cdef long M = y0v.shape[0]
    cdef int nlev = <int>refs.shape[0]
    cdef double *snap_ptr = NULL
    cdef double[:, ::1] snapv
    if termv.shape[0] != nlev or termv.shape[1] != M:
        raise ValueError("term has wrong shape")
    if divv.shape[0] != nlev or divv.shape[1] != M:
        raise ValueError("div has wrong shape")
    if snap_step > 0:
        snapv = snap
        if snapv.shape[0] != nlev or snapv.shape[1] != M:
            raise ValueError("snap has wrong shape")
        snap_ptr = &snapv[0, 0]
    cdef int rc
    with nogil:
        rc = mem_run_chain(seed, traj0, &y0v[0], M, tau_fine, &refs[0],
                           nlev, n_fine, scheme, a1, a3, s0, s2, gamma,
                           snap_step, &termv[0, 0], &divv[0, 0], snap_ptr)
    if rc != 0:
        raise ValueError(f"run_chain failed with code {rc}")

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation kernels.

Same contract and random-stream consumption as ``_kernels_py``.
"""

import numpy as np

from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.stdint cimport int64_t, uint8_t
from libc.math cimport INFINITY
from numpy.random cimport bitgen_t

from ._rng import BLOCK, DOMAIN_F, DOMAIN_SIM, stream_key

cdef enum:
    KIND_PRIORITY = 0
    KIND_UNIFORM = 1
    KIND_WEIGHTED = 2
    KIND_CONSIDER = 3

cdef enum:
    MODE_BASE = 0
    MODE_DEADLINE = 1
    MODE_KNAPSACK = 2
    MODE_KNAPSACK_ANALYSIS = 3
    MODE_CARDINALITY = 4

cdef double WEIGHT_TOL = 1e-12


cdef inline double _u(bitgen_t *rng) noexcept nogil:
    return rng.next_double(rng.state)


cdef bitgen_t *_bitgen(object bg) except NULL:
    return <bitgen_t *> PyCapsule_GetPointer(bg.capsule, "BitGenerator")


cdef struct Outcome:
    double total
    int failed
    int64_t started
    int64_t busy_until


cdef Outcome _run_one(
    bitgen_t *rng,
    int kind,
    const double[:, :] param,
    const double[:] priority,
    const double[:, :] surv,
    const int64_t[:, :] support,
    const double[:, :] cdf,
    const double[:] values,
    const int64_t[:] deadlines,
    const double[:] weights,
    double capacity,
    int mode,
    int64_t card_k,
    int64_t t_stop,
    int64_t[:] free_counts,
    uint8_t[:] considered,
    uint8_t[:] run,
    double[:] dep,
    double[:] svc,
    int64_t[:] avail,
) noexcept nogil:
    cdef Py_ssize_t n = surv.shape[0]
    cdef Py_ssize_t width = cdf.shape[1]
    cdef Py_ssize_t j, k, col, navail, idx
    cdef int64_t t, s, choice, q
    cdef bint alive_any
    cdef double best, u, tot, target, acc, w, used = 0.0
    cdef Outcome out
    out.total = 0.0
    out.failed = 0
    out.started = 0
    out.busy_until = 0

    for j in range(n):
        dep[j] = _u(rng)
    for j in range(n):
        svc[j] = _u(rng)
    for j in range(n):
        run[j] = 0
        considered[j] = 0

    t = 1
    while t <= t_stop:
        if out.busy_until >= t:
            t += 1
            continue
        free_counts[t - 1] += 1
        col = t - 1
        alive_any = False
        navail = 0
        for j in range(n):
            if run[j] or not (dep[j] < surv[j, col]):
                continue
            alive_any = True
            if mode == MODE_KNAPSACK and used + weights[j] > capacity + WEIGHT_TOL:
                continue
            if mode == MODE_CARDINALITY and out.started >= card_k:
                continue
            avail[navail] = j
            navail += 1
        if not alive_any:
            for q in range(t, t_stop):
                free_counts[q] += 1
            break
        if navail == 0:
            t += 1
            continue

        choice = -1
        if kind == KIND_PRIORITY:
            best = -INFINITY
            for k in range(navail):
                j = avail[k]
                if priority[j] > best:
                    best = priority[j]
                    choice = j
        elif kind == KIND_UNIFORM:
            u = _u(rng)
            idx = <Py_ssize_t> (u * navail)
            if idx >= navail:
                idx = navail - 1
            choice = avail[idx]
        elif kind == KIND_WEIGHTED:
            u = _u(rng)
            tot = 0.0
            for k in range(navail):
                tot += param[avail[k], col]
            if tot > 0.0:
                target = u * tot
                acc = 0.0
                for k in range(navail):
                    j = avail[k]
                    w = param[j, col]
                    if w > 0.0:
                        acc += w
                        choice = j
                        if acc > target:
                            break
        else:
            best = -INFINITY
            for k in range(navail):
                j = avail[k]
                if considered[j]:
                    continue
                u = _u(rng)
                if u < param[j, col]:
                    considered[j] = 1
                    if values[j] > best:
                        best = values[j]
                        choice = j

        if choice < 0:
            t += 1
            continue

        k = 0
        while k < width - 1 and not (svc[choice] < cdf[choice, k]):
            k += 1
        s = support[choice, k]
        run[choice] = 1
        considered[choice] = 1
        out.started += 1
        if mode == MODE_DEADLINE:
            if t + s <= deadlines[choice]:
                out.total += values[choice]
        else:
            out.total += values[choice]
        if mode == MODE_KNAPSACK_ANALYSIS or mode == MODE_KNAPSACK:
            used += weights[choice]
            if used > capacity + WEIGHT_TOL:
                out.failed = 1
        out.busy_until = t + s - 1
        t += 1

    if out.failed and mode == MODE_KNAPSACK_ANALYSIS:
        out.total = 0.0
    return out


def simulate_batch(int kind, param, priority, surv, support, cdf, values, deadlines,
                   weights, double capacity, int mode, int64_t card_k,
                   seed, int64_t first_rep, int64_t reps):
    cdef Py_ssize_t n = surv.shape[0]
    cdef Py_ssize_t H = surv.shape[1]
    cdef const double[:, :] param_v = param
    cdef const double[:] prio_v = priority
    cdef const double[:, :] surv_v = surv
    cdef const int64_t[:, :] supp_v = support
    cdef const double[:, :] cdf_v = cdf
    cdef const double[:] val_v = values
    cdef const int64_t[:] dl_v = deadlines
    cdef const double[:] w_v = weights

    totals = np.zeros(reps)
    failed = np.zeros(reps, dtype=np.uint8)
    started = np.zeros(reps, dtype=np.int64)
    free_counts = np.zeros(H, dtype=np.int64)
    cdef double[:] tot_v = totals
    cdef uint8_t[:] fail_v = failed
    cdef int64_t[:] st_v = started
    cdef int64_t[:] free_v = free_counts
    cdef uint8_t[:] considered = np.zeros(n, dtype=np.uint8)
    cdef uint8_t[:] run = np.zeros(n, dtype=np.uint8)
    cdef double[:] dep = np.zeros(n)
    cdef double[:] svc = np.zeros(n)
    cdef int64_t[:] avail = np.zeros(n, dtype=np.int64)
    cdef int64_t r
    cdef bitgen_t *rng
    cdef Outcome out

    for r in range(reps):
        bg = np.random.Philox(key=stream_key(seed, DOMAIN_SIM, first_rep + r))
        rng = _bitgen(bg)
        with bg.lock:
            with nogil:
                out = _run_one(rng, kind, param_v, prio_v, surv_v, supp_v, cdf_v, val_v, dl_v,
                               w_v, capacity, mode, card_k, H, free_v, considered, run,
                               dep, svc, avail)
        tot_v[r] = out.total
        fail_v[r] = out.failed
        st_v[r] = out.started
    return totals, failed, started, free_counts


def attenuation_counts(probs, int64_t t, surv, support, cdf, values, int64_t sims, seed):
    cdef Py_ssize_t n = surv.shape[0]
    cdef Py_ssize_t H = surv.shape[1]
    cdef const double[:, :] probs_v = probs
    cdef const double[:, :] surv_v = surv
    cdef const int64_t[:, :] supp_v = support
    cdef const double[:, :] cdf_v = cdf
    cdef const double[:] val_v = values
    cdef double[:] zeros_w = np.zeros(n)
    cdef double[:] prio = np.zeros(n)
    cdef int64_t[:] zeros_d = np.zeros(n, dtype=np.int64)

    num = np.zeros(n, dtype=np.int64)
    den = np.zeros(n, dtype=np.int64)
    cdef int64_t[:] num_v = num
    cdef int64_t[:] den_v = den
    cdef int64_t[:] free_counts = np.zeros(H + 1, dtype=np.int64)
    cdef uint8_t[:] considered = np.zeros(n, dtype=np.uint8)
    cdef uint8_t[:] run = np.zeros(n, dtype=np.uint8)
    cdef double[:] dep = np.zeros(n)
    cdef double[:] svc = np.zeros(n)
    cdef int64_t[:] avail = np.zeros(n, dtype=np.int64)
    cdef int64_t m, block, stop
    cdef Py_ssize_t j
    cdef Py_ssize_t col = t - 1
    cdef bitgen_t *rng
    cdef Outcome out

    m = 0
    while m < sims:
        block = m // BLOCK
        stop = min(sims, m + BLOCK)
        bg = np.random.Philox(key=stream_key(seed, DOMAIN_F, (t << 32) | block))
        rng = _bitgen(bg)
        with bg.lock:
            with nogil:
                while m < stop:
                    out = _run_one(rng, KIND_CONSIDER, probs_v, prio, surv_v, supp_v, cdf_v, val_v,
                                   zeros_d, zeros_w, 0.0, MODE_BASE, 0, t - 1, free_counts,
                                   considered, run, dep, svc, avail)
                    for j in range(n):
                        if dep[j] < surv_v[j, col]:
                            den_v[j] += 1
                            if out.busy_until < t and not considered[j]:
                                num_v[j] += 1
                    m += 1
    return num, den

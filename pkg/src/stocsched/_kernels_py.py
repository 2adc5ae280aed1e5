"""Pure-Python simulation kernels.

Reference implementation of the compiled ``_kernels`` extension.  Both consume
their random streams in exactly the same order, so for equal inputs they
return bit-identical results:

1. ``n`` uniforms for departures (job ``j`` is alive at ``t`` iff ``u_j < p_j(t)``),
2. ``n`` uniforms for service times (inverse CDF on the padded tables),
3. per policy query: none (priority), one (uniform, weighted) or one per
   eligible job in ascending id order (consideration sets).
"""

import numpy as np

from ._rng import BLOCK, DOMAIN_F, DOMAIN_SIM, stream_key

KIND_PRIORITY = 0
KIND_UNIFORM = 1
KIND_WEIGHTED = 2
KIND_CONSIDER = 3

MODE_BASE = 0
MODE_DEADLINE = 1
MODE_KNAPSACK = 2
MODE_KNAPSACK_ANALYSIS = 3
MODE_CARDINALITY = 4

WEIGHT_TOL = 1e-12


def _service(support, cdf, j, u):
    row = cdf[j]
    k = 0
    last = len(row) - 1
    while k < last and not (u < row[k]):
        k += 1
    return int(support[j, k])


def run_one(gen, kind, param, priority, surv, support, cdf, values, deadlines,
            weights, capacity, mode, card_k, t_stop, free_counts, considered):
    """One replication up to time ``t_stop``; returns (total, failed, started, busy_until, dep_u).

    ``considered`` is reset and filled in place; ``free_counts`` (length >= t_stop)
    is incremented where the server is free.
    """
    n, H = surv.shape
    dep = gen.random(n)
    svc = gen.random(n)
    run = [False] * n
    for j in range(n):
        considered[j] = 0
    busy_until = 0
    total = 0.0
    used = 0.0
    started = 0
    failed = False
    t = 1
    while t <= t_stop:
        if busy_until >= t:
            t += 1
            continue
        free_counts[t - 1] += 1
        col = t - 1
        alive_any = False
        avail = []
        for j in range(n):
            if run[j] or not (dep[j] < surv[j, col]):
                continue
            alive_any = True
            if mode == MODE_KNAPSACK and used + weights[j] > capacity + WEIGHT_TOL:
                continue
            if mode == MODE_CARDINALITY and started >= card_k:
                continue
            avail.append(j)
        if not alive_any:
            for s in range(t, t_stop):
                free_counts[s] += 1
            break
        if not avail:
            t += 1
            continue
        choice = -1
        if kind == KIND_PRIORITY:
            best = -np.inf
            for j in avail:
                if priority[j] > best:
                    best = priority[j]
                    choice = j
        elif kind == KIND_UNIFORM:
            u = gen.random()
            idx = int(u * len(avail))
            if idx >= len(avail):
                idx = len(avail) - 1
            choice = avail[idx]
        elif kind == KIND_WEIGHTED:
            u = gen.random()
            tot = 0.0
            for j in avail:
                tot += param[j, col]
            if tot > 0.0:
                target = u * tot
                acc = 0.0
                for j in avail:
                    w = param[j, col]
                    if w > 0.0:
                        acc += w
                        choice = j
                        if acc > target:
                            break
        else:
            elig = [j for j in avail if not considered[j]]
            if elig:
                draws = gen.random(len(elig))
                best = -np.inf
                for j, u in zip(elig, draws):
                    if u < param[j, col]:
                        considered[j] = 1
                        if values[j] > best:
                            best = values[j]
                            choice = j
        if choice < 0:
            t += 1
            continue
        s = _service(support, cdf, choice, svc[choice])
        run[choice] = True
        considered[choice] = 1
        started += 1
        if mode == MODE_DEADLINE:
            if t + s <= deadlines[choice]:
                total += values[choice]
        else:
            total += values[choice]
        if mode == MODE_KNAPSACK_ANALYSIS or mode == MODE_KNAPSACK:
            used += weights[choice]
            if used > capacity + WEIGHT_TOL:
                failed = True
        busy_until = t + s - 1
        t += 1
    if failed and mode == MODE_KNAPSACK_ANALYSIS:
        total = 0.0
    return total, failed, started, busy_until, dep


def simulate_batch(kind, param, priority, surv, support, cdf, values, deadlines,
                   weights, capacity, mode, card_k, seed, first_rep, reps):
    n, H = surv.shape
    totals = np.zeros(reps)
    failed = np.zeros(reps, dtype=np.uint8)
    started = np.zeros(reps, dtype=np.int64)
    free_counts = np.zeros(H, dtype=np.int64)
    considered = np.zeros(n, dtype=np.uint8)
    for r in range(reps):
        gen = np.random.Generator(np.random.Philox(key=stream_key(seed, DOMAIN_SIM, first_rep + r)))
        tot, fail, st, _, _ = run_one(
            gen, kind, param, priority, surv, support, cdf, values, deadlines,
            weights, capacity, mode, card_k, H, free_counts, considered,
        )
        totals[r] = tot
        failed[r] = fail
        started[r] = st
    return totals, failed, started, free_counts


def attenuation_counts(probs, t, surv, support, cdf, values, sims, seed):
    """Counts for row ``t`` from ``sims`` runs of the consideration process truncated at ``t``.

    Returns ``(num, den)`` where ``den[j]`` counts runs with job ``j`` alive at
    ``t`` and ``num[j]`` those where, in addition, ``j`` was never considered
    and the server is free at ``t``.
    """
    n, H = surv.shape
    num = np.zeros(n, dtype=np.int64)
    den = np.zeros(n, dtype=np.int64)
    free_counts = np.zeros(H + 1, dtype=np.int64)
    considered = np.zeros(n, dtype=np.uint8)
    empty_w = np.zeros(n)
    empty_d = np.zeros(n, dtype=np.int64)
    prio = np.zeros(n)
    gen = None
    for m in range(sims):
        if m % BLOCK == 0:
            gen = np.random.Generator(
                np.random.Philox(key=stream_key(seed, DOMAIN_F, (t << 32) | (m // BLOCK)))
            )
        _, _, _, busy_until, dep = run_one(
            gen, KIND_CONSIDER, probs, prio, surv, support, cdf, values, empty_d,
            empty_w, 0.0, MODE_BASE, 0, t - 1, free_counts, considered,
        )
        free = busy_until < t
        col = t - 1
        for j in range(n):
            if dep[j] < surv[j, col]:
                den[j] += 1
                if free and not considered[j]:
                    num[j] += 1
    return num, den

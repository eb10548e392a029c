"""Compiled inner loops: CART growth, log-rank growth, lasso descent.

Randomness inside a kernel comes from numba's generator, seeded at the top
of each call; numba keeps that state per thread, so a kernel's draws depend
only on the seed it is handed.
"""

import numpy as np
from numba import njit

# node arrays returned by the tree builders:
#   feature (-1 for leaf), threshold, is_cat split flag, left, right,
#   start/end into the returned row order, depth, sse (within-node SS)


@njit(cache=True, nogil=True)
def _sample_features(weights, mtry):
    p = weights.shape[0]
    keys = np.empty(p)
    n_pos = 0
    for j in range(p):
        w = weights[j]
        if w > 0.0:
            # Efraimidis-Spirakis keys: top-k of u^(1/w) is a weighted draw without replacement
            keys[j] = np.log(np.random.random() + 1e-300) / w
            n_pos += 1
        else:
            keys[j] = -np.inf
    order = np.argsort(-keys, kind="mergesort")
    m = min(mtry, n_pos)
    return order[:m]


@njit(cache=True, nogil=True)
def build_tree(X, is_cat, n_levels, Y, rows, weights, mtry, min_leaf, max_depth, seed):
    """Greedy CART on target columns ``Y`` (one column: variance; one-hot: Gini).

    ``rows`` may repeat (bootstrap). ``max_depth < 0`` means unlimited.
    """
    np.random.seed(seed)
    n = rows.shape[0]
    k = Y.shape[1]
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    catsplit = np.zeros(max_nodes, np.bool_)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    start = np.zeros(max_nodes, np.int64)
    end = np.zeros(max_nodes, np.int64)
    depth = np.zeros(max_nodes, np.int64)
    sse = np.zeros(max_nodes)
    idx = rows.copy()
    tmp = np.empty(n, np.int64)
    start[0] = 0
    end[0] = n
    n_nodes = 1
    stack = np.empty(max_nodes, np.int64)
    stack[0] = 0
    sp = 1
    tot = np.empty(k)
    cum = np.empty(k)
    lev_sum = np.empty((1, k))
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = start[node]
        e = end[node]
        m = e - s
        sumsq = 0.0
        for c in range(k):
            tot[c] = 0.0
        for i in range(s, e):
            r = idx[i]
            for c in range(k):
                v = Y[r, c]
                tot[c] += v
                sumsq += v * v
        base = 0.0
        for c in range(k):
            base += tot[c] * tot[c] / m
        node_sse = sumsq - base
        if node_sse < 0.0:
            node_sse = 0.0
        sse[node] = node_sse
        if m < 2 * min_leaf or (max_depth >= 0 and depth[node] >= max_depth):
            continue
        if node_sse <= 1e-12 * (sumsq + 1e-300):
            continue
        cand = _sample_features(weights, mtry)
        best = base + 1e-10 * node_sse
        best_f = -1
        best_thr = 0.0
        best_cat = False
        for ci in range(cand.shape[0]):
            f = cand[ci]
            vals = np.empty(m)
            for i in range(m):
                vals[i] = X[idx[s + i], f]
            if is_cat[f]:
                L = n_levels[f]
                if lev_sum.shape[0] < L:
                    lev_sum = np.empty((L, k))
                cnt = np.zeros(L, np.int64)
                for lv in range(L):
                    for c in range(k):
                        lev_sum[lv, c] = 0.0
                for i in range(m):
                    lv = int(vals[i])
                    cnt[lv] += 1
                    r = idx[s + i]
                    for c in range(k):
                        lev_sum[lv, c] += Y[r, c]
                for lv in range(L):
                    nl = cnt[lv]
                    nr = m - nl
                    if nl < min_leaf or nr < min_leaf:
                        continue
                    score = 0.0
                    for c in range(k):
                        a = lev_sum[lv, c]
                        b = tot[c] - a
                        score += a * a / nl + b * b / nr
                    if score > best:
                        best = score
                        best_f = f
                        best_thr = float(lv)
                        best_cat = True
            else:
                order = np.argsort(vals, kind="mergesort")
                for c in range(k):
                    cum[c] = 0.0
                for i in range(m - 1):
                    r = idx[s + order[i]]
                    for c in range(k):
                        cum[c] += Y[r, c]
                    nl = i + 1
                    nr = m - nl
                    if nr < min_leaf:
                        break
                    if nl < min_leaf:
                        continue
                    a0 = vals[order[i]]
                    a1 = vals[order[i + 1]]
                    if a0 == a1:
                        continue
                    score = 0.0
                    for c in range(k):
                        a = cum[c]
                        b = tot[c] - a
                        score += a * a / nl + b * b / nr
                    if score > best:
                        best = score
                        best_f = f
                        thr = 0.5 * (a0 + a1)
                        if thr >= a1 or thr < a0:
                            thr = a0
                        best_thr = thr
                        best_cat = False
        if best_f < 0:
            continue
        # stable partition of idx[s:e]
        nl = 0
        nr = 0
        for i in range(s, e):
            r = idx[i]
            v = X[r, best_f]
            go_left = (v == best_thr) if best_cat else (v <= best_thr)
            if go_left:
                idx[s + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for i in range(nr):
            idx[s + nl + i] = tmp[i]
        feature[node] = best_f
        threshold[node] = best_thr
        catsplit[node] = best_cat
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        start[lc] = s
        end[lc] = s + nl
        start[rc] = s + nl
        end[rc] = e
        depth[lc] = depth[node] + 1
        depth[rc] = depth[node] + 1
        stack[sp] = rc
        stack[sp + 1] = lc
        sp += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), catsplit[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(), start[:n_nodes].copy(),
            end[:n_nodes].copy(), depth[:n_nodes].copy(), sse[:n_nodes].copy(), idx)


@njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, catsplit, left, right):
    """Leaf node id reached by each row of ``X``."""
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            v = X[i, feature[node]]
            if catsplit[node]:
                go_left = v == threshold[node]
            else:
                go_left = v <= threshold[node]
            node = left[node] if go_left else right[node]
        out[i] = node
    return out


@njit(cache=True, nogil=True)
def _soft(z, lam):
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


@njit(cache=True, nogil=True)
def _active_block(G, A):
    k = A.shape[0]
    GA = np.empty((k, k))
    for i in range(k):
        for j in range(k):
            GA[i, j] = G[A[i], A[j]]
    return GA


@njit(cache=True, nogil=True)
def _chol_solve(M, r):
    """Solve ``M x = r`` for symmetric ``M``; empty result when ``M`` is not
    comfortably positive definite."""
    k = r.shape[0]
    L = np.zeros((k, k))
    scale = 0.0
    for i in range(k):
        scale = max(scale, M[i, i])
    for j in range(k):
        d = M[j, j]
        for m in range(j):
            d -= L[j, m] * L[j, m]
        if d <= 1e-9 * scale:
            return np.zeros(0)
        L[j, j] = np.sqrt(d)
        for i in range(j + 1, k):
            v = M[i, j]
            for m in range(j):
                v -= L[i, m] * L[j, m]
            L[i, j] = v / L[j, j]
    z = np.empty(k)
    for i in range(k):
        v = r[i]
        for m in range(i):
            v -= L[i, m] * z[m]
        z[i] = v / L[i, i]
    x = np.empty(k)
    for i in range(k - 1, -1, -1):
        v = z[i]
        for m in range(i + 1, k):
            v -= L[m, i] * x[m]
        x[i] = v / L[i, i]
    return x


@njit(cache=True, nogil=True)
def _polish(G, c, beta, lam):
    """Feature-sign search started from a coordinate-descent iterate.

    Solves the stationarity equations on the current signed active set,
    steps back to the first zero crossing when signs disagree, walks along
    null directions of a singular active block (only the penalty changes
    there) and adds every KKT violator until none is left. Returns
    (ok, candidate); callers keep their iterate when ``ok`` is False.
    """
    p = c.shape[0]
    b = beta.copy()
    sgn = np.sign(b)
    for _ in range(4 * p + 8):
        A = np.flatnonzero(sgn != 0.0)
        k = A.shape[0]
        if k > 0:
            s = sgn[A]
            bA = b[A]
            GA = _active_block(G, A)
            r = c[A] - lam * s
            sol = _chol_solve(GA, r)
            if sol.shape[0] == k:
                null = np.zeros(0, np.bool_)
            else:
                w, V = np.linalg.eigh(GA)
                cut = 1e-9 * max(w[-1], 1e-300)
                null = w <= cut
            if null.any():
                Nb = V[:, null]
                ds = Nb @ (Nb.T @ s)
                if np.max(np.abs(ds)) > 1e-12:
                    # moving along -ds lowers the penalty without touching the smooth part
                    t = np.inf
                    hit = -1
                    for i in range(k):
                        if ds[i] * bA[i] > 0.0 and bA[i] / ds[i] < t:
                            t = bA[i] / ds[i]
                            hit = i
                    if hit < 0:
                        return False, beta
                    bA = bA - t * ds
                    bA[hit] = 0.0
                    b[A] = bA
                    sgn[A[hit]] = 0.0
                    continue
            if sol.shape[0] != k:
                sol = np.zeros(k)
                for m in range(k):
                    if w[m] > cut:
                        sol += V[:, m] * (V[:, m] @ r) / w[m]
                    else:
                        sol += V[:, m] * (V[:, m] @ bA)
            # step toward the solve; stop where the first coefficient changes sign
            t = 1.0
            hit = -1
            for i in range(k):
                if sol[i] * s[i] <= 0.0:
                    ti = bA[i] / (bA[i] - sol[i]) if bA[i] != sol[i] else 0.0
                    if ti < t:
                        t = ti
                        hit = i
            bA = bA + t * (sol - bA)
            if hit >= 0:
                bA[hit] = 0.0
                sgn[A[hit]] = 0.0
            b[A] = bA
            if hit >= 0:
                continue
        grad = c - G @ b
        added = 0
        for j in range(p):
            if sgn[j] == 0.0 and abs(grad[j]) > lam * (1.0 + 1e-10):
                sgn[j] = 1.0 if grad[j] > 0.0 else -1.0
                added += 1
        if added == 0:
            return True, b
    return False, beta


@njit(cache=True, nogil=True)
def lasso_cd_gram(G, c, lambdas, beta0, tol, max_sweeps):
    """Coordinate descent for ``0.5 b'Gb - c'b + lam |b|_1`` along a path.

    ``G`` is X'X/n and ``c`` is X'y/n for centred data; warm starts run down
    ``lambdas``. Returns the (n_lambda, p) coefficient path and sweep counts.
    """
    p = c.shape[0]
    nl = lambdas.shape[0]
    path = np.zeros((nl, p))
    sweeps = np.zeros(nl, np.int64)
    beta = beta0.copy()
    q = G @ beta  # q = G beta
    active = np.zeros(p, np.bool_)
    for li in range(nl):
        lam = lambdas[li]
        it = 0
        next_polish = 16
        while it < max_sweeps:
            # full sweep
            it += 1
            dmax = 0.0
            for j in range(p):
                gjj = G[j, j]
                if gjj <= 0.0:
                    continue
                old = beta[j]
                rho = c[j] - q[j] + gjj * old
                new = _soft(rho, lam) / gjj
                if new != old:
                    d = new - old
                    beta[j] = new
                    for t in range(p):
                        q[t] += G[t, j] * d
                    if abs(d) > dmax:
                        dmax = abs(d)
                active[j] = new != 0.0
            if dmax < tol:
                break
            if it >= next_polish:
                # slow progress usually means a near-flat valley; try an exact finish
                next_polish *= 2
                ok, cand = _polish(G, c, beta, lam)
                if ok:
                    beta[:] = cand
                    q = G @ beta
                    for j in range(p):
                        active[j] = beta[j] != 0.0
                    continue
            # iterate on the active set until it settles, then re-check everything
            while it < max_sweeps:
                it += 1
                dmax = 0.0
                for j in range(p):
                    if not active[j]:
                        continue
                    gjj = G[j, j]
                    old = beta[j]
                    rho = c[j] - q[j] + gjj * old
                    new = _soft(rho, lam) / gjj
                    if new != old:
                        d = new - old
                        beta[j] = new
                        for t in range(p):
                            q[t] += G[t, j] * d
                        if abs(d) > dmax:
                            dmax = abs(d)
                if dmax < tol or it >= next_polish:
                    break
        path[li] = beta
        sweeps[li] = it
    return path, sweeps


@njit(cache=True, nogil=True)
def lasso_cd_naive(Xs, yc, lambdas, beta0, tol, max_sweeps):
    """Residual-update coordinate descent; cheaper than the Gram form when p > n.

    ``Xs`` is standardised (columns mean 0, mean square 1 or 0), ``yc`` centred.
    """
    n, p = Xs.shape
    nl = lambdas.shape[0]
    path = np.zeros((nl, p))
    sweeps = np.zeros(nl, np.int64)
    beta = beta0.copy()
    resid = yc - Xs @ beta
    gdiag = np.zeros(p)
    for j in range(p):
        s = 0.0
        for i in range(n):
            s += Xs[i, j] * Xs[i, j]
        gdiag[j] = s / n
    active = np.zeros(p, np.bool_)
    for li in range(nl):
        lam = lambdas[li]
        it = 0
        full = True
        while it < max_sweeps:
            it += 1
            dmax = 0.0
            for j in range(p):
                if gdiag[j] <= 0.0 or (not full and not active[j]):
                    continue
                old = beta[j]
                s = 0.0
                for i in range(n):
                    s += Xs[i, j] * resid[i]
                rho = s / n + gdiag[j] * old
                new = _soft(rho, lam) / gdiag[j]
                if new != old:
                    d = new - old
                    beta[j] = new
                    for i in range(n):
                        resid[i] -= Xs[i, j] * d
                    if abs(d) > dmax:
                        dmax = abs(d)
                if full:
                    active[j] = new != 0.0
            if dmax < tol:
                if full:
                    break
                full = True
            else:
                full = False
        path[li] = beta
        sweeps[li] = it
    return path, sweeps


@njit(cache=True, nogil=True)
def _logrank_score(YL, dL, Yt, dt, T):
    num = 0.0
    var = 0.0
    for j in range(T):
        y = Yt[j]
        if y < 2.0 or dt[j] == 0.0:
            continue
        frac = YL[j] / y
        num += dL[j] - frac * dt[j]
        var += frac * (1.0 - frac) * (y - dt[j]) / (y - 1.0) * dt[j]
    if var <= 1e-12:
        return -1.0
    return abs(num) / np.sqrt(var)


@njit(cache=True, nogil=True)
def build_logrank_tree(X, time_rank, event, n_times, rows, mtry, nodesize, min_leaf, seed):
    """Survival tree maximising the two-sample log-rank statistic.

    ``time_rank[i]`` is the number of grid event times ``<= time[i]``, so the
    row is at risk at grid times ``0..time_rank[i]-1`` and, if it is an event,
    dies at grid time ``time_rank[i]-1``.
    """
    np.random.seed(seed)
    n = rows.shape[0]
    p = X.shape[1]
    weights = np.ones(p)
    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    start = np.zeros(max_nodes, np.int64)
    end = np.zeros(max_nodes, np.int64)
    idx = rows.copy()
    tmp = np.empty(n, np.int64)
    end[0] = n
    n_nodes = 1
    stack = np.empty(max_nodes, np.int64)
    stack[0] = 0
    sp = 1
    Yt = np.zeros(n_times)
    dt = np.zeros(n_times)
    YL = np.zeros(n_times)
    dL = np.zeros(n_times)
    while sp > 0:
        sp -= 1
        node = stack[sp]
        s = start[node]
        e = end[node]
        m = e - s
        if m < nodesize or m < 2 * min_leaf:
            continue
        n_ev = 0
        T = 0
        for j in range(n_times):
            Yt[j] = 0.0
            dt[j] = 0.0
        for i in range(s, e):
            r = idx[i]
            tr = time_rank[r]
            if tr > T:
                T = tr
            for j in range(tr):
                Yt[j] += 1.0
            if event[r] == 1 and tr > 0:
                dt[tr - 1] += 1.0
                n_ev += 1
        if n_ev == 0:
            continue
        cand = _sample_features(weights, mtry)
        best = 1e-12
        best_f = -1
        best_thr = 0.0
        for ci in range(cand.shape[0]):
            f = cand[ci]
            vals = np.empty(m)
            for i in range(m):
                vals[i] = X[idx[s + i], f]
            order = np.argsort(vals, kind="mergesort")
            for j in range(T):
                YL[j] = 0.0
                dL[j] = 0.0
            for i in range(m - 1):
                r = idx[s + order[i]]
                tr = time_rank[r]
                for j in range(tr):
                    YL[j] += 1.0
                if event[r] == 1 and tr > 0:
                    dL[tr - 1] += 1.0
                nl = i + 1
                if m - nl < min_leaf:
                    break
                if nl < min_leaf:
                    continue
                a0 = vals[order[i]]
                a1 = vals[order[i + 1]]
                if a0 == a1:
                    continue
                score = _logrank_score(YL, dL, Yt, dt, T)
                if score > best:
                    best = score
                    best_f = f
                    thr = 0.5 * (a0 + a1)
                    if thr >= a1 or thr < a0:
                        thr = a0
                    best_thr = thr
        if best_f < 0:
            continue
        nl = 0
        nr = 0
        for i in range(s, e):
            r = idx[i]
            if X[r, best_f] <= best_thr:
                idx[s + nl] = r
                nl += 1
            else:
                tmp[nr] = r
                nr += 1
        for i in range(nr):
            idx[s + nl + i] = tmp[i]
        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        start[lc] = s
        end[lc] = s + nl
        start[rc] = s + nl
        end[rc] = e
        stack[sp] = rc
        stack[sp + 1] = lc
        sp += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), start[:n_nodes].copy(), end[:n_nodes].copy(), idx)


@njit(cache=True, nogil=True)
def nelson_aalen_leaves(feature, start, end, idx, time_rank, event, n_times):
    """Cumulative hazard on the grid for every leaf; rows of non-leaves stay 0."""
    n_nodes = feature.shape[0]
    chf = np.zeros((n_nodes, n_times))
    Y = np.zeros(n_times)
    d = np.zeros(n_times)
    for node in range(n_nodes):
        if feature[node] >= 0:
            continue
        for j in range(n_times):
            Y[j] = 0.0
            d[j] = 0.0
        for i in range(start[node], end[node]):
            r = idx[i]
            tr = time_rank[r]
            for j in range(tr):
                Y[j] += 1.0
            if event[r] == 1 and tr > 0:
                d[tr - 1] += 1.0
        h = 0.0
        for j in range(n_times):
            if Y[j] > 0.0:
                h += d[j] / Y[j]
            chf[node, j] = h
    return chf

"""Pure-Python shortest-path kernels over DAGs.

Reference implementation of the routines in ``_kernels.pyx``. Both modules
expose the same functions with the same signatures and must return
identical results; :mod:`decoyplace.kernels` picks one at import time.

Graphs are passed as in-edge CSR arrays (``in_ptr``, ``in_src``, ``in_w``)
over vertices ``0..n-1`` plus a topological order. Vertex indices double as
the lexicographic rank of the vertex ids.
"""

import math

import numpy as np

INT64_MAX = 2**63 - 1


def _path_to(pred_row, s, v):
    seq = [v]
    while v != s:
        v = pred_row[v]
        seq.append(v)
    seq.reverse()
    return seq


def all_pairs_dag(n, topo, in_ptr, in_src, in_w, rtol):
    """Single-source shortest paths from every vertex of a DAG.

    Returns ``(dist, sigma, pred, bc)``: ``dist[s, t]`` is the minimum path
    weight (``inf`` when unreachable, 0 on the diagonal), ``sigma[s, t]`` the
    number of minimum-weight paths, ``pred[s, t]`` the predecessor of ``t`` on
    the lexicographically smallest minimum-weight path (-1 if none), and
    ``bc`` the betweenness of each vertex with both endpoints excluded.
    """
    topo = [int(v) for v in topo]
    in_ptr = [int(v) for v in in_ptr]
    in_src = [int(v) for v in in_src]
    in_w = [float(v) for v in in_w]
    inf = math.inf
    pos = [0] * n
    for k, v in enumerate(topo):
        pos[v] = k

    dist_out = np.full((n, n), inf)
    sigma_out = np.zeros((n, n), dtype=np.int64)
    pred_out = np.full((n, n), -1, dtype=np.int32)
    bc = [0.0] * n

    for s in range(n):
        dist = [inf] * n
        sigma = [0] * n
        pred = [-1] * n
        dist[s] = 0.0
        sigma[s] = 1
        reached = [s]
        start = pos[s]
        for k in range(start + 1, n):
            v = topo[k]
            lo, hi = in_ptr[v], in_ptr[v + 1]
            best = inf
            for e in range(lo, hi):
                du = dist[in_src[e]]
                if du != inf:
                    c = du + in_w[e]
                    if c < best:
                        best = c
            if best == inf:
                continue
            limit = best + rtol * abs(best)
            count = 0
            chosen = -1
            for e in range(lo, hi):
                u = in_src[e]
                du = dist[u]
                if du == inf or du + in_w[e] > limit:
                    continue
                count += sigma[u]
                if count > INT64_MAX:
                    raise OverflowError("shortest-path count exceeds 64 bits")
                if chosen < 0:
                    chosen = u
                elif u != chosen:
                    a = _path_to(pred, s, u)
                    b = _path_to(pred, s, chosen)
                    a.append(v)
                    b.append(v)
                    if a < b:
                        chosen = u
            dist[v] = best
            sigma[v] = count
            pred[v] = chosen
            reached.append(v)

        # dependency accumulation in reverse topological order
        delta = [0.0] * n
        for v in reversed(reached):
            if v == s:
                continue
            limit = dist[v] + rtol * abs(dist[v])
            coeff = (1.0 + delta[v]) / sigma[v]
            for e in range(in_ptr[v], in_ptr[v + 1]):
                u = in_src[e]
                du = dist[u]
                if du == inf or du + in_w[e] > limit:
                    continue
                delta[u] += sigma[u] * coeff
            bc[v] += delta[v]

        dist_out[s] = dist
        sigma_out[s] = sigma
        pred_out[s] = pred

    return dist_out, sigma_out, pred_out, np.asarray(bc)


def extract_paths(pred, dist):
    """Flatten canonical paths into pair arrays plus an interior-vertex CSR.

    Pairs are ordered by source index then target index. Returns
    ``(src, tgt, int_ptr, int_nodes)``.
    """
    n = pred.shape[0]
    pred_l = pred.tolist()
    finite = np.isfinite(dist)
    src = []
    tgt = []
    ptr = [0]
    nodes = []
    for s in range(n):
        row = pred_l[s]
        reach = finite[s]
        for t in range(n):
            if t == s or not reach[t]:
                continue
            src.append(s)
            tgt.append(t)
            interior = []
            v = row[t]
            while v != s:
                interior.append(v)
                v = row[v]
            interior.reverse()
            nodes.extend(interior)
            ptr.append(len(nodes))
    return (
        np.asarray(src, dtype=np.int32),
        np.asarray(tgt, dtype=np.int32),
        np.asarray(ptr, dtype=np.int64),
        np.asarray(nodes, dtype=np.int32),
    )


def count_augmented(n, topo, in_ptr, in_src, in_w, is_decoy, sources, is_target, rtol):
    """Count minimum-weight paths from each source to the flagged targets.

    For every entry of ``sources`` returns the number of minimum-weight paths
    summed over reachable targets (``t != s``), the number of those paths that
    avoid every decoy vertex, and the total number of decoy vertices on them.
    """
    topo = [int(v) for v in topo]
    in_ptr = [int(v) for v in in_ptr]
    in_src = [int(v) for v in in_src]
    in_w = [float(v) for v in in_w]
    is_decoy = [bool(v) for v in is_decoy]
    is_target = [bool(v) for v in is_target]
    inf = math.inf
    pos = [0] * n
    for k, v in enumerate(topo):
        pos[v] = k

    m = len(sources)
    tot_paths = np.zeros(m, dtype=np.int64)
    tot_clean = np.zeros(m, dtype=np.int64)
    tot_decoys = np.zeros(m, dtype=np.int64)

    for j, s in enumerate(int(v) for v in sources):
        dist = [inf] * n
        cnt = [0] * n
        clean = [0] * n
        dsum = [0] * n
        dist[s] = 0.0
        cnt[s] = 1
        clean[s] = 0 if is_decoy[s] else 1
        dsum[s] = 1 if is_decoy[s] else 0
        acc_p = acc_c = acc_d = 0
        for k in range(pos[s] + 1, n):
            v = topo[k]
            lo, hi = in_ptr[v], in_ptr[v + 1]
            best = inf
            for e in range(lo, hi):
                du = dist[in_src[e]]
                if du != inf:
                    c = du + in_w[e]
                    if c < best:
                        best = c
            if best == inf:
                continue
            limit = best + rtol * abs(best)
            c_all = c_clean = c_dec = 0
            for e in range(lo, hi):
                u = in_src[e]
                du = dist[u]
                if du == inf or du + in_w[e] > limit:
                    continue
                c_all += cnt[u]
                c_clean += clean[u]
                c_dec += dsum[u]
            if is_decoy[v]:
                c_dec += c_all
                c_clean = 0
            if c_all > INT64_MAX or c_dec > INT64_MAX:
                raise OverflowError("shortest-path count exceeds 64 bits")
            dist[v] = best
            cnt[v] = c_all
            clean[v] = c_clean
            dsum[v] = c_dec
            if is_target[v]:
                acc_p += c_all
                acc_c += c_clean
                acc_d += c_dec
                if acc_p > INT64_MAX or acc_d > INT64_MAX:
                    raise OverflowError("shortest-path count exceeds 64 bits")
        tot_paths[j] = acc_p
        tot_clean[j] = acc_c
        tot_decoys[j] = acc_d
    return tot_paths, tot_clean, tot_decoys

"""Flush-move kernels over encoded arrays.

Every function here is nopython-compatible; with numba available (and
DOWNCODE_LAB_NO_JIT unset) they are compiled, otherwise the same source runs
as plain Python over numpy arrays. `henc` is the packed hierarchy tuple from
EncodedSpace.pack(); cells are (global node id | -1, exact value) pairs.

Cell invariant: a node cell never has a singleton value set (writes go
through _write_cell which demotes singleton children to exact cells).
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

JIT_ENABLED = HAVE_NUMBA and os.environ.get("DOWNCODE_LAB_NO_JIT", "") not in ("1", "true", "yes")


def maybe_njit(fn):
    if JIT_ENABLED:
        return numba.njit(cache=True)(fn)
    return fn


# henc layout (see EncodedSpace.pack):
# 0 ivl_ptr, 1 ivl_lo, 2 ivl_hi, 3 child_ptr, 4 child_idx,
# 5 tin, 6 tout, 7 is_sng, 8 sng_val


@maybe_njit
def _node_has(henc, g, v):
    ivl_ptr, ivl_lo, ivl_hi = henc[0], henc[1], henc[2]
    for i in range(ivl_ptr[g], ivl_ptr[g + 1]):
        if ivl_lo[i] <= v < ivl_hi[i]:
            return True
    return False


@maybe_njit
def _cell_has(henc, nd, val, v):
    if nd < 0:
        return val == v
    return _node_has(henc, nd, v)


@maybe_njit
def _cell_subset(henc, a_nd, a_v, b_nd, b_v):
    # a ⊆ b; node cells are never singletons, so node ⊆ exact is false
    if a_nd < 0 and b_nd < 0:
        return a_v == b_v
    if a_nd < 0:
        return _node_has(henc, b_nd, a_v)
    if b_nd < 0:
        return False
    tin, tout = henc[5], henc[6]
    return tin[b_nd] <= tin[a_nd] and tout[a_nd] <= tout[b_nd]


@maybe_njit
def _cell_eq(a_nd, a_v, b_nd, b_v):
    if a_nd != b_nd:
        return False
    if a_nd < 0:
        return a_v == b_v
    return True


@maybe_njit
def _rec_eq(cnode, cval, i, j):
    for d in range(cnode.shape[1]):
        if not _cell_eq(cnode[i, d], cval[i, d], cnode[j, d], cval[j, d]):
            return False
    return True


@maybe_njit
def _rec_strict_subset(henc, cnode, cval, i, j):
    # record i ⊊ record j
    strict = False
    for d in range(cnode.shape[1]):
        if not _cell_subset(henc, cnode[i, d], cval[i, d], cnode[j, d], cval[j, d]):
            return False
        if not _cell_eq(cnode[i, d], cval[i, d], cnode[j, d], cval[j, d]):
            strict = True
    return strict


@maybe_njit
def _rec_contains_x(henc, cnode, cval, i, xv, n):
    for d in range(cnode.shape[1]):
        if not _cell_has(henc, cnode[i, d], cval[i, d], xv[n, d]):
            return False
    return True


@maybe_njit
def _write_cell(henc, cnode, cval, r, d, g):
    if henc[7][g]:
        cnode[r, d] = -1
        cval[r, d] = henc[8][g]
    else:
        cnode[r, d] = g
        cval[r, d] = 0.0


@maybe_njit
def _reassign(cnode, cval, class_id, class_size, rows, n_used, next_id):
    """Rows (already rewritten to one shared record) leave their classes and
    join the matching existing class or a fresh one. Returns True on merge."""
    for t in range(n_used):
        r = rows[t]
        class_size[class_id[r]] -= 1
        class_id[r] = -1
    r0 = rows[0]
    target = -1
    for m in range(cnode.shape[0]):
        if class_id[m] >= 0 and _rec_eq(cnode, cval, r0, m):
            target = class_id[m]
            break
    merged = target >= 0
    if target < 0:
        target = int(next_id[0])
        next_id[0] += 1
        if next_id[0] >= class_size.shape[0]:
            raise RuntimeError("class id capacity exceeded")
    for t in range(n_used):
        class_id[rows[t]] = target
    class_size[target] += n_used
    return merged


@maybe_njit
def _class_rows(class_id, cid, out):
    n = 0
    for i in range(class_id.shape[0]):
        if class_id[i] == cid:
            out[n] = i
            n += 1
    return n


@maybe_njit
def _single_attempt(henc, xv, cnode, cval, class_id, class_size, k, n):
    """Adopt the first strictly finer existing record containing x_n."""
    if class_size[class_id[n]] <= k:
        return False
    for m in range(cnode.shape[0]):
        if class_id[m] == class_id[n]:
            continue
        if _rec_strict_subset(henc, cnode, cval, m, n) and _rec_contains_x(henc, cnode, cval, m, xv, n):
            for d in range(cnode.shape[1]):
                cnode[n, d] = cnode[m, d]
                cval[n, d] = cval[m, d]
            class_size[class_id[n]] -= 1
            class_id[n] = class_id[m]
            class_size[class_id[n]] += 1
            return True
    return False


@maybe_njit
def _safe_split_r(m, cnt, k):
    """Rows to move for a child holding cnt of the class's m rows; -1 if the
    split cannot keep both sides at size >= k (movers or remainder)."""
    rem = m - cnt
    if rem == 0 or rem >= k:
        r = cnt
    else:
        r = m - k
        if r > cnt:
            return -1
    if r < k:
        return -1
    return r


@maybe_njit
def _group_attempt(henc, xv, cnode, cval, class_id, class_size, k, n, next_id, batch):
    """Apply the first safe split for row n's class; with batch, keep
    applying whole-class descents on the same dimension (a contiguous run of
    moves in scan order). Returns the number of moves applied."""
    child_ptr, child_idx = henc[3], henc[4]
    cid = class_id[n]
    m = class_size[cid]
    if m < 2 * k:
        return 0
    rows = np.empty(m, dtype=np.int64)
    _class_rows(class_id, cid, rows)
    members = np.empty(m, dtype=np.int64)
    moves = 0
    d = 0
    while d < cnode.shape[1]:
        g = cnode[rows[0], d]
        if g < 0:
            d += 1
            continue
        applied_here = False
        for ci in range(child_ptr[g], child_ptr[g + 1]):
            c = child_idx[ci]
            cnt = 0
            for t in range(m):
                if _node_has(henc, c, xv[rows[t], d]):
                    members[cnt] = rows[t]
                    cnt += 1
            if cnt == 0:
                continue
            r = _safe_split_r(m, cnt, k)
            if r < 0:
                continue
            for t in range(r):
                _write_cell(henc, cnode, cval, members[t], d, c)
            merged = _reassign(cnode, cval, class_id, class_size, members, r, next_id)
            moves += 1
            if r < m or merged or not batch:
                return moves
            cid = class_id[rows[0]]
            applied_here = True
            break
        if not applied_here:
            d += 1
    return moves


@maybe_njit
def _simul_attempt(henc, xv, cnode, cval, class_id, class_size, k, rep, next_id):
    """One drain attempt on rep's class: pad with k wildcard phantom rows,
    run an adoption pass over the real class rows, one group move, then keep
    the result only if the class emptied and the result stays k-anonymous.

    Nothing is written unless the attempt is accepted. Returns moves applied.
    """
    n_rows, dims = cnode.shape
    cid = class_id[rep]
    m = class_size[cid]
    rows = np.empty(m, dtype=np.int64)
    _class_rows(class_id, cid, rows)
    r0 = rows[0]

    any_node = False
    for d in range(dims):
        if cnode[r0, d] >= 0:
            any_node = True
            break

    # -1 = still at the class record, -2 = group mover, >=0 = adoption source row
    assigned = np.full(m, -1, dtype=np.int64)
    at_g = m

    # adoption pass (phantoms keep EA above k, so the EA==k guard never skips)
    for t in range(m):
        n = rows[t]
        for q in range(n_rows):
            src = q
            if class_id[q] == cid:
                u = -1
                for s in range(m):
                    if rows[s] == q:
                        u = s
                        break
                if assigned[u] < 0:
                    continue  # still at the class record: not strictly finer
                src = assigned[u]
            if _rec_strict_subset(henc, cnode, cval, src, n) and _rec_contains_x(henc, cnode, cval, src, xv, n):
                assigned[t] = src
                at_g -= 1
                break

    # one group move on the augmented class
    chosen_d = -1
    chosen_c = -1
    n_movers = 0
    if any_node and at_g + k >= 2 * k:
        child_ptr, child_idx = henc[3], henc[4]
        m_aug = at_g + k
        for d in range(dims):
            g = cnode[r0, d]
            if g < 0:
                continue
            for ci in range(child_ptr[g], child_ptr[g + 1]):
                c = child_idx[ci]
                cnt_real = 0
                for t in range(m):
                    if assigned[t] == -1 and _node_has(henc, c, xv[rows[t], d]):
                        cnt_real += 1
                if cnt_real == 0:
                    continue  # phantoms only pad real moves, they never lead one
                cnt = cnt_real + k  # phantoms are wildcards: members of every child
                r = _safe_split_r(m_aug, cnt, k)
                if r < 0:
                    continue
                # movers: first r of the member list, real rows before phantoms
                take = cnt_real if cnt_real < r else r
                for t in range(m):
                    if take == 0:
                        break
                    if assigned[t] == -1 and _node_has(henc, c, xv[rows[t], d]):
                        assigned[t] = -2
                        at_g -= 1
                        n_movers += 1
                        take -= 1
                chosen_d = d
                chosen_c = c
                break
            if chosen_d >= 0:
                break

    if at_g > 0:
        return 0  # class did not empty: leave the dataset unchanged

    # mover class must be k-anonymous once phantoms are dropped
    if n_movers > 0:
        tnode = np.empty(dims, dtype=np.int32)
        tval = np.empty(dims, dtype=np.float64)
        for d in range(dims):
            tnode[d] = cnode[r0, d]
            tval[d] = cval[r0, d]
        if henc[7][chosen_c]:
            tnode[chosen_d] = -1
            tval[chosen_d] = henc[8][chosen_c]
        else:
            tnode[chosen_d] = chosen_c
            tval[chosen_d] = 0.0
        exists = False
        for q in range(n_rows):
            if class_id[q] == cid:
                continue
            ok = True
            for d in range(dims):
                if not _cell_eq(tnode[d], tval[d], cnode[q, d], cval[q, d]):
                    ok = False
                    break
            if ok:
                exists = True
                break
        if not exists and n_movers < k:
            return 0

    # commit: adoptions first, then the group movers
    moves = 0
    for t in range(m):
        if assigned[t] >= 0:
            n = rows[t]
            src = assigned[t]
            for d in range(dims):
                cnode[n, d] = cnode[src, d]
                cval[n, d] = cval[src, d]
            class_size[class_id[n]] -= 1
            class_id[n] = class_id[src]
            class_size[class_id[n]] += 1
            moves += 1
    if n_movers > 0:
        movers = np.empty(n_movers, dtype=np.int64)
        u = 0
        for t in range(m):
            if assigned[t] == -2:
                movers[u] = rows[t]
                u += 1
                _write_cell(henc, cnode, cval, rows[t], chosen_d, chosen_c)
        _reassign(cnode, cval, class_id, class_size, movers, n_movers, next_id)
        moves += 1
    return moves


@maybe_njit
def _lca_blocks(henc, xv, block_of_row, root_g, cnode, cval):
    """Per-block, per-dimension finest hierarchy cover: exact when the block's
    column values coincide, else the deepest node containing them all."""
    child_ptr, child_idx = henc[3], henc[4]
    n_rows, dims = xv.shape
    n_blocks = 0
    for n in range(n_rows):
        if block_of_row[n] + 1 > n_blocks:
            n_blocks = block_of_row[n] + 1
    for b in range(n_blocks):
        for d in range(dims):
            lo = np.inf
            hi = -np.inf
            for n in range(n_rows):
                if block_of_row[n] == b:
                    v = xv[n, d]
                    if v < lo:
                        lo = v
                    if v > hi:
                        hi = v
            if lo == hi:
                for n in range(n_rows):
                    if block_of_row[n] == b:
                        cnode[n, d] = -1
                        cval[n, d] = lo
                continue
            g = root_g[d]
            while True:
                nxt = -1
                for ci in range(child_ptr[g], child_ptr[g + 1]):
                    c = child_idx[ci]
                    if _node_has(henc, c, lo):
                        nxt = c
                        break
                if nxt < 0 or not _node_has(henc, nxt, hi):
                    break
                g = nxt
            for n in range(n_rows):
                if block_of_row[n] == b:
                    _write_cell(henc, cnode, cval, n, d, g)
    return n_blocks


@maybe_njit
def _collect_reps(class_id, reps):
    n_reps = 0
    for n in range(class_id.shape[0]):
        cid = class_id[n]
        seen = False
        for j in range(n_reps):
            if class_id[reps[j]] == cid:
                seen = True
                break
        if not seen:
            reps[n_reps] = n
            n_reps += 1
    return n_reps


@maybe_njit
def _minimize(henc, xv, cnode, cval, class_id, class_size, k, next_id, budget):
    """Alternate the three flush passes, each to its own fixpoint, until one
    full cycle applies no move. Returns the total number of moves."""
    n_rows = cnode.shape[0]
    total = 0
    reps = np.empty(max(n_rows, 1), dtype=np.int64)
    while True:
        cycle = 0
        while True:
            moved = 0
            for n in range(n_rows):
                if _single_attempt(henc, xv, cnode, cval, class_id, class_size, k, n):
                    moved += 1
            cycle += moved
            if moved == 0:
                break
        while True:
            moved = 0
            for n in range(n_rows):
                moved += _group_attempt(henc, xv, cnode, cval, class_id, class_size, k, n, next_id, True)
            cycle += moved
            if moved == 0:
                break
        while True:
            moved = 0
            n_reps = _collect_reps(class_id, reps)
            for j in range(n_reps):
                moved += _simul_attempt(henc, xv, cnode, cval, class_id, class_size, k, reps[j], next_id)
            cycle += moved
            if moved == 0:
                break
        total += cycle
        if total > budget:
            raise RuntimeError("flush move budget exceeded: minimization is not descending")
        if cycle == 0:
            return total

"""Numba kernels for labelled Galton-Watson trees.

Trees are never stored for Monte Carlo statistics; ``scan_batch`` walks each
tree depth first and accumulates what is needed.  Node randomness is keyed by
the node's path (see ``_rng``), so the same key always yields the same tree
whatever the pruning rule.
"""
import numba
import numpy as np

from ._rng import child_key, node_increment, node_offspring

NO_LIMIT = np.int64(2**62)
NEG_LIMIT = np.int64(-(2**62))

# columns of the scan_batch output
N_NODES = 0
N_B = 1
N_K = 2
HEIGHT = 3
HEIGHT_B = 4
PSI_STAR_B = 5
PSI_STAR = 6
COUNT_LE = 7
COUNT_EQ = 8
CAPPED = 9
STOPPED = 10
TRUNCATED = 11
N_STATS = 12

_IN_B = np.int8(1)
_KILLED = np.int8(2)


@numba.njit(cache=True, nogil=True)
def _grow_u64(a, n):
    b = np.empty(2 * a.shape[0], dtype=a.dtype)
    b[:n] = a[:n]
    return b


@numba.njit(cache=True, nogil=True)
def _grow_i64(a, n):
    b = np.empty(2 * a.shape[0], dtype=a.dtype)
    b[:n] = a[:n]
    return b


@numba.njit(cache=True, nogil=True)
def _grow_i8(a, n):
    b = np.empty(2 * a.shape[0], dtype=a.dtype)
    b[:n] = a[:n]
    return b


@numba.njit(cache=True, nogil=True)
def scan_batch(keys, root_label, cum, values, b_ceiling, t_ceiling, max_depth,
               node_cap, stop_label, stop_depth, y_le, p_eq, out, zcounts):
    """Depth-first scan of one tree per key.

    Expansion: a node of B(T) that is not killed is expanded while its label
    is <= b_ceiling; any other node while its label is <= t_ceiling (use
    NEG_LIMIT for barrier mode).  Nodes at depth >= max_depth are never
    expanded.  ``zcounts[i, g]`` counts visited nodes of generation g.
    """
    cap0 = 256
    s_key = np.empty(cap0, dtype=np.uint64)
    s_lab = np.empty(cap0, dtype=np.int64)
    s_dep = np.empty(cap0, dtype=np.int64)
    s_flag = np.empty(cap0, dtype=np.int8)
    zlen = zcounts.shape[1]
    for i in range(keys.shape[0]):
        for c in range(N_STATS):
            out[i, c] = 0
        out[i, PSI_STAR_B] = NEG_LIMIT
        out[i, PSI_STAR] = NEG_LIMIT
        for g in range(zlen):
            zcounts[i, g] = 0
        sp = 0
        s_key[0] = keys[i]
        s_lab[0] = root_label
        s_dep[0] = 1
        s_flag[0] = _IN_B
        sp = 1
        pushed = 1
        while sp > 0:
            sp -= 1
            key = s_key[sp]
            lab = s_lab[sp]
            dep = s_dep[sp]
            flag = s_flag[sp]
            in_b = (flag & _IN_B) != 0
            killed = (flag & _KILLED) != 0
            out[i, N_NODES] += 1
            if dep > out[i, HEIGHT]:
                out[i, HEIGHT] = dep
            if lab > out[i, PSI_STAR]:
                out[i, PSI_STAR] = lab
            if lab == p_eq:
                out[i, COUNT_EQ] += 1
            if dep - 1 < zlen:
                zcounts[i, dep - 1] += 1
            if in_b:
                out[i, N_B] += 1
                if killed:
                    out[i, N_K] += 1
                if dep > out[i, HEIGHT_B]:
                    out[i, HEIGHT_B] = dep
                if lab > out[i, PSI_STAR_B]:
                    out[i, PSI_STAR_B] = lab
                if lab <= y_le:
                    out[i, COUNT_LE] += 1
                if lab >= stop_label:
                    out[i, STOPPED] = 1
                    break
            if dep >= stop_depth:
                out[i, STOPPED] = 1
                break
            if in_b and not killed:
                ceiling = b_ceiling
            else:
                ceiling = t_ceiling
            k = node_offspring(key)
            if k == 0:
                continue
            if dep >= max_depth or lab > ceiling:
                out[i, TRUNCATED] = 1
                continue
            if pushed + k > node_cap:
                out[i, CAPPED] = 1
                break
            child_in_b = in_b and not killed
            while sp + k > s_key.shape[0]:
                s_key = _grow_u64(s_key, sp)
                s_lab = _grow_i64(s_lab, sp)
                s_dep = _grow_i64(s_dep, sp)
                s_flag = _grow_i8(s_flag, sp)
            # reverse push so the first child is popped first (preorder)
            for r in range(k - 1, -1, -1):
                ck = child_key(key, r)
                cl = lab + node_increment(ck, cum, values)
                f = np.int8(0)
                if child_in_b:
                    f = _IN_B
                    if cl < root_label:
                        f = np.int8(_IN_B | _KILLED)
                s_key[sp] = ck
                s_lab[sp] = cl
                s_dep[sp] = dep + 1
                s_flag[sp] = f
                sp += 1
            pushed += k
    return out


@numba.njit(cache=True, nogil=True)
def grow_tree(key, root_label, cum, values, barrier, clamp, node_cap, max_depth):
    """Materialize a tree in preorder.

    Returns (parent, label, depth, capped).  With ``barrier`` the children of
    killed nodes are never generated.  With ``clamp`` labels follow
    ``max(parent + J, 0)`` recursively instead of plain sums.
    """
    cap0 = 64
    parent = np.empty(cap0, dtype=np.int64)
    label = np.empty(cap0, dtype=np.int64)
    depth = np.empty(cap0, dtype=np.int64)
    flag = np.empty(cap0, dtype=np.int8)
    s_key = np.empty(cap0, dtype=np.uint64)
    s_lab = np.empty(cap0, dtype=np.int64)
    s_dep = np.empty(cap0, dtype=np.int64)
    s_par = np.empty(cap0, dtype=np.int64)
    s_flag = np.empty(cap0, dtype=np.int8)
    s_key[0] = key
    s_lab[0] = root_label
    s_dep[0] = 1
    s_par[0] = -1
    s_flag[0] = _IN_B
    sp = 1
    n = 0
    pushed = 1
    capped = False
    while sp > 0:
        sp -= 1
        if n == parent.shape[0]:
            parent = _grow_i64(parent, n)
            label = _grow_i64(label, n)
            depth = _grow_i64(depth, n)
            flag = _grow_i8(flag, n)
        v = n
        n += 1
        k_node = s_key[sp]
        lab = s_lab[sp]
        dep = s_dep[sp]
        f = s_flag[sp]
        parent[v] = s_par[sp]
        label[v] = lab
        depth[v] = dep
        flag[v] = f
        in_b = (f & _IN_B) != 0
        killed = (f & _KILLED) != 0
        if barrier and killed:
            continue
        if dep >= max_depth:
            continue
        k = node_offspring(k_node)
        if k == 0:
            continue
        if pushed + k > node_cap:
            capped = True
            break
        while sp + k > s_key.shape[0]:
            s_key = _grow_u64(s_key, sp)
            s_lab = _grow_i64(s_lab, sp)
            s_dep = _grow_i64(s_dep, sp)
            s_par = _grow_i64(s_par, sp)
            s_flag = _grow_i8(s_flag, sp)
        child_in_b = in_b and not killed
        for r in range(k - 1, -1, -1):
            ck = child_key(k_node, r)
            cl = lab + node_increment(ck, cum, values)
            if clamp and cl < 0:
                cl = 0
            cf = np.int8(0)
            if child_in_b:
                cf = _IN_B
                if cl < root_label:
                    cf = np.int8(_IN_B | _KILLED)
            s_key[sp] = ck
            s_lab[sp] = cl
            s_dep[sp] = dep + 1
            s_par[sp] = v
            s_flag[sp] = cf
            sp += 1
        pushed += k
    return parent[:n].copy(), label[:n].copy(), depth[:n].copy(), capped


_OFFSET = np.int64(1 << 30)
_LOW = np.int64((1 << 32) - 1)


@numba.njit(cache=True, nogil=True)
def _heap_push(heap, n, item):
    heap[n] = item
    i = n
    while i > 0:
        p = (i - 1) >> 1
        if heap[p] >= heap[i]:
            break
        tmp = heap[p]
        heap[p] = heap[i]
        heap[i] = tmp
        i = p
    return n + 1


@numba.njit(cache=True, nogil=True)
def _heap_pop(heap, n):
    n -= 1
    heap[0] = heap[n]
    i = 0
    while True:
        l = 2 * i + 1
        if l >= n:
            break
        c = l
        if l + 1 < n and heap[l + 1] > heap[l]:
            c = l + 1
        if heap[i] >= heap[c]:
            break
        tmp = heap[c]
        heap[c] = heap[i]
        heap[i] = tmp
        i = c
    return n


@numba.njit(cache=True, nogil=True)
def explore_kernel(child_ptr, child_idx, label, roots, stop_below, max_steps):
    """Iterate the recoloring map from the initial coloring (roots green).

    The active node is the green node with the largest label, ties broken
    towards the largest node index (preorder index = lexicographic rank).
    Stops when the active node's label is < stop_below, when no green node
    is left, or after max_steps.  Returns (nodes, kinds, steps, colors)
    with kinds 1 = turned green, 2 = turned red.
    """
    n = label.shape[0]
    colors = np.zeros(n, dtype=np.int8)
    next_child = np.zeros(n, dtype=np.int64)
    heap = np.empty(n, dtype=np.int64)
    hn = 0
    for r in roots:
        colors[r] = 1
        hn = _heap_push(heap, hn, ((label[r] + _OFFSET) << 32) | r)
    cap0 = 64
    ev_node = np.empty(cap0, dtype=np.int64)
    ev_kind = np.empty(cap0, dtype=np.int8)
    steps = 0
    while hn > 0 and steps < max_steps:
        top = heap[0]
        g = top & _LOW
        if label[g] < stop_below:
            break
        if steps == ev_node.shape[0]:
            ev_node = _grow_i64(ev_node, steps)
            ev_kind = _grow_i8(ev_kind, steps)
        j = next_child[g]
        if child_ptr[g] + j < child_ptr[g + 1]:
            c = child_idx[child_ptr[g] + j]
            next_child[g] = j + 1
            colors[c] = 1
            hn = _heap_push(heap, hn, ((label[c] + _OFFSET) << 32) | c)
            ev_node[steps] = c
            ev_kind[steps] = 1
        else:
            colors[g] = 2
            hn = _heap_pop(heap, hn)
            ev_node[steps] = g
            ev_kind[steps] = 2
        steps += 1
    return ev_node[:steps].copy(), ev_kind[:steps].copy(), steps, colors


@numba.njit(cache=True, nogil=True)
def killed_mask(parent, label, root_label):
    """Preorder pass: killed iff label < root and every strict ancestor >= root."""
    n = parent.shape[0]
    ok = np.zeros(n, dtype=np.bool_)  # all ancestors and self >= root
    killed = np.zeros(n, dtype=np.bool_)
    if n == 0:
        return killed
    ok[0] = label[0] >= root_label
    for v in range(1, n):
        p = parent[v]
        if ok[p]:
            if label[v] < root_label:
                killed[v] = True
            else:
                ok[v] = True
    return killed


@numba.njit(cache=True, nogil=True)
def tau_identity_batch(keys, root_label, cum, values, node_cap, out):
    """Per key: sample B(T), explore it, and record (steps, |B|, |K|, capped)."""
    for i in range(keys.shape[0]):
        parent, label, depth, capped = grow_tree(keys[i], root_label, cum, values, True, False,
                                                 node_cap, NO_LIMIT)
        n = parent.shape[0]
        out[i, 3] = 1 if capped else 0
        if capped:
            out[i, 0] = -1
            out[i, 1] = n
            out[i, 2] = 0
            continue
        child_ptr = np.zeros(n + 1, dtype=np.int64)
        for v in range(1, n):
            child_ptr[parent[v] + 1] += 1
        for v in range(n):
            child_ptr[v + 1] += child_ptr[v]
        fill = child_ptr[:n].copy()
        child_idx = np.empty(max(n - 1, 0), dtype=np.int64)
        for v in range(1, n):
            p = parent[v]
            child_idx[fill[p]] = v
            fill[p] += 1
        roots = np.zeros(1, dtype=np.int64)
        nodes, kinds, steps, colors = explore_kernel(child_ptr, child_idx, label, roots,
                                                     np.int64(root_label), NO_LIMIT)
        killed = killed_mask(parent, label, root_label)
        out[i, 0] = steps
        out[i, 1] = n
        out[i, 2] = killed.sum()

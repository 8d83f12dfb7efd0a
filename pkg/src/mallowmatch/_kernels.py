"""Compiled inner loops.

Everything here works on 0-based int arrays; the public modules wrap these
with validation and 1-based conventions.
"""
import numba as nb
import numpy as np

_CACHE = True


@nb.njit(cache=_CACHE)
def _fenwick_build(tree):
    # in-place O(t) build of a Fenwick tree over an array of ones
    t = tree.shape[0] - 1
    for i in range(1, t + 1):
        tree[i] = 1
    for i in range(1, t + 1):
        j = i + (i & -i)
        if j <= t:
            tree[j] += tree[i]


@nb.njit(cache=_CACHE)
def _fenwick_take(tree, k, top):
    """Remove and return the 0-based index of the (k+1)-th remaining element."""
    t = tree.shape[0] - 1
    pos = 0
    step = top
    while step > 0:
        nxt = pos + step
        if nxt <= t and tree[nxt] <= k:
            pos = nxt
            k -= tree[nxt]
        step >>= 1
    # pos is the 0-based index; Fenwick slot is pos + 1
    i = pos + 1
    while i <= t:
        tree[i] -= 1
        i += i & -i
    return pos


@nb.njit(cache=_CACHE)
def insertion_codes(u, phi):
    """Truncated-geometric codes V_p on {0, ..., t-p-1}, P(V=v) ~ phi**v.

    ``u`` holds uniforms in [0, 1), one per position.
    """
    t = u.shape[0]
    out = np.zeros(t, dtype=np.int64)
    if phi == 0.0:
        return out
    if phi == 1.0:
        for p in range(t):
            m = t - p
            v = np.int64(u[p] * m)
            out[p] = v if v < m else m - 1
        return out
    log_phi = np.log(phi)
    for p in range(t):
        m = t - p
        # 1 - phi**m without cancellation
        mass = -np.expm1(m * log_phi)
        v = np.int64(np.floor(np.log1p(-u[p] * mass) / log_phi))
        if v < 0:
            v = 0
        elif v >= m:
            v = m - 1
        out[p] = v
    return out


@nb.njit(cache=_CACHE)
def ranks_from_codes(codes, out_ranks):
    """Decode a Lehmer-style code into a 0-based rank vector.

    Position p receives the (codes[p]+1)-th smallest element not yet placed,
    so inv = sum(codes).
    """
    t = codes.shape[0]
    if t == 0:
        return
    tree = np.zeros(t + 1, dtype=np.int64)
    _fenwick_build(tree)
    top = 1
    while top * 2 <= t:
        top *= 2
    for p in range(t):
        elem = _fenwick_take(tree, codes[p], top)
        out_ranks[elem] = p


@nb.njit(cache=_CACHE)
def sample_rank_rows(uniforms, phi, out_ranks):
    """Fill each row of ``out_ranks`` with a Mallows(phi) rank vector."""
    rows = uniforms.shape[0]
    for r in range(rows):
        codes = insertion_codes(uniforms[r], phi)
        ranks_from_codes(codes, out_ranks[r])


@nb.njit(cache=_CACHE)
def invert_rows(perms, out):
    rows, t = perms.shape
    for r in range(rows):
        for i in range(t):
            out[r, perms[r, i]] = i


@nb.njit(cache=_CACHE)
def count_inversions(ranks):
    """Inversions of a 0-based rank vector, O(t log t)."""
    t = ranks.shape[0]
    tree = np.zeros(t + 1, dtype=np.int64)
    total = 0
    seen = 0
    for i in range(t):
        # earlier elements with a larger rank
        x = ranks[i] + 1
        le = 0
        j = x
        while j > 0:
            le += tree[j]
            j -= j & -j
        total += seen - le
        j = x
        while j <= t:
            tree[j] += 1
            j += j & -j
        seen += 1
    return total


@nb.njit(cache=_CACHE)
def deferred_acceptance(prop_orders, recv_ranks):
    """Proposer-optimal stable matching for complete lists.

    prop_orders[p, j] is the receiver in proposer p's j-th place;
    recv_ranks[r, p] is receiver r's 0-based rank of proposer p.
    Returns (proposer -> receiver or -1, receiver -> proposer or -1,
    number of proposals). Free proposers are served LIFO after an initial
    ascending sweep, which fixes the trace but not the outcome.
    """
    n_prop, length = prop_orders.shape
    n_recv = recv_ranks.shape[0]
    held = np.full(n_recv, -1, dtype=np.int64)
    partner = np.full(n_prop, -1, dtype=np.int64)
    nxt = np.zeros(n_prop, dtype=np.int64)
    stack = np.empty(n_prop, dtype=np.int64)
    top = 0
    for p in range(n_prop - 1, -1, -1):
        stack[top] = p
        top += 1
    proposals = 0
    while top > 0:
        top -= 1
        p = stack[top]
        while nxt[p] < length:
            r = prop_orders[p, nxt[p]]
            nxt[p] += 1
            proposals += 1
            cur = held[r]
            if cur == -1:
                held[r] = p
                partner[p] = r
                break
            if recv_ranks[r, p] < recv_ranks[r, cur]:
                held[r] = p
                partner[p] = r
                partner[cur] = -1
                stack[top] = cur
                top += 1
                break
    return partner, held, proposals

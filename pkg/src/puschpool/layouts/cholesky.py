"""Cholesky-Crout with rows folded into single banks and mirrored pairs of matrices.

For ``n >= 8`` a pair of independent matrices shares ``n/4`` cores. Core ``c`` of a
pair owns rows ``c, c + n/4, c + n/2, c + 3n/4`` of the first matrix and the mirrored
rows ``n-1-c, ...`` of the second; row ``q`` of that list lives entirely in the core's
``q``-th local bank, next to the matching row of the input. Pairing a heavy bottom row
with a light top row gives every core the same number of output elements.

Phase 0 computes ``L[0][0]``. Phase ``j+1`` computes column ``j`` below the diagonal
and then ``L[j+1][j+1]`` on the core that owns row ``j+1``. A barrier closes every
phase. ``n = 4`` runs one matrix per core with no synchronisation.
"""

from ..errors import CapacityExceeded, SizeMismatch, TooFewCores
from .plan import BankFiller, LayoutPlan, Task, barrier


def tri(i, j):
    return i * (i + 1) // 2 + j


def cholesky_capacity(n, topology):
    """Concurrent decompositions that fit: one per core for n=4, else pairs."""
    if n == 4:
        return topology.num_cores
    return 2 * (topology.num_cores // (n // 4))


def _check(n):
    if n < 4 or n % 4:
        raise SizeMismatch(f"matrix size must be a positive multiple of 4, got {n}")


def owned_rows(n, local):
    """Rows of (matrix 0, matrix 1) owned by core ``local`` of a pair, by bank."""
    per = n // 4
    first = [local + q * per for q in range(4)]
    return first, [n - 1 - i for i in first]


def cholesky_layout(n, topology, cores=None, batch=1, pairs=None):
    """Plan ``pairs`` mirrored pairs (``batch`` pairs per core set between barriers).

    For ``n = 4`` every core factors ``batch`` matrices on its own.
    """
    _check(n)
    t = topology
    cores = tuple(range(t.num_cores)) if cores is None else tuple(cores)
    wpb = t.words_per_bank
    words, work, syncs = {}, {}, []
    if n == 4:
        for slot, c in enumerate(cores):
            fill = BankFiller(t, t.local_banks(c))
            tasks = []
            for b in range(batch):
                inst = slot * batch + b
                g_ids = [("G", inst, 0, i, j) for i in range(4) for j in range(i + 1)]
                l_ids = [("L", inst, 0, i, j) for i in range(4) for j in range(i + 1)]
                for key in g_ids + l_ids:
                    words[key] = fill.take()
                tasks.append(Task("chol4", tuple(g_ids), tuple(l_ids), (), (4,)))
            work[c] = [tasks]
        if len(cores) > 1:
            syncs.append(barrier(t, 0, cores))
        meta = {"kernel": "cholesky", "n": 4, "instances": len(cores) * batch,
                "batch": batch, "pairs": 0}
        return LayoutPlan(f"chol4x{len(cores) * batch}", t, words, work, syncs, meta)

    per = n // 4
    fit = len(cores) // per
    pairs = fit if pairs is None else pairs
    if pairs < 1 or pairs > fit:
        raise TooFewCores(f"{pairs} pairs of {n}x{n} need {pairs * per} cores, have {len(cores)}")
    for pair in range(pairs):
        group = cores[pair * per:(pair + 1) * per]
        phases = {c: [[] for _ in range(n)] for c in group}
        owner = {}
        for local, c in enumerate(group):
            rows = owned_rows(n, local)
            offsets = [0] * 4
            for b in range(batch):
                inst = pair * batch + b
                for mat in (0, 1):
                    for q, i in enumerate(rows[mat]):
                        owner[(mat, i)] = c
                        bank = t.local_banks(c)[q]
                        for name in ("G", "L"):
                            for j in range(i + 1):
                                words[(name, inst, mat, i, j)] = bank * wpb + offsets[q]
                                offsets[q] += 1
            if max(offsets) >= wpb - 1:
                raise CapacityExceeded(f"{batch} pairs of {n}x{n} overflow a bank")
        for b in range(batch):
            inst = pair * batch + b
            for mat in (0, 1):
                phases[owner[(mat, 0)]][0].append(_diag(inst, mat, 0))
        for j in range(n - 1):
            for c in group:
                local = group.index(c)
                rows = owned_rows(n, local)
                for b in range(batch):
                    inst = pair * batch + b
                    for mat in (0, 1):
                        for i in sorted(rows[mat]):
                            if i > j:
                                phases[c][j + 1].append(_off(inst, mat, i, j))
                            if i == j + 1:
                                phases[c][j + 1].append(_diag(inst, mat, i))
        work.update(phases)
        if per > 1:
            syncs.extend(barrier(t, ph, group) for ph in range(n))
    meta = {"kernel": "cholesky", "n": n, "pairs": pairs, "batch": batch,
            "instances": 2 * pairs * batch, "cores_per_pair": per}
    return LayoutPlan(f"chol{n}x{2 * pairs * batch}", t, words, work, syncs, meta)


def _diag(inst, mat, i):
    reads = (("G", inst, mat, i, i),) + tuple(("L", inst, mat, i, k) for k in range(i))
    return Task("chol-diag", reads, (("L", inst, mat, i, i),), (), (i,))


def _off(inst, mat, i, j):
    reads = [("G", inst, mat, i, j)]
    for k in range(j):
        reads += [("L", inst, mat, i, k), ("L", inst, mat, j, k)]
    reads.append(("L", inst, mat, j, j))
    return Task("chol-off", tuple(reads), (("L", inst, mat, i, j),), (), (j,))


def element_counts(plan):
    """Output elements computed by each core."""
    return {c: sum(len(task.writes) for task in plan.tasks(c)) for c in plan.cores}

"""4x4-window matrix multiplication schedule.

``A[i][k]`` and ``B[k][j]`` live in group ``k mod G`` and ``C[i][j]`` in group
``(4*(i%4) + j%4) mod G``, each spread over its group's banks. Every core walks its
windows with the inner loop started at ``k = (t + G*u) mod K`` (``t`` the core's index
in its tile, ``u`` the tile index): in any slot the cores of one tile then address
different groups as long as ``cores_per_tile <= num_groups``. The middle loop starts at
the ``t``-th column block and wraps, and each core stores its window starting from a
different element.
"""

from ..errors import DimensionTooSmall
from .plan import BankFiller, LayoutPlan, Task, barrier


def _ceil4(x):
    return -(-x // 4) * 4


def _group_banks(topology, group):
    """A group's banks ordered so consecutive picks visit different tiles."""
    t = topology
    first = group * t.banks_per_group
    return [first + tile * t.banks_per_tile + b
            for b in range(t.banks_per_tile) for tile in range(t.tiles_per_group)]


def window_assignment(m, p, cores, strict=False):
    """Map each core to its ordered list of (row block, column block) windows.

    With at most one core per row block, cores take row blocks round robin and every
    column block of each; otherwise the column blocks are split into slices so more
    cores share a row block. Cores left without work are returned as idle.
    """
    rows, cols = _ceil4(m) // 4, _ceil4(p) // 4
    n = len(cores)
    if strict and rows * cols < n:
        raise DimensionTooSmall(f"{rows * cols} windows for {n} cores")
    assign = {c: [] for c in cores}
    if n <= rows:
        for i, c in enumerate(cores):
            assign[c] = [(r, q) for r in range(i, rows, n) for q in range(cols)]
    else:
        slices = min(n // rows, cols)
        for i, c in enumerate(cores[:rows * slices]):
            r, s = i % rows, i // rows
            assign[c] = [(r, q) for q in range(s, cols, slices)]
    idle = [c for c in cores if not assign[c]]
    return assign, idle


def mmm_schedule(m, n, p, topology, cores=None, stagger=True, strict=False):
    """Plan for ``C (m x p) = A (m x n) @ B (n x p)``; m and p are padded to multiples of 4."""
    t = topology
    cores = tuple(range(t.num_cores)) if cores is None else tuple(cores)
    mp, pp = _ceil4(m), _ceil4(p)
    g = t.num_groups
    fillers = [BankFiller(t, _group_banks(t, grp)) for grp in range(g)]
    words = {}
    for i in range(mp):
        for k in range(n):
            words[("A", i, k)] = fillers[k % g].take()
    for k in range(n):
        for j in range(pp):
            words[("B", k, j)] = fillers[k % g].take()
    for i in range(mp):
        for j in range(pp):
            words[("C", i, j)] = fillers[(4 * (i % 4) + j % 4) % g].take()

    assign, idle = window_assignment(mp, pp, cores, strict)
    work = {}
    for c in cores:
        wins = assign[c]
        if not wins:
            work[c] = [[]]
            continue
        local = c % t.cores_per_tile
        tile = c // t.cores_per_tile
        delta = (local + g * tile) % n if stagger else 0
        shift = local % len(wins) if stagger else 0
        rot = local if stagger else 0
        tasks = []
        for r, q in wins[shift:] + wins[:shift]:
            i0, j0 = 4 * r, 4 * q
            reads = []
            for s in range(n):
                k = (delta + s) % n
                for x in range(4):
                    reads.append(("A", i0 + x, k))
                    reads.append(("B", k, j0 + x))
            order = [(e + rot) % 16 for e in range(16)]
            writes = tuple(("C", i0 + e // 4, j0 + e % 4) for e in order)
            tasks.append(Task("mmm-window", tuple(reads), writes, (), (n, tuple(order))))
        work[c] = [tasks]
    meta = {"kernel": "mmm", "m": m, "n": n, "p": p, "padded": [mp, n, pp],
            "stagger": stagger, "idle_cores": idle, "windows": (mp // 4) * (pp // 4)}
    active = [c for c in cores if assign[c]]
    syncs = [barrier(t, 0, active)] if len(active) > 1 else []
    return LayoutPlan(f"mmm{m}x{n}x{p}", t, words, work, syncs, meta)

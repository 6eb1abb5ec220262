"""Embarrassingly parallel stages: every core works on data in its own banks.

Channel estimation, noise estimation and the per-subcarrier MMSE solves need no
data exchange, so their layouts give each core a contiguous slice of subcarriers
(or problems) and place everything that slice touches in the core's four banks.
"""

from .plan import BankFiller, LayoutPlan, Task, barrier

BEAM_CHUNK = 8


def split_even(count, cores):
    """Contiguous slices of ``range(count)``, sizes differing by at most one."""
    n = len(cores)
    base, extra = divmod(count, n)
    out, start = {}, 0
    for i, c in enumerate(cores):
        size = base + (i < extra)
        out[c] = range(start, start + size)
        start += size
    return out


def _chunks(n, size=BEAM_CHUNK):
    return [range(s, min(n, s + size)) for s in range(0, n, size)]


def che_layout(n_pilot, n_sc, n_b, n_l, topology, cores=None):
    """LS estimate ``H[ps, sc, b, l] = Y[ps, b, sc] / X[ps, l, sc]`` on the pilot comb."""
    t = topology
    cores = tuple(range(t.num_cores)) if cores is None else tuple(cores)
    cores = cores[:max(1, min(len(cores), n_sc))]
    words, work = {}, {}
    for c, scs in split_even(n_sc, cores).items():
        fill = BankFiller(t, t.local_banks(c))
        tasks = []
        for ps in range(n_pilot):
            for sc in scs:
                l = sc % n_l
                x = ("xp", ps, l, sc)
                words[x] = fill.take()
                for beams in _chunks(n_b):
                    ys = tuple(("yp", ps, b, sc) for b in beams)
                    hs = tuple(("hls", ps, sc, b, l) for b in beams)
                    for key in ys + hs:
                        words[key] = fill.take()
                    tasks.append(Task("che", (x,) + ys, hs))
        work[c] = [tasks]
    syncs = [barrier(t, 0, cores)] if len(cores) > 1 else []
    meta = {"kernel": "che", "n_pilot": n_pilot, "n_sc": n_sc, "n_b": n_b, "n_l": n_l}
    return LayoutPlan("che", t, words, work, syncs, meta)


def ne_layout(n_pilot, n_sc, n_b, n_l, topology, cores=None):
    """Residual power on the pilot comb, per-core partial sums, reduction on the first core."""
    t = topology
    cores = tuple(range(t.num_cores)) if cores is None else tuple(cores)
    cores = cores[:max(1, min(len(cores), n_sc))]
    root = cores[0]
    words, work = {}, {}
    for c, scs in split_even(n_sc, cores).items():
        fill = BankFiller(t, t.local_banks(c))
        tasks = []
        for sc in scs:
            l = sc % n_l
            for b in range(n_b):
                words[("hhat", sc, b, l)] = fill.take()
        for ps in range(n_pilot):
            for sc in scs:
                l = sc % n_l
                x = ("xp", ps, l, sc)
                words[x] = fill.take()
                for beams in _chunks(n_b):
                    reads = [x]
                    for b in beams:
                        words[("yp", ps, b, sc)] = fill.take()
                        reads += [("yp", ps, b, sc), ("hhat", sc, b, l)]
                    tasks.append(Task("ne", tuple(reads)))
        part = ("nepart", c)
        words[part] = fill.take()
        tasks.append(Task("ne-partial", (), (part,)))
        work[c] = [tasks, []]
        if c == root:
            words[("necount",)] = fill.take()
            words[("sigma2",)] = fill.take()
    work[root][1] = [Task("ne-reduce", tuple(("nepart", c) for c in cores), (("sigma2",),),
                          (("necount",),))]
    syncs = [barrier(t, 0, cores)] if len(cores) > 1 else []
    meta = {"kernel": "ne", "n_pilot": n_pilot, "n_sc": n_sc, "n_b": n_b, "n_l": n_l,
            "samples": n_pilot * n_sc * n_b}
    return LayoutPlan("ne", t, words, work, syncs, meta)


def mimo_layout(n_problems, n_l, topology, cores=None):
    """One Cholesky factorisation plus two triangular solves per problem, in registers."""
    t = topology
    cores = tuple(range(t.num_cores)) if cores is None else tuple(cores)
    cores = cores[:max(1, min(len(cores), n_problems))]
    words, work = {}, {}
    for c, probs in split_even(n_problems, cores).items():
        fill = BankFiller(t, t.local_banks(c))
        tasks = []
        for p in probs:
            g = tuple(("Gm", p, i, j) for i in range(n_l) for j in range(i + 1))
            z = tuple(("z", p, i) for i in range(n_l))
            x = tuple(("xh", p, i) for i in range(n_l))
            for key in g + z + x:
                words[key] = fill.take()
            tasks.append(Task("mimo", g + z, x, (), (n_l,)))
        work[c] = [tasks]
    syncs = [barrier(t, 0, cores)] if len(cores) > 1 else []
    meta = {"kernel": "mimo", "problems": n_problems, "n_l": n_l}
    return LayoutPlan("mimo", t, words, work, syncs, meta)

"""Folded radix-4 FFT placement and schedule.

An ``N``-point instance runs on ``P = N/16`` cores (one core for ``N = 4``); each core
computes four butterflies per stage. In stage ``k`` (sub-FFT length ``L = N/4**k``,
butterfly stride ``D = L/4``) position ``p`` splits into sub-FFT ``s = p // L``, input
leg ``m = (p % L) // D`` and butterfly offset ``b = p % D``. Butterfly
``beta = s*D + b`` belongs to core ``beta // 4`` and keeps all four legs in that core's
bank ``beta % 4``, one leg per row. Producers push each output straight into the bank
where the next stage's butterfly expects it; a stage's outputs keep their positions,
so the last stage leaves the spectrum in digit-reversed order in local banks.
"""

from .._validation import check_power_of_four, log4
from ..cluster import map_address
from ..errors import TooFewCores, TooLarge
from .plan import LayoutPlan, ReplicationPlan, Task, barrier, check_rows, merge_plans


def fft_cores_per_instance(n):
    return max(1, n // 16)


def fft_replication(n, topology, instances=None):
    """Disjoint, tile-contiguous core sets for as many concurrent instances as fit."""
    n = check_power_of_four(n)
    per = fft_cores_per_instance(n)
    fit = topology.num_cores // per
    if fit == 0:
        raise TooLarge(f"a {n}-point FFT needs {per} cores, the cluster has {topology.num_cores}")
    count = fit if instances is None else instances
    if not 1 <= count <= fit:
        raise TooLarge(f"{count} instances of {n} points do not fit; at most {fit}")
    return ReplicationPlan(count, tuple(tuple(range(i * per, (i + 1) * per)) for i in range(count)))


def _geometry(n, k):
    stages = log4(n)
    kk = min(k, stages - 1)
    span = n >> (2 * kk)
    return span, span // 4


def _split(n, k, p):
    """(beta, leg) of position ``p`` as laid out for stage ``k``."""
    span, d = _geometry(n, k)
    s, q = divmod(p, span)
    m, b = divmod(q, d)
    return s * d + b, m


def twiddle_rows(n):
    return 3 * max(0, log4(n) - 1)


def fft_ids(inst, f, stage, n):
    """Logical ids of one data generation, in position order."""
    return [("x", inst, f, stage, p) for p in range(n)]


def _butterfly_tasks(n, inst, f, k, beta, core):
    stages = log4(n)
    span, d = _geometry(n, k)
    s, b = divmod(beta, d)
    legs = [s * span + m * d + b for m in range(4)]
    reads = tuple(("x", inst, f, k, p) for p in legs)
    last = k == stages - 1
    coeffs = () if last else tuple(("tw", core, k, beta % 4, m) for m in (1, 2, 3))
    # rotate the store order so concurrent producers hit distinct banks
    b_hi = b // (d // 4) % 4 if d >= 4 else b % 4
    order = tuple((i + b_hi) % 4 for i in range(4))
    writes = tuple(("x", inst, f, k + 1, legs[m]) for m in order)
    return Task("fft-butterfly", reads, writes, coeffs, (last, order, k, b, span))


def _fft_plan(n, topology, cores, batch, inst, place, name, twiddle_word):
    stages = log4(n)
    per = fft_cores_per_instance(n)
    t = topology
    words = {}
    for f in range(batch):
        for k in range(stages + 1):
            for p in range(n):
                words[("x", inst, f, k, p)] = place(f, k, p)
    work = {}
    for cl in range(per):
        core = cores[cl]
        betas = [beta for beta in range(4 * cl, 4 * cl + 4) if beta < n // 4]
        if stages > 1:
            for k in range(stages - 1):
                for beta in betas:
                    for m in (1, 2, 3):
                        words[("tw", core, k, beta % 4, m)] = twiddle_word(core, k, beta % 4, m)
        work[core] = [
            [_butterfly_tasks(n, inst, f, k, beta, core) for f in range(batch) for beta in betas]
            for k in range(stages)
        ]
    syncs = []
    for k in range(stages):
        _, d = _geometry(n, k)
        if k == stages - 1:
            groups = [range(per)] if per > 1 else []
        elif d > 4:
            size = d // 4
            groups = [range(s * size, (s + 1) * size) for s in range(per // size)]
        else:
            groups = []
        syncs.extend(barrier(t, k, [cores[c] for c in g]) for g in groups)
    meta = {"kernel": "fft", "n": n, "batch": batch, "stages": stages,
            "cores_per_instance": per, "instances": 1}
    return LayoutPlan(name, t, words, work, syncs, meta, live_key=(0, 3))


def fft_fold_layout(n, topology, instance_cores=None, batch=1, instance=0):
    """Folded layout of ``batch`` independent ``n``-point FFTs on one core set.

    ``instance_cores`` defaults to cores ``0..n/16-1``; extra cores are left idle.
    """
    n = check_power_of_four(n)
    per = fft_cores_per_instance(n)
    cores = tuple(range(per)) if instance_cores is None else tuple(instance_cores)
    if len(cores) < per:
        raise TooFewCores(f"a {n}-point FFT needs {per} cores, got {len(cores)}")
    cores = cores[:per]
    t = topology
    wpb = t.words_per_bank
    base = twiddle_rows(n)
    check_rows(t, base + 8 * batch, f"{batch} folded {n}-point FFTs")

    def place(f, k, p):
        beta, m = _split(n, k, p)
        bank = t.local_banks(cores[beta // 4])[beta % 4]
        return bank * wpb + base + (2 * f + k % 2) * 4 + m

    def twiddle_word(core, k, j, m):
        return t.local_banks(core)[j] * wpb + 3 * k + m - 1

    plan = _fft_plan(n, t, cores, batch, instance, place, f"fft{n}-fold", twiddle_word)
    plan.meta["idle_cores"] = len(instance_cores or ()) - per if instance_cores else 0
    return plan


def fft_replicated_layout(n, topology, batch=1, instances=None):
    """Every instance that fits, each folded onto its own core set."""
    rep = fft_replication(n, topology, instances)
    plans = [fft_fold_layout(n, topology, cores, batch, i) for i, cores in enumerate(rep.cores)]
    return merge_plans(f"fft{n}-fold-x{rep.instances}", plans,
                       {"instances": rep.instances, "replication": [list(c) for c in rep.cores]})


def fft_unfolded_layout(n, topology, instance_cores=None, batch=1, instance=0):
    """Control layout: the same schedule over data interleaved across the whole cluster.

    Positions of each buffer are consecutive addresses of the interleaved region,
    so a butterfly's four legs usually sit in four different cores' banks.
    Twiddles stay in local copies so only the data placement differs.
    """
    n = check_power_of_four(n)
    per = fft_cores_per_instance(n)
    cores = tuple(range(per)) if instance_cores is None else tuple(instance_cores)[:per]
    if len(cores) < per:
        raise TooFewCores(f"a {n}-point FFT needs {per} cores, got {len(cores)}")
    t = topology
    wpb = t.words_per_bank
    span = 2 * batch * n
    if (instance + 1) * span > t.num_banks * t.interleaved_rows:
        raise TooLarge("unfolded control does not fit in the interleaved region")
    check_rows(t, t.interleaved_rows + twiddle_rows(n), "twiddle copies")

    def place(f, k, p):
        return map_address(t, instance * span + (2 * f + k % 2) * n + p).word(t)

    def twiddle_word(core, k, j, m):
        return t.local_banks(core)[j] * wpb + t.interleaved_rows + 3 * k + m - 1

    return _fft_plan(n, t, cores, batch, instance, place, f"fft{n}-unfolded", twiddle_word)

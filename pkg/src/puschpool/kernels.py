"""Simulated execution of the layout plans, checked against the golden kernels.

Every ``simulate_*`` function builds a plan, places its inputs, runs the engine and
compares the simulated outputs with :mod:`puschpool.numerics`.

The single-core reference behind every speedup is the plan's total work time: each
core's tasks run back to back with no barriers and no other core competing for
banks or ports, and the per-core times are summed. That is the time one core needs
for the same instructions when each access costs the latency its owner sees, so
speedup can never exceed the number of cores.
"""

from dataclasses import dataclass, field

import numpy as np

from . import numerics
from .engine import EngineConfig, run
from .layouts.cholesky import cholesky_layout
from .layouts.fft import fft_replicated_layout, fft_unfolded_layout
from .layouts.local import che_layout, mimo_layout, ne_layout
from .layouts.mmm import mmm_schedule
from .lowering import build_memory, lower, read_values

GOLDEN_TOL = 1e-4


@dataclass
class KernelResult:
    kernel: str
    topology: str
    stats: object
    outputs: np.ndarray
    golden: np.ndarray
    error: float
    exact: bool
    plan_meta: dict = field(default_factory=dict)
    serial_cycles: int = None

    @property
    def verified(self):
        return self.error <= GOLDEN_TOL

    @property
    def speedup(self):
        if not self.serial_cycles or not self.stats.total_cycles:
            return None
        return self.serial_cycles / self.stats.total_cycles

    def record(self):
        out = {"kernel": self.kernel, "topology": self.topology, **self.stats.as_dict(),
               "golden_error": self.error, "bit_exact": self.exact, "verified": self.verified}
        if self.serial_cycles is not None:
            out["serial_cycles"] = self.serial_cycles
            out["speedup"] = self.speedup
        return out


def _rng(seed):
    return np.random.default_rng(seed)


def _crandn(rng, shape):
    return ((rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)).astype(np.complex64)


def execute(plan, values, config=None):
    """Run a plan with ``values`` (id -> complex) placed; returns the RunResult."""
    memory = build_memory(plan, values)
    return run(plan.topology, lower(plan), memory, config)


def work_cycles(plan, config=None):
    """Single-core reference: summed contention-free, barrier-free per-core times."""
    cfg = config or EngineConfig()
    solo = EngineConfig(cfg.latency_alu, cfg.latency_mul, cfg.latency_div, contention=False)
    memory = build_memory(plan, {})
    with np.errstate(all="ignore"):  # the image holds zeros, so divisions may be 0/0
        stats = run(plan.topology, lower(plan, barriers=False), memory, solo).stats
    return int((stats.issued + stats.lsu + stats.raw)[stats.active].sum())


def _finish(kernel, plan, res, outputs, golden, serial, config):
    outputs = np.asarray(outputs)
    golden = np.asarray(golden, dtype=np.complex64)
    err = numerics.relative_error(outputs, golden)
    exact = bool(np.array_equal(outputs, golden))
    result = KernelResult(kernel, plan.topology.name, res.stats, outputs, golden, err, exact,
                          dict(plan.meta))
    if serial:
        result.serial_cycles = work_cycles(plan, config)
    return result


# ---------------------------------------------------------------------------
# FFT
# ---------------------------------------------------------------------------


def fft_values(plan, x):
    """Inputs ``x[instance, batch, n]`` plus each core's twiddle copies."""
    n = plan.meta["n"]
    tw = numerics.make_twiddles(n)
    values = {}
    for (inst, f), row in np.ndenumerate(np.empty(x.shape[:2])):
        for p in range(n):
            values[("x", inst, f, 0, p)] = x[inst, f, p]
    for core in plan.cores:
        for task in plan.tasks(core):
            if task.coeffs and task.coeffs[0] not in values:
                _, _, k, b, _ = task.params
                for m, key in zip((1, 2, 3), task.coeffs):
                    values[key] = tw.factors[(b * m << (2 * k)) % n]
    return values


def simulate_fft(n, topology, batch=1, instances=None, seed=0, x=None, layout="fold",
                 serial=False, config=None):
    """``batch`` FFTs on each of ``instances`` replicated core sets (all that fit by default)."""
    if layout == "fold":
        plan = fft_replicated_layout(n, topology, batch, instances)
    else:
        plan = fft_unfolded_layout(n, topology, batch=batch)
    count = plan.meta["instances"]
    if x is None:
        x = _crandn(_rng(seed), (count, batch, n))
    x = np.asarray(x, dtype=np.complex64).reshape(count, batch, n)
    res = execute(plan, fft_values(plan, x), config)
    stages = plan.meta["stages"]
    perm = numerics.digit_reverse_indices(n)
    out = np.empty_like(x)
    for inst in range(count):
        for f in range(batch):
            keys = [("x", inst, f, stages, p) for p in range(n)]
            out[inst, f] = read_values(res.memory, plan, keys)[perm]
    golden = numerics.fft_radix4(x)
    return _finish("fft", plan, res, out, golden, serial, config)


# ---------------------------------------------------------------------------
# matrix multiplication
# ---------------------------------------------------------------------------


def simulate_mmm(m, n, p, topology, cores=None, stagger=True, seed=0, a=None, b=None,
                 serial=False, config=None):
    plan = mmm_schedule(m, n, p, topology, cores, stagger)
    rng = _rng(seed)
    a = _crandn(rng, (m, n)) if a is None else np.asarray(a, np.complex64)
    b = _crandn(rng, (n, p)) if b is None else np.asarray(b, np.complex64)
    mp, _, pp = plan.meta["padded"]
    ap = np.zeros((mp, n), np.complex64)
    ap[:m] = a
    bp = np.zeros((n, pp), np.complex64)
    bp[:, :p] = b
    values = {("A", i, k): ap[i, k] for i in range(mp) for k in range(n)}
    values.update({("B", k, j): bp[k, j] for k in range(n) for j in range(pp)})
    res = execute(plan, values, config)
    keys = [("C", i, j) for i in range(m) for j in range(p)]
    out = read_values(res.memory, plan, keys).reshape(m, p)
    return _finish("mmm", plan, res, out, numerics.mmm(a, b), serial, config)


# ---------------------------------------------------------------------------
# Cholesky
# ---------------------------------------------------------------------------


def random_spd(rng, count, n):
    a = _crandn(rng, (count, n, n)).astype(np.complex128)
    g = a @ np.conj(np.swapaxes(a, -1, -2)) + n * np.eye(n)
    return g.astype(np.complex64)


def simulate_cholesky(n, topology, cores=None, batch=1, pairs=None, seed=0, g=None,
                      serial=False, config=None):
    plan = cholesky_layout(n, topology, cores, batch, pairs)
    count = plan.meta["instances"]
    if g is None:
        g = random_spd(_rng(seed), count, n)
    g = np.asarray(g, np.complex64).reshape(count, n, n)
    values, keys, slots = {}, [], []
    mats = 1 if n == 4 else 2
    for idx in range(count):
        inst, mat = divmod(idx, mats)
        for i in range(n):
            for j in range(i + 1):
                values[("G", inst, mat, i, j)] = g[idx, i, j]
                keys.append(("L", inst, mat, i, j))
                slots.append((idx, i, j))
    res = execute(plan, values, config)
    flat = read_values(res.memory, plan, keys)
    out = np.zeros((count, n, n), np.complex64)
    for (idx, i, j), v in zip(slots, flat):
        out[idx, i, j] = v
    golden = numerics.cholesky_crout(g)
    return _finish("cholesky", plan, res, out, golden, serial, config)


# ---------------------------------------------------------------------------
# per-subcarrier stages of the receive chain
# ---------------------------------------------------------------------------


def simulate_mimo(g, z, topology, cores=None, serial=False, config=None):
    """Cholesky plus forward and backward substitution for each (G, z) problem."""
    g = np.asarray(g, np.complex64)
    z = np.asarray(z, np.complex64)
    n_l = g.shape[-1]
    g = g.reshape(-1, n_l, n_l)
    z = z.reshape(-1, n_l)
    plan = mimo_layout(len(g), n_l, topology, cores)
    values = {}
    for p in range(len(g)):
        for i in range(n_l):
            values[("z", p, i)] = z[p, i]
            for j in range(i + 1):
                values[("Gm", p, i, j)] = g[p, i, j]
    res = execute(plan, values, config)
    keys = [("xh", p, i) for p in range(len(g)) for i in range(n_l)]
    out = read_values(res.memory, plan, keys).reshape(-1, n_l)
    factor = numerics.cholesky_crout(g)
    golden = numerics.solve_upper(factor, numerics.solve_lower(factor, z))
    return _finish("mimo", plan, res, out, golden, serial, config)


def simulate_che(y_pilot, x_pilot, topology, cores=None, serial=False, config=None):
    """LS estimate on the comb; y_pilot (N_pilot, N_B, N_SC), x_pilot (N_pilot, N_L, N_SC)."""
    y = np.asarray(y_pilot, np.complex64)
    x = np.asarray(x_pilot, np.complex64)
    n_pilot, n_b, n_sc = y.shape
    n_l = x.shape[1]
    plan = che_layout(n_pilot, n_sc, n_b, n_l, topology, cores)
    values = {}
    for ps in range(n_pilot):
        for sc in range(n_sc):
            values[("xp", ps, sc % n_l, sc)] = x[ps, sc % n_l, sc]
            for b in range(n_b):
                values[("yp", ps, b, sc)] = y[ps, b, sc]
    res = execute(plan, values, config)
    keys = [("hls", ps, sc, b, sc % n_l) for ps in range(n_pilot) for sc in range(n_sc)
            for b in range(n_b)]
    out = read_values(res.memory, plan, keys).reshape(n_pilot, n_sc, n_b)
    full = numerics.channel_estimate_ls(y, x)
    golden = np.stack([full[ps, sc, :, sc % n_l] for ps in range(n_pilot) for sc in range(n_sc)])
    return _finish("che", plan, res, out, golden.reshape(out.shape), serial, config)


def simulate_ne(y_pilot, h_hat, x_pilot, topology, cores=None, serial=False, config=None):
    """Mean residual power; x_pilot must follow the comb (zero off each user's comb)."""
    y = np.asarray(y_pilot, np.complex64)
    h = np.asarray(h_hat, np.complex64)
    x = np.asarray(x_pilot, np.complex64)
    n_pilot, n_b, n_sc = y.shape
    n_l = x.shape[1]
    plan = ne_layout(n_pilot, n_sc, n_b, n_l, topology, cores)
    values = {("necount",): np.complex64(n_pilot * n_sc * n_b)}
    for sc in range(n_sc):
        for b in range(n_b):
            values[("hhat", sc, b, sc % n_l)] = h[sc, b, sc % n_l]
    for ps in range(n_pilot):
        for sc in range(n_sc):
            values[("xp", ps, sc % n_l, sc)] = x[ps, sc % n_l, sc]
            for b in range(n_b):
                values[("yp", ps, b, sc)] = y[ps, b, sc]
    res = execute(plan, values, config)
    out = read_values(res.memory, plan, [("sigma2",)]).real
    golden = np.array([numerics.noise_variance_estimate(y, h, x)])
    return _finish("ne", plan, res, out.astype(np.complex64), golden, serial, config)


__all__ = ["KernelResult", "execute", "work_cycles", "simulate_fft", "simulate_mmm",
           "simulate_cholesky", "simulate_mimo", "simulate_che", "simulate_ne", "random_spd",
           "EngineConfig", "GOLDEN_TOL"]

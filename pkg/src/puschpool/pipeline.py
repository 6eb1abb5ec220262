"""End-to-end PUSCH receive chain: stimulus, golden run, complexity and simulation.

The golden chain turns time-domain antenna samples into equalised symbols:
FFT per antenna and symbol, beamforming with fixed weights, least-squares
channel estimation on the pilot comb, noise estimation from the pilot residual
and MMSE detection per subcarrier and data symbol.

The simulated chain runs every stage on a cluster topology. Identical repetitions
of a stage (more symbols, more rounds of antennas, more chunks that do not fit
in memory at once) are simulated once and their cycle counts multiplied; the
engine's timing does not depend on the data, so the total is exact for the model.
"""

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from types import SimpleNamespace

import numpy as np

from . import numerics
from ._validation import is_power_of_four, log4
from .engine import CycleStats
from .errors import CapacityExceeded, ConfigError, GoldenMismatch
from .kernels import (GOLDEN_TOL, simulate_che, simulate_fft, simulate_mimo, simulate_mmm,
                      simulate_ne, work_cycles)
from .layouts.fft import fft_replication
from .layouts.local import che_layout, mimo_layout, ne_layout
from .layouts.mmm import mmm_schedule

STAGES = ("OFDM-dem", "BF", "CHE", "NE", "MIMO")


@dataclass(frozen=True)
class UseCaseConfig:
    """One slot of the uplink use case; pilot symbols come first in the slot."""

    N_SC: int = 3276
    N_FFT: int = 4096
    N_symb: int = 14
    N_pilot: int = 2
    N_R: int = 64
    N_B: int = 32
    N_L: int = 4
    sigma2_true: float = 0.01
    seed: int = 0
    # subcarriers over which the channel is constant and the estimate is averaged
    coherence_sc: int = 36
    # "random": orthonormal rows drawn from the seed; "identity": first N_B antennas
    bf_weights: str = "random"

    def __post_init__(self):
        for name in ("N_SC", "N_FFT", "N_symb", "N_pilot", "N_R", "N_B", "N_L", "coherence_sc"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.N_pilot >= self.N_symb:
            raise ConfigError("N_pilot must leave at least one data symbol")
        if not self.N_L <= self.N_B <= self.N_R:
            raise ConfigError(f"need N_L <= N_B <= N_R, got {self.N_L}, {self.N_B}, {self.N_R}")
        if not is_power_of_four(self.N_FFT) or self.N_FFT < self.N_SC:
            raise ConfigError(f"N_FFT={self.N_FFT} must be a power of 4 and at least N_SC")
        if self.coherence_sc % self.N_L or self.N_SC % self.coherence_sc:
            raise ConfigError(f"coherence_sc={self.coherence_sc} must be a multiple of N_L "
                              f"and divide N_SC={self.N_SC}")
        if not (isinstance(self.sigma2_true, (int, float)) and self.sigma2_true >= 0):
            raise ConfigError(f"sigma2_true must be a non-negative number, got {self.sigma2_true!r}")
        if self.bf_weights not in ("random", "identity"):
            raise ConfigError(f"bf_weights must be 'random' or 'identity', got {self.bf_weights!r}")

    @property
    def N_data(self):
        return self.N_symb - self.N_pilot

    def replace(self, **changes):
        return UseCaseConfig(**{**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)


USECASE_5G = UseCaseConfig()
DESK = UseCaseConfig(N_SC=48, N_FFT=64, N_symb=4, N_pilot=2, N_R=8, N_B=4, N_L=2,
                     coherence_sc=48)


# ---------------------------------------------------------------------------
# complexity
# ---------------------------------------------------------------------------


def _exact(value):
    value = Fraction(value)
    return value.numerator if value.denominator == 1 else value


def kernel_macs(stage, cfg, log_base=4):
    """Complex MACs of one stage for one slot.

    The FFT row counts ``N_FFT * log(N_FFT)`` per antenna and symbol; ``log_base``
    picks the logarithm (4 counts radix-4 butterfly groups). The MIMO row is the
    Cholesky cost ``N_L^3/3`` plus the two solves ``2 N_L^2``; the result is an
    ``int`` when exact and a ``Fraction`` otherwise.
    """
    c = cfg
    if stage == "OFDM-dem":
        if log_base == 4:
            return c.N_symb * c.N_R * c.N_FFT * log4(c.N_FFT)
        return c.N_symb * c.N_R * c.N_FFT * math.log(c.N_FFT, log_base)
    if stage == "BF":
        return c.N_symb * c.N_SC * c.N_R * c.N_B
    if stage == "MIMO":
        return _exact(c.N_data * c.N_SC * (Fraction(c.N_L ** 3, 3) + 2 * c.N_L ** 2))
    if stage == "CHE":
        return c.N_pilot * c.N_SC * c.N_B * c.N_L
    if stage == "NE":
        return c.N_pilot * c.N_SC * 2 * c.N_B * c.N_L
    raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")


def stage_breakdown(cfg, n_users_sweep=(1, 2, 4, 8, 16), log_base=4):
    """``{N_L: {stage: share of MACs}}`` for each user count in the sweep."""
    out = {}
    for n_l in n_users_sweep:
        # only the dimensions matter here, so the point skips the stimulus checks
        point = SimpleNamespace(**{**asdict(cfg), "N_L": n_l, "N_data": cfg.N_data})
        macs = {s: float(kernel_macs(s, point, log_base)) for s in STAGES}
        total = sum(macs.values())
        out[n_l] = {s: v / total for s, v in macs.items()}
    return out


# ---------------------------------------------------------------------------
# stimulus and golden chain
# ---------------------------------------------------------------------------


@dataclass
class Stimulus:
    x_pilot: np.ndarray   # (N_pilot, N_L, N_SC), zero off each user's comb
    x_data: np.ndarray    # (N_data, N_L, N_SC)
    h_true: np.ndarray    # (N_SC, N_R, N_L)
    noise: np.ndarray     # (N_symb, N_R, N_SC)
    y_freq: np.ndarray    # (N_symb, N_R, N_SC), H x + n in double precision
    time: np.ndarray      # (N_symb, N_R, N_FFT) complex64 antenna samples
    w: np.ndarray         # (N_B, N_R) beamforming weights


def subcarrier_bins(cfg):
    """FFT bin of every active subcarrier, centred on DC."""
    return (np.arange(cfg.N_SC) - cfg.N_SC // 2) % cfg.N_FFT


def _qpsk(rng, shape):
    bits = rng.integers(0, 2, size=shape + (2,))
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / np.sqrt(2)


def beamforming_weights(cfg, rng):
    if cfg.bf_weights == "identity":
        return np.eye(cfg.N_B, cfg.N_R, dtype=np.complex64)
    a = rng.standard_normal((cfg.N_R, cfg.N_B)) + 1j * rng.standard_normal((cfg.N_R, cfg.N_B))
    q, _ = np.linalg.qr(a)
    return np.conj(q.T).astype(np.complex64)


def generate_stimulus(cfg):
    """Seeded transmit grid, block-constant channel, noise and antenna samples."""
    rng = np.random.default_rng(cfg.seed)
    x = _qpsk(rng, (cfg.N_symb, cfg.N_L, cfg.N_SC))
    x[:cfg.N_pilot] *= numerics.comb_mask(cfg.N_L, cfg.N_SC)
    blocks = cfg.N_SC // cfg.coherence_sc
    h = (rng.standard_normal((blocks, cfg.N_R, cfg.N_L))
         + 1j * rng.standard_normal((blocks, cfg.N_R, cfg.N_L))) / np.sqrt(2)
    h = np.repeat(h, cfg.coherence_sc, axis=0)
    shape = (cfg.N_symb, cfg.N_R, cfg.N_SC)
    n = np.sqrt(cfg.sigma2_true / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    y = np.einsum("crl,slc->src", h, x) + n
    grid = np.zeros((cfg.N_symb, cfg.N_R, cfg.N_FFT), np.complex128)
    grid[..., subcarrier_bins(cfg)] = y
    time = np.fft.ifft(grid, axis=-1).astype(np.complex64)
    w = beamforming_weights(cfg, rng)
    return Stimulus(x[:cfg.N_pilot], x[cfg.N_pilot:], h, n, y, time, w)


@dataclass
class GoldenResult:
    stimulus: Stimulus
    y_fft: np.ndarray    # (N_symb, N_R, N_FFT)
    y: np.ndarray        # (N_symb, N_R, N_SC) active bins
    y_bf: np.ndarray     # (N_symb, N_B, N_SC)
    h_ls: np.ndarray     # (N_pilot, N_SC, N_B, N_L)
    h_hat: np.ndarray    # (N_SC, N_B, N_L)
    sigma2_hat: float
    gram: np.ndarray     # (N_SC, N_L, N_L)
    z: np.ndarray        # (N_data, N_SC, N_L) matched-filter outputs
    x_hat: np.ndarray    # (N_data, N_SC, N_L)
    evm: float


def evm(x_hat, x_ref):
    """RMS symbol error over RMS reference magnitude."""
    x_hat = np.asarray(x_hat, np.complex128)
    x_ref = np.asarray(x_ref, np.complex128)
    return float(np.sqrt(np.mean(np.abs(x_hat - x_ref) ** 2) / np.mean(np.abs(x_ref) ** 2)))


def run_golden(cfg, stimulus=None):
    s = generate_stimulus(cfg) if stimulus is None else stimulus
    y_fft = numerics.fft_radix4(s.time)
    y = y_fft[..., subcarrier_bins(cfg)]
    y_bf = numerics.mmm(s.w, y)
    p = cfg.N_pilot
    h_ls = numerics.channel_estimate_ls(y_bf[:p], s.x_pilot.astype(np.complex64))
    h_hat = numerics.comb_average(h_ls, cfg.N_L, cfg.coherence_sc)
    sigma2 = numerics.noise_variance_estimate(y_bf[:p], h_hat, s.x_pilot.astype(np.complex64))
    gram = numerics.gramian(h_hat, sigma2)
    z = numerics.matched_filter(h_hat, np.swapaxes(y_bf[p:], -1, -2))
    factor = numerics.cholesky_crout(gram)
    x_hat = numerics.solve_upper(factor, numerics.solve_lower(factor, z))
    return GoldenResult(s, y_fft, y, y_bf, h_ls, h_hat, sigma2, gram, z, x_hat,
                        evm(x_hat, np.swapaxes(s.x_data, -1, -2)))


# ---------------------------------------------------------------------------
# simulated chain
# ---------------------------------------------------------------------------


@dataclass
class StageReport:
    stage: str
    mac_count: object
    cycles: int
    single_core_cycles: int
    ipc: float
    stalls: dict
    golden_error: float
    simulated_runs: int
    repetitions: int

    @property
    def speedup(self):
        return self.single_core_cycles / self.cycles if self.cycles else 0.0

    def record(self):
        out = asdict(self)
        out["mac_count"] = float(self.mac_count)
        out["speedup"] = self.speedup
        return out


@dataclass
class ChainReport:
    topology: str
    stages: list = field(default_factory=list)
    evm: float = 0.0
    fft_batch: int = 1
    cholesky_batch: int = 1

    @property
    def total_cycles(self):
        return sum(s.cycles for s in self.stages)

    @property
    def single_core_cycles(self):
        return sum(s.single_core_cycles for s in self.stages)

    @property
    def speedup(self):
        return self.single_core_cycles / self.total_cycles if self.total_cycles else 0.0

    def shares(self):
        total = self.total_cycles
        return {s.stage: s.cycles / total for s in self.stages}

    def record(self):
        return {"stage": "chain", "topology": self.topology, "cycles": self.total_cycles,
                "single_core_cycles": self.single_core_cycles, "speedup": self.speedup,
                "cycle_shares": self.shares(), "evm": self.evm, "fft_batch": self.fft_batch,
                "cholesky_batch": self.cholesky_batch}


class _Stage:
    """Collects the simulated runs of one stage and their repetition counts."""

    def __init__(self, name):
        self.name = name
        self.parts = []
        self.serial = 0
        self.error = 0.0
        self.runs = 0
        self.reps = 0

    def add(self, result, reps, golden):
        err = max(result.error, numerics.relative_error(result.outputs, golden))
        if err > GOLDEN_TOL:
            raise GoldenMismatch(f"{self.name}: simulated output differs from golden by {err:.3e}")
        self.error = max(self.error, err)
        self.parts.append(result.stats.scaled(reps))
        self.serial += result.serial_cycles * reps
        self.runs += 1
        self.reps += reps

    def report(self, macs):
        stats = CycleStats.combine(self.parts)
        stalls = {"lsu": stats.total_lsu, "raw": stats.total_raw, "wfi": stats.total_wfi,
                  "issued": stats.total_issued, "idle_tail": stats.total_tail}
        return StageReport(self.name, macs, int(stats.total_cycles), int(self.serial), stats.ipc,
                           stalls, self.error, self.runs, self.reps)


def _fits(build):
    try:
        build()
    except CapacityExceeded:
        return False
    return True


def chunk_sizes(total, step, fits):
    """Split ``total`` units into equal chunks (plus a remainder) that fit in memory.

    Chunk sizes are multiples of ``step`` except possibly the remainder. Returns
    ``[(offset, size, repetitions)]`` for the distinct chunk sizes.
    """
    if fits(total):
        return [(0, total, 1)]
    lo, hi = 0, total // step
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if fits(mid * step):
            lo = mid
        else:
            hi = mid - 1
    if lo == 0:
        raise CapacityExceeded(f"not even {step} units fit in memory")
    size = lo * step
    count, rest = divmod(total, size)
    out = [(0, size, count)]
    if rest:
        out.append((total - rest, rest, 1))
    return out


def run_simulated(cfg, topology, fft_batch=1, cholesky_batch=1, golden=None, config=None):
    """Simulate the chain stage by stage and check every stage against the golden chain."""
    if fft_batch < 1 or cholesky_batch < 1:
        raise ConfigError("batch sizes must be at least 1")
    g = run_golden(cfg) if golden is None else golden
    t = topology
    report = ChainReport(t.name, evm=g.evm, fft_batch=fft_batch, cholesky_batch=cholesky_batch)
    kw = {"serial": True, "config": config}

    # OFDM demodulation: rounds of (instances x batch) antenna FFTs per symbol
    st = _Stage("OFDM-dem")
    fit = fft_replication(cfg.N_FFT, t).instances
    inst = min(fit, math.ceil(cfg.N_R / fft_batch))
    rounds = math.ceil(cfg.N_R / (inst * fft_batch))
    ants = np.arange(inst * fft_batch) % cfg.N_R
    res = simulate_fft(cfg.N_FFT, t, fft_batch, inst, x=g.stimulus.time[0, ants], **kw)
    st.add(res, rounds * cfg.N_symb, g.y_fft[0, ants].reshape(res.outputs.shape))
    report.stages.append(st.report(kernel_macs("OFDM-dem", cfg)))

    # beamforming: W (N_B x N_R) times the symbol's (N_R x N_SC) grid, by column chunks
    st = _Stage("BF")
    fits = lambda p: _fits(lambda: mmm_schedule(cfg.N_B, cfg.N_R, p, t))
    for start, size, reps in chunk_sizes(cfg.N_SC, 4, fits):
        cols = slice(start, start + size)
        res = simulate_mmm(cfg.N_B, cfg.N_R, size, t, a=g.stimulus.w, b=g.y[0][:, cols], **kw)
        st.add(res, reps * cfg.N_symb, g.y_bf[0][:, cols])
    report.stages.append(st.report(kernel_macs("BF", cfg)))

    p = cfg.N_pilot
    y_pilot = g.y_bf[:p]
    x_pilot = g.stimulus.x_pilot.astype(np.complex64)

    # channel estimation on the pilot comb
    st = _Stage("CHE")
    fits = lambda n: _fits(lambda: che_layout(p, n, cfg.N_B, cfg.N_L, t))
    for start, size, reps in chunk_sizes(cfg.N_SC, cfg.N_L, fits):
        scs = np.arange(start, start + size)
        res = simulate_che(y_pilot[..., scs], x_pilot[..., scs], t, **kw)
        ref = np.stack([g.h_ls[:, sc, :, sc % cfg.N_L] for sc in scs], axis=1)
        st.add(res, reps, ref)
    report.stages.append(st.report(kernel_macs("CHE", cfg)))

    # noise estimation, one partial result per chunk
    st = _Stage("NE")
    fits = lambda n: _fits(lambda: ne_layout(p, n, cfg.N_B, cfg.N_L, t))
    for start, size, reps in chunk_sizes(cfg.N_SC, cfg.N_L, fits):
        scs = np.arange(start, start + size)
        yp, hp, xp = y_pilot[..., scs], g.h_hat[scs], x_pilot[..., scs]
        res = simulate_ne(yp, hp, xp, t, **kw)
        st.add(res, reps, [numerics.noise_variance_estimate(yp, hp, xp)])
    report.stages.append(st.report(kernel_macs("NE", cfg)))

    # MIMO detection: cholesky_batch data symbols of N_SC problems between barriers
    st = _Stage("MIMO")
    per_round = cholesky_batch * cfg.N_SC
    rounds = math.ceil(cfg.N_data / cholesky_batch)
    syms = np.arange(cholesky_batch) % cfg.N_data
    gram = np.broadcast_to(g.gram, (cholesky_batch,) + g.gram.shape).reshape(-1, cfg.N_L, cfg.N_L)
    z = g.z[syms].reshape(-1, cfg.N_L)
    x_ref = g.x_hat[syms].reshape(-1, cfg.N_L)
    fits = lambda n: _fits(lambda: mimo_layout(n, cfg.N_L, t))
    for start, size, reps in chunk_sizes(per_round, 1, fits):
        rows = slice(start, start + size)
        res = simulate_mimo(gram[rows], z[rows], t, **kw)
        st.add(res, reps * rounds, x_ref[rows])
    report.stages.append(st.report(kernel_macs("MIMO", cfg)))
    return report


__all__ = ["UseCaseConfig", "USECASE_5G", "DESK", "STAGES", "kernel_macs", "stage_breakdown",
           "Stimulus", "generate_stimulus", "GoldenResult", "run_golden", "evm", "StageReport",
           "ChainReport", "run_simulated", "chunk_sizes", "subcarrier_bins", "work_cycles"]

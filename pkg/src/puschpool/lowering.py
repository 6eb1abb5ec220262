"""Turn layout plans into per-core micro-op programs and memory images.

Each task kind has an emitter that issues its loads in ``reads`` then ``coeffs``
order and its stores in ``writes`` order, so the engine sees the address streams
the layout verifier analysed. The compute ops replay the golden kernels' operation
order exactly; a plan run on one core reproduces them bit for bit.
"""

import numpy as np

from . import arith
from .engine import Compute, Load, Store, barrier_ops
from .errors import ConfigError

CHUNK_TAGS = 14
NE_ACC = 30
DIAG_TAG = 29


def _tri(i, j):
    return i * (i + 1) // 2 + j


def emit_fft_butterfly(task, words):
    last, order = task.params[0], task.params[1]
    ops = [Load(m, words[key]) for m, key in enumerate(task.reads)]
    ops += [Load(4 + i, words[key]) for i, key in enumerate(task.coeffs)]
    ops += [
        Compute("add", 7, (0, 2)),
        Compute("sub", 8, (0, 2)),
        Compute("add", 9, (1, 3)),
        Compute("sub", 10, (1, 3)),
        Compute("negj", 10, (10,)),
        Compute("add", 11, (7, 9)),
        Compute("add", 12, (8, 10)),
        Compute("sub", 13, (7, 9)),
        Compute("sub", 14, (8, 10)),
    ]
    if not last:
        ops += [Compute("mul", 12 + i, (12 + i, 4 + i)) for i in range(3)]
    ops += [Store(11 + m, words[key]) for m, key in zip(order, task.writes)]
    ops.append(Compute("addi"))
    return ops


def emit_mmm_window(task, words):
    n, order = task.params
    reads = task.reads
    ops = []
    for s in range(n):
        step = reads[8 * s:8 * s + 8]
        ops += [Load(i, words[key]) for i, key in enumerate(step)]
        for x in range(4):
            for y in range(4):
                acc = 8 + 4 * x + y
                if s == 0:
                    ops.append(Compute("mul", acc, (2 * x, 2 * y + 1)))
                else:
                    ops.append(Compute("mac", acc, (acc, 2 * x, 2 * y + 1)))
        ops += [Compute("addi"), Compute("addi")]
    ops += [Store(8 + e, words[key]) for e, key in zip(order, task.writes)]
    return ops


def emit_chol_diag(task, words):
    ops = [Load(0, words[task.reads[0]])]
    rest = task.reads[1:]
    for start in range(0, len(rest), CHUNK_TAGS):
        chunk = rest[start:start + CHUNK_TAGS]
        ops += [Load(1 + i, words[key]) for i, key in enumerate(chunk)]
        ops += [Compute("msc", 0, (0, 1 + i, 1 + i)) for i in range(len(chunk))]
    ops.append(Compute("sqrt", 0, (0,)))
    ops.append(Store(0, words[task.writes[0]]))
    return ops


def emit_chol_off(task, words):
    reads = task.reads
    ops = [Load(0, words[reads[0]])]
    pairs = reads[1:-1]
    for start in range(0, len(pairs), CHUNK_TAGS):
        chunk = pairs[start:start + CHUNK_TAGS]
        ops += [Load(1 + i, words[key]) for i, key in enumerate(chunk)]
        ops += [Compute("msc", 0, (0, 1 + 2 * i, 2 + 2 * i)) for i in range(len(chunk) // 2)]
    ops.append(Load(DIAG_TAG, words[reads[-1]]))
    ops.append(Compute("rdiv", 0, (0, DIAG_TAG)))
    ops.append(Store(0, words[task.writes[0]]))
    return ops


def _chol_in_registers(n):
    """Crout factorisation of a lower triangle held in tags ``_tri(i, j)``."""
    ops = []
    for j in range(n):
        for i in range(j, n):
            ops += [Compute("msc", _tri(i, j), (_tri(i, j), _tri(i, k), _tri(j, k)))
                    for k in range(j)]
        ops.append(Compute("sqrt", _tri(j, j), (_tri(j, j),)))
        ops += [Compute("rdiv", _tri(i, j), (_tri(i, j), _tri(j, j))) for i in range(j + 1, n)]
    return ops


def emit_chol4(task, words):
    n = task.params[0]
    ops = [Load(i, words[key]) for i, key in enumerate(task.reads)]
    ops += _chol_in_registers(n)
    ops += [Store(i, words[key]) for i, key in enumerate(task.writes)]
    return ops


def emit_mimo(task, words):
    n = task.params[0]
    base = n * (n + 1) // 2
    if base + n > 30:
        raise ConfigError(f"{n} layers do not fit the register file")
    ops = [Load(i, words[key]) for i, key in enumerate(task.reads)]
    ops += _chol_in_registers(n)
    z = [base + i for i in range(n)]
    for i in range(n):
        ops += [Compute("msub", z[i], (z[i], _tri(i, k), z[k])) for k in range(i)]
        ops.append(Compute("rdiv", z[i], (z[i], _tri(i, i))))
    for i in range(n - 1, -1, -1):
        ops += [Compute("mscf", z[i], (z[i], _tri(k, i), z[k])) for k in range(i + 1, n)]
        ops.append(Compute("rdiv", z[i], (z[i], _tri(i, i))))
    ops += [Store(z[i], words[key]) for i, key in enumerate(task.writes)]
    return ops


def emit_che(task, words):
    ops = [Load(i, words[key]) for i, key in enumerate(task.reads)]
    n = len(task.writes)
    ops += [Compute("cdiv", 1 + i, (1 + i, 0)) for i in range(n)]
    ops += [Store(1 + i, words[key]) for i, key in enumerate(task.writes)]
    return ops


def emit_ne(task, words):
    ops = [Load(i, words[key]) for i, key in enumerate(task.reads)]
    for i in range((len(task.reads) - 1) // 2):
        y, h = 1 + 2 * i, 2 + 2 * i
        ops.append(Compute("msub", y, (y, h, 0)))
        ops.append(Compute("abs2acc", NE_ACC, (NE_ACC, y)))
    return ops


def emit_ne_partial(task, words):
    return [Store(NE_ACC, words[task.writes[0]])]


def emit_ne_reduce(task, words):
    ops = [Load(0, words[task.reads[0]])]
    rest = task.reads[1:]
    for start in range(0, len(rest), CHUNK_TAGS):
        chunk = rest[start:start + CHUNK_TAGS]
        ops += [Load(1 + i, words[key]) for i, key in enumerate(chunk)]
        ops += [Compute("add", 0, (0, 1 + i)) for i in range(len(chunk))]
    ops.append(Load(DIAG_TAG, words[task.coeffs[0]]))
    ops.append(Compute("rdiv", 0, (0, DIAG_TAG)))
    ops.append(Store(0, words[task.writes[0]]))
    return ops


EMITTERS = {
    "fft-butterfly": emit_fft_butterfly,
    "mmm-window": emit_mmm_window,
    "chol-diag": emit_chol_diag,
    "chol-off": emit_chol_off,
    "chol4": emit_chol4,
    "mimo": emit_mimo,
    "che": emit_che,
    "ne": emit_ne,
    "ne-partial": emit_ne_partial,
    "ne-reduce": emit_ne_reduce,
}


def core_program(plan, core, barriers=True):
    """Lazy micro-op stream of one core: its phases with barriers in between."""
    words = plan.words
    syncs = plan.syncs_for(core)
    t = plan.topology
    for p, phase in enumerate(plan.core_work.get(core, ())):
        for task in phase:
            yield from EMITTERS[task.kind](task, words)
        if barriers:
            for sp in syncs.get(p, ()):
                yield from barrier_ops(t, sp.participants, sp.counter)


def lower(plan, barriers=True):
    """``{core: program}`` for every core with work or a barrier to attend."""
    cores = set(plan.cores)
    if barriers:
        for sp in plan.sync_points:
            cores |= sp.participants
    return {c: core_program(plan, c, barriers) for c in sorted(cores)}


def build_memory(plan, values):
    """Flat memory image with ``values`` (id -> complex) placed and barrier counters zeroed."""
    t = plan.topology
    memory = [arith.ZERO] * t.num_words
    keys = list(values)
    data = np.array([values[k] for k in keys], dtype=np.complex64)
    for key, pair in zip(keys, arith.to_pairs(data)):
        memory[plan.words[key]] = pair
    for sp in plan.sync_points:
        memory[sp.counter] = 0
    return memory


def read_values(memory, plan, keys):
    """complex64 array of the words behind ``keys``."""
    words = plan.words
    return arith.from_pairs([memory[words[k]] for k in keys]) if keys else np.zeros(0, np.complex64)

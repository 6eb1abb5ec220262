"""Cycle-level execution of per-core micro-op programs over the cluster model.

Each core is a single-issue, in-order pipeline with a register scoreboard and a
load-store unit that keeps up to ``max_outstanding`` requests in flight. Memory
requests go through the shared :class:`~puschpool.cluster.Arbiter` and take effect
when granted; their destination tag becomes ready ``latency`` cycles later.

The loop is event driven: a core is only revisited at the cycle where it can next
act, and the skipped cycles are charged in bulk to the stall category that caused
them. Within a cycle cores are served in ascending id, which is also the arbiter's
priority order, so results are bit-reproducible.

Every cycle of every core lands in exactly one bucket::

    issued + lsu + raw + wfi + tail == total_cycles

``tail`` is the time between a core finishing its program and the end of the run.
Instruction fetch is ideal, so there is no instruction-stall category.
"""

import heapq
from dataclasses import dataclass, field

import numpy as np

from . import arith
from .cluster import bank_latency, Arbiter
from .errors import ConfigError, Deadlock, MismatchedParticipants, OutOfRange

NUM_TAGS = 31  # tags 0..30

LOAD, STORE, ATOMIC_ADD, COMPUTE, WFI, CSR_WAKEUP = range(6)
KIND_NAMES = ("load", "store", "atomic-add", "compute", "wfi", "csr-wakeup")

ALU, MUL, DIV = "int-alu", "mul", "div-sqrt"


@dataclass(frozen=True)
class ComputeOp:
    name: str
    unit: str
    fn: object
    macs: int = 0


def _seteq(value, imm):
    return value == imm


COMPUTE_OPS = {
    op.name: op
    for op in (
        ComputeOp("nop", ALU, None),
        ComputeOp("addi", ALU, None),
        ComputeOp("mv", ALU, lambda a: a),
        ComputeOp("add", ALU, arith.add),
        ComputeOp("sub", ALU, arith.sub),
        ComputeOp("negj", ALU, arith.negj),
        ComputeOp("seteq", ALU, _seteq),
        ComputeOp("mul", MUL, arith.mul, 1),
        ComputeOp("mac", MUL, arith.mac, 1),
        ComputeOp("macc", MUL, arith.macc, 1),
        ComputeOp("msub", MUL, arith.msub, 1),
        ComputeOp("msc", MUL, arith.msc, 1),
        ComputeOp("mscf", MUL, arith.mscf, 1),
        ComputeOp("abs2acc", MUL, arith.abs2acc, 1),
        ComputeOp("rdiv", DIV, arith.rdiv),
        ComputeOp("cdiv", DIV, arith.cdiv),
        ComputeOp("sqrt", DIV, arith.csqrt_real),
    )
}


class MicroOp:
    """One instruction of a core's program.

    ``addr`` is a physical word index (``bank * words_per_bank + offset``).
    ``pred`` is ``None`` or ``(tag, expected)``: the op only executes when the
    truthiness of register ``tag`` equals ``expected``; otherwise it is skipped at
    no cost.
    """

    __slots__ = ("kind", "dst", "srcs", "addr", "imm", "compute", "scope", "pred", "participants")

    def __init__(self, kind, dst=None, srcs=(), addr=None, imm=None, compute=None,
                 scope=None, pred=None, participants=None):
        self.kind = kind
        self.dst = dst
        self.srcs = srcs
        self.addr = addr
        self.imm = imm
        self.compute = compute
        self.scope = scope
        self.pred = pred
        self.participants = participants
        for tag in (dst, *srcs, *(pred[:1] if pred else ())):
            if tag is not None and not 0 <= tag < NUM_TAGS:
                raise OutOfRange(f"register tag {tag} outside 0..{NUM_TAGS - 1}")

    @property
    def unit(self):
        if self.kind == COMPUTE:
            return self.compute.unit
        return "lsu" if self.kind in (LOAD, STORE, ATOMIC_ADD) else "ctrl"

    def __repr__(self):
        parts = [KIND_NAMES[self.kind]]
        if self.compute is not None:
            parts.append(self.compute.name)
        for key in ("dst", "srcs", "addr", "imm", "scope", "pred"):
            value = getattr(self, key)
            if value not in (None, ()):
                parts.append(f"{key}={value}")
        return f"MicroOp({', '.join(parts)})"


# -- op constructors ---------------------------------------------------------


def Load(dst, addr, pred=None):
    return MicroOp(LOAD, dst=dst, addr=addr, pred=pred)


def Store(src, addr, pred=None, imm=None):
    """Store register ``src``; with ``src=None`` store the constant ``imm``."""
    return MicroOp(STORE, srcs=() if src is None else (src,), addr=addr, imm=imm, pred=pred)


def AtomicAdd(dst, addr, imm=1, pred=None):
    """Atomically add ``imm`` to memory; ``dst`` receives the previous value."""
    return MicroOp(ATOMIC_ADD, dst=dst, addr=addr, imm=imm, pred=pred)


def Compute(name, dst=None, srcs=(), imm=None, pred=None):
    try:
        op = COMPUTE_OPS[name]
    except KeyError:
        raise ConfigError(f"unknown compute op {name!r}") from None
    return MicroOp(COMPUTE, dst=dst, srcs=tuple(srcs), imm=imm, compute=op, pred=pred)


def Wfi(pred=None):
    return MicroOp(WFI, pred=pred)


def CsrWakeup(scope, participants=None, pred=None):
    return MicroOp(CSR_WAKEUP, scope=scope, participants=participants, pred=pred)


# ---------------------------------------------------------------------------
# wake-up scopes
# ---------------------------------------------------------------------------


def scope_cores(topology, scope):
    """Cores addressed by a wake-up CSR write.

    Scopes: ``("core", c)``, ``("tiles", group, tile_mask)``, ``("groups", group_mask)``
    and ``("broadcast",)``. Masks are ints with one bit per tile of the group or per
    group of the cluster.
    """
    t = topology
    kind = scope[0]
    if kind == "core":
        t.check_core(scope[1])
        return range(scope[1], scope[1] + 1)
    if kind == "broadcast":
        return range(t.num_cores)
    cores = []
    if kind == "tiles":
        _, group, mask = scope
        if not 0 <= group < t.num_groups or mask >> t.tiles_per_group:
            raise OutOfRange(f"invalid tile scope {scope}")
        for tile in range(t.tiles_per_group):
            if mask >> tile & 1:
                cores.extend(t.tile_cores(group * t.tiles_per_group + tile))
        return cores
    if kind == "groups":
        mask = scope[1]
        if mask >> t.num_groups:
            raise OutOfRange(f"invalid group scope {scope}")
        for group in range(t.num_groups):
            if mask >> group & 1:
                first = group * t.cores_per_group
                cores.extend(range(first, first + t.cores_per_group))
        return cores
    raise ConfigError(f"unknown wake-up scope {scope!r}")


def wakeup_dispatch(topology, scope, sleeping):
    """Cores that go from sleeping to running when ``scope`` is triggered."""
    return set(scope_cores(topology, scope)) & set(sleeping)


def wakeup_scopes(topology, participants, issuer=None):
    """Fewest CSR writes that address exactly ``participants``.

    A broadcast when every core takes part, one group-mask write for all fully
    covered groups, one tile-mask write per group for its fully covered tiles, and
    single-core writes for the rest. The issuing core never needs waking.
    """
    t = topology
    members = set(participants)
    if len(members) == t.num_cores:
        return [("broadcast",)]
    scopes = []
    group_mask = 0
    for group in range(t.num_groups):
        first = group * t.cores_per_group
        if all(c in members for c in range(first, first + t.cores_per_group)):
            group_mask |= 1 << group
    if group_mask:
        scopes.append(("groups", group_mask))
    singles = []
    for group in range(t.num_groups):
        if group_mask >> group & 1:
            continue
        tile_mask = 0
        for tile in range(t.tiles_per_group):
            cores = t.tile_cores(group * t.tiles_per_group + tile)
            hits = [c for c in cores if c in members]
            if len(hits) == len(cores) and len(hits) > 1:
                tile_mask |= 1 << tile
            else:
                singles.extend(c for c in hits if c != issuer)
        if tile_mask:
            scopes.append(("tiles", group, tile_mask))
    scopes.extend(("core", c) for c in singles)
    return scopes


def barrier_ops(topology, participants, counter_addr, tmp_tag=25, flag_tag=26):
    """Micro-op idiom of a counter barrier, identical for every participant.

    Every core atomically increments the counter and compares the old value with
    ``len(participants) - 1``. The last arrival resets the counter and fires the
    wake-up CSRs; everyone else sleeps.
    """
    members = tuple(sorted(participants))
    if len(members) <= 1:
        return []
    last = (flag_tag, True)
    ops = [
        AtomicAdd(tmp_tag, counter_addr, 1),
        Compute("seteq", flag_tag, (tmp_tag,), imm=len(members) - 1),
        Store(None, counter_addr, pred=last, imm=0),
    ]
    frozen = frozenset(members)
    scopes = wakeup_scopes(topology, members)
    ops.extend(CsrWakeup(scope, frozen, pred=last) for scope in scopes)
    ops.append(Wfi(pred=(flag_tag, False)))
    return ops


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


@dataclass
class CycleStats:
    """Per-core counters plus aggregates of one simulated run."""

    total_cycles: int
    issued: np.ndarray
    lsu: np.ndarray
    raw: np.ndarray
    wfi: np.ndarray
    tail: np.ndarray
    macs: np.ndarray
    active: np.ndarray  # bool: core had a non-empty program

    @property
    def num_active(self):
        return int(self.active.sum())

    def _agg(self, arr):
        return int(arr[self.active].sum())

    @property
    def total_issued(self):
        return self._agg(self.issued)

    @property
    def total_lsu(self):
        return self._agg(self.lsu)

    @property
    def total_raw(self):
        return self._agg(self.raw)

    @property
    def total_wfi(self):
        return self._agg(self.wfi)

    @property
    def total_tail(self):
        return self._agg(self.tail)

    @property
    def total_macs(self):
        return int(self.macs.sum())

    @property
    def core_cycles(self):
        return self.num_active * self.total_cycles

    @property
    def ipc(self):
        return self.total_issued / self.core_cycles if self.core_cycles else 0.0

    @property
    def macs_per_cycle(self):
        return self.total_macs / self.total_cycles if self.total_cycles else 0.0

    def fraction(self, category):
        """Share of active core-cycles spent in ``category``."""
        value = {"issued": self.total_issued, "lsu": self.total_lsu, "raw": self.total_raw,
                 "wfi": self.total_wfi, "tail": self.total_tail}[category]
        return value / self.core_cycles if self.core_cycles else 0.0

    def check_accounting(self):
        """True when every core's buckets add up to the run length exactly."""
        rows = self.issued + self.lsu + self.raw + self.wfi + self.tail
        return bool(np.all(rows[self.active] == self.total_cycles))

    def as_dict(self):
        return {
            "total_cycles": int(self.total_cycles),
            "active_cores": self.num_active,
            "issued": self.total_issued,
            "stalls": {"lsu": self.total_lsu, "raw": self.total_raw, "wfi": self.total_wfi,
                       "instruction": 0},
            "idle_tail": self.total_tail,
            "ipc": self.ipc,
            "macs": self.total_macs,
            "macs_per_cycle": self.macs_per_cycle,
        }

    def __eq__(self, other):
        if not isinstance(other, CycleStats):
            return NotImplemented
        return self.total_cycles == other.total_cycles and all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("issued", "lsu", "raw", "wfi", "tail", "macs", "active"))

    @staticmethod
    def combine(parts):
        """Sequential composition of runs on the same cluster (cycles add up)."""
        parts = list(parts)
        first = parts[0]
        out = CycleStats(0, *(np.zeros_like(first.issued) for _ in range(5)),
                         np.zeros_like(first.macs), np.zeros_like(first.active))
        for p in parts:
            out.total_cycles += p.total_cycles
            out.active |= p.active
        for p in parts:
            # a core idle during one part accrues that part as tail
            out.issued += p.issued
            out.lsu += p.lsu
            out.raw += p.raw
            out.wfi += p.wfi
            out.tail += np.where(p.active, p.tail, p.total_cycles)
            out.macs += p.macs
        return out

    def scaled(self, factor):
        """Stats of ``factor`` identical back-to-back repetitions."""
        return CycleStats(self.total_cycles * factor, self.issued * factor, self.lsu * factor,
                          self.raw * factor, self.wfi * factor, self.tail * factor,
                          self.macs * factor, self.active.copy())


@dataclass
class EngineConfig:
    latency_alu: int = 1
    latency_mul: int = 3
    latency_div: int = 12
    # stop with Deadlock after this many cycles; None means no limit
    max_cycles: int = None
    # False grants every request at once: each core runs as if it were alone
    contention: bool = True
    trace: list = field(default=None, repr=False)

    def __post_init__(self):
        for key in ("latency_alu", "latency_mul", "latency_div"):
            if not isinstance(getattr(self, key), int) or getattr(self, key) < 1:
                raise ConfigError(f"{key} must be a positive integer")

    def unit_latency(self, unit):
        return {ALU: self.latency_alu, MUL: self.latency_mul, DIV: self.latency_div}[unit]


class RunResult:
    """Stats plus the final memory image of a run."""

    def __init__(self, stats, memory, registers):
        self.stats = stats
        self.memory = memory
        self.registers = registers


# ---------------------------------------------------------------------------
# simulation loop
# ---------------------------------------------------------------------------


_RUNNING, _SLEEPING, _DONE = 0, 1, 2


def run(topology, programs, memory=None, config=None):
    """Execute ``programs`` (core id -> iterable of MicroOp) and return a RunResult.

    ``memory`` is a flat list of ``topology.num_words`` values (``(re, im)`` float32
    pairs, ints for counters) and is updated in place. Raises Deadlock when cores
    are left sleeping with nobody to wake them.
    """
    cfg = config or EngineConfig()
    t = topology
    n = t.num_cores
    wpb = t.words_per_bank
    max_out = t.max_outstanding
    lat_of = {ALU: cfg.latency_alu, MUL: cfg.latency_mul, DIV: cfg.latency_div}
    trace = cfg.trace
    max_cycles = cfg.max_cycles
    contention = cfg.contention
    if memory is None:
        memory = [arith.ZERO] * t.num_words
    if len(memory) != t.num_words:
        raise ConfigError(f"memory image has {len(memory)} words, topology needs {t.num_words}")

    issued = [0] * n
    lsu = [0] * n
    raw = [0] * n
    wfi = [0] * n
    macs = [0] * n
    end = [0] * n
    active = [False] * n
    status = [_DONE] * n
    latch = [False] * n
    sleep_from = [0] * n
    div_free = [0] * n
    regs = [None] * n
    ready = [None] * n
    inflight = [None] * n
    streams = [None] * n
    current = [None] * n

    heap = []
    for core, prog in programs.items():
        t.check_core(core)
        it = iter(prog)
        op = next(it, None)
        if op is None:
            continue
        active[core] = True
        status[core] = _RUNNING
        streams[core] = it
        current[core] = op
        regs[core] = [arith.ZERO] * NUM_TAGS
        ready[core] = [0] * NUM_TAGS
        inflight[core] = []
        heap.append((0, core))
    heapq.heapify(heap)

    arbiter = Arbiter(t)
    arb_cycle = -1
    now = 0
    heappush, heappop = heapq.heappush, heapq.heappop

    while heap:
        now, core = heappop(heap)
        if max_cycles is not None and now > max_cycles:
            raise Deadlock(now, [c for c in range(n) if status[c] == _SLEEPING],
                           [c for c in range(n) if status[c] == _RUNNING])
        if now != arb_cycle:
            arbiter.new_cycle(now)
            arb_cycle = now
        op = current[core]
        r = regs[core]
        rdy = ready[core]

        # predicated-off ops retire for free; keep going within this cycle
        while op is not None:
            pred = op.pred
            if pred is None:
                break
            tag = pred[0]
            if rdy[tag] > now:
                break
            if bool(r[tag]) == pred[1]:
                break
            op = next(streams[core], None)
            if op is None:
                break
        if op is None:
            status[core] = _DONE
            end[core] = now
            current[core] = None
            if trace is not None:
                trace.append(f"{now} {core} done -")
            continue
        current[core] = op

        # scoreboard: predicate, sources, destination (WAW) and the div unit
        wait = now
        if op.pred is not None and rdy[op.pred[0]] > wait:
            wait = rdy[op.pred[0]]
        for s in op.srcs:
            if rdy[s] > wait:
                wait = rdy[s]
        dst = op.dst
        if dst is not None and rdy[dst] > wait:
            wait = rdy[dst]
        kind = op.kind
        if kind == COMPUTE and op.compute.unit is DIV and div_free[core] > wait:
            wait = div_free[core]
        if wait > now:
            raw[core] += wait - now
            if trace is not None:
                trace.append(f"{now} {core} stall-raw {wait - now}")
            heappush(heap, (wait, core))
            continue

        if kind <= ATOMIC_ADD:
            q = inflight[core]
            while q and q[0] <= now:
                heappop(q)
            if len(q) >= max_out:
                wait = q[0]
                lsu[core] += wait - now
                heappush(heap, (wait, core))
                continue
            addr = op.addr
            bank = addr // wpb
            if contention and not arbiter.try_grant(core, bank):
                lsu[core] += 1
                if trace is not None:
                    trace.append(f"{now} {core} stall-lsu {addr}")
                heappush(heap, (now + 1, core))
                continue
            done_at = now + bank_latency(t, core, bank)
            if kind == LOAD:
                r[dst] = memory[addr]
                rdy[dst] = done_at
            elif kind == STORE:
                memory[addr] = r[op.srcs[0]] if op.srcs else op.imm
            else:
                old = memory[addr]
                if isinstance(old, tuple):  # a never-written word reads as counter 0
                    old = 0
                memory[addr] = old + op.imm
                r[dst] = old
                rdy[dst] = done_at
            heappush(q, done_at)
            if trace is not None:
                trace.append(f"{now} {core} {KIND_NAMES[kind]} {addr}")
        elif kind == COMPUTE:
            cop = op.compute
            fn = cop.fn
            if fn is not None:
                vals = [r[s] for s in op.srcs]
                if op.imm is not None:
                    vals.append(op.imm)
                r[dst] = fn(*vals)
            lat = lat_of[cop.unit]
            if dst is not None:
                rdy[dst] = now + lat
            if cop.unit is DIV:
                div_free[core] = now + lat
            macs[core] += cop.macs
            if trace is not None:
                trace.append(f"{now} {core} {cop.name} -")
        elif kind == WFI:
            issued[core] += 1
            if trace is not None:
                trace.append(f"{now} {core} wfi -")
            if latch[core]:
                latch[core] = False
            else:
                status[core] = _SLEEPING
                sleep_from[core] = now + 1
                current[core] = next(streams[core], None)
                continue
        else:  # CSR_WAKEUP
            members = op.participants
            wake_at = now + 1
            for target in scope_cores(t, op.scope):
                if members is not None and target not in members:
                    raise MismatchedParticipants(
                        f"core {core} wake-up {op.scope} reaches core {target} outside the barrier")
                if target == core:
                    continue
                st = status[target]
                if st == _SLEEPING:
                    status[target] = _RUNNING
                    wfi[target] += wake_at - sleep_from[target]
                    heappush(heap, (wake_at, target))
                elif st == _RUNNING:
                    latch[target] = True
            if trace is not None:
                trace.append(f"{now} {core} csr-wakeup {op.scope}")

        if kind != WFI:
            issued[core] += 1
        current[core] = next(streams[core], None)
        heappush(heap, (now + 1, core))

    sleeping = [c for c in range(n) if status[c] == _SLEEPING]
    if sleeping:
        raise Deadlock(now, sleeping, [])

    total = max(end) if any(active) else 0
    if trace is not None:
        trace.append(f"{total} - end -")
    end_arr = np.array(end, dtype=np.int64)
    act = np.array(active, dtype=bool)
    tail = np.where(act, total - end_arr, 0)
    stats = CycleStats(total, np.array(issued, dtype=np.int64), np.array(lsu, dtype=np.int64),
                       np.array(raw, dtype=np.int64), np.array(wfi, dtype=np.int64), tail,
                       np.array(macs, dtype=np.int64), act)
    return RunResult(stats, memory, regs)


def format_trace(lines):
    """Header plus one event per line: cycle, core, event kind, address or detail."""
    return "cycle core event address\n" + "\n".join(lines) + ("\n" if lines else "")

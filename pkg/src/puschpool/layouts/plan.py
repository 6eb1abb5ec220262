"""Layout plans: where every logical element lives and what every core does with it.

A logical id is a tuple whose first entry names the array (``("x", inst, f, stage, pos)``,
``("A", i, k)``...). ``LayoutPlan.words`` maps ids to physical word indices
(``bank * words_per_bank + offset``); :attr:`LayoutPlan.placement` exposes the same
mapping as :class:`~puschpool.cluster.BankLocation` values.

Each core runs an ordered list of phases; each phase is a list of :class:`Task`.
A task's memory traffic is issued in the order ``reads``, ``coeffs``, ``writes``; the
lowering in :mod:`puschpool.lowering` honours that order so the verifier below sees
the same address streams the engine will.
"""

import json
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from ..cluster import get_topology, map_address
from ..errors import CapacityExceeded


@dataclass(frozen=True)
class Task:
    kind: str
    reads: tuple = ()
    writes: tuple = ()
    # read-only coefficients (twiddles, constants); counted apart from data reads
    coeffs: tuple = ()
    params: tuple = ()

    def accesses(self):
        for i in self.reads:
            yield i, False, False
        for i in self.coeffs:
            yield i, False, True
        for i in self.writes:
            yield i, True, False


@dataclass(frozen=True)
class SyncPoint:
    after_phase: int
    participants: frozenset
    counter: int  # physical word of the barrier counter


@dataclass(frozen=True)
class ReplicationPlan:
    instances: int
    cores: tuple  # instance -> tuple of core ids

    def __post_init__(self):
        seen = set()
        for group in self.cores:
            if seen & set(group):
                raise ValueError("replicated instances must use disjoint cores")
            seen |= set(group)


class _Placement(Mapping):
    """Read-only view of ``plan.words`` as BankLocation values."""

    def __init__(self, words, topology):
        self._words = words
        self._t = topology

    def __getitem__(self, key):
        bank, offset = divmod(self._words[key], self._t.words_per_bank)
        return self._t.location(bank, offset)

    def __iter__(self):
        return iter(self._words)

    def __len__(self):
        return len(self._words)


@dataclass
class LayoutPlan:
    name: str
    topology: object
    words: dict
    core_work: dict  # core -> list of phases -> list of Task
    sync_points: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # id positions that together identify a generation of live data; ids of one
    # array but different generations may share words (ping-pong buffers)
    live_key: tuple = (0,)

    @property
    def placement(self):
        return _Placement(self.words, self.topology)

    @property
    def cores(self):
        return sorted(c for c, phases in self.core_work.items() if any(phases))

    @property
    def num_phases(self):
        return max((len(p) for p in self.core_work.values()), default=0)

    def location(self, key):
        return self.placement[key]

    def syncs_for(self, core):
        """``{phase: [SyncPoint, ...]}`` for the barriers ``core`` takes part in."""
        out = {}
        for sp in self.sync_points:
            if core in sp.participants:
                out.setdefault(sp.after_phase, []).append(sp)
        return out

    def tasks(self, core):
        for phase in self.core_work.get(core, ()):
            yield from phase

    def check_injective(self):
        """Distinct live ids never share a word; different arrays never overlap."""
        by_gen = {}
        by_array = {}
        for key, word in self.words.items():
            gen = tuple(key[i] for i in self.live_key)
            slot = by_gen.setdefault(gen, {})
            if word in slot:
                raise ValueError(f"{key} and {slot[word]} share word {word}")
            slot[word] = key
            owner = by_array.setdefault(word, key[0])
            if owner != key[0]:
                raise ValueError(f"word {word} holds both {owner!r} and {key[0]!r} data")
        return True

    def to_text(self):
        """JSON document: placements as bank coordinates and per-core phase lists."""
        t = self.topology
        doc = {
            "name": self.name,
            "topology": t.to_dict(),
            "meta": self.meta,
            "live_key": list(self.live_key),
            "placement": [[list(k), *self.location(k)] for k in self.words],
            "core_work": {
                str(c): [[_task_to_list(task) for task in phase] for phase in phases]
                for c, phases in sorted(self.core_work.items())
            },
            "sync_points": [
                {"after_phase": s.after_phase, "participants": sorted(s.participants),
                 "counter": list(t.location(*divmod(s.counter, t.words_per_bank)))}
                for s in self.sync_points
            ],
        }
        return json.dumps(doc, indent=1, sort_keys=True, default=_jsonable)

    @classmethod
    def from_text(cls, text):
        doc = json.loads(text)
        t = get_topology(doc["topology"])
        words = {}
        for key, g, tile, bank, offset in doc["placement"]:
            words[_tuple(key)] = ((g * t.tiles_per_group + tile) * t.banks_per_tile + bank) \
                * t.words_per_bank + offset
        work = {
            int(c): [[_task_from_list(item) for item in phase] for phase in phases]
            for c, phases in doc["core_work"].items()
        }
        syncs = []
        for s in doc["sync_points"]:
            g, tile, bank, offset = s["counter"]
            word = ((g * t.tiles_per_group + tile) * t.banks_per_tile + bank) * t.words_per_bank + offset
            syncs.append(SyncPoint(s["after_phase"], frozenset(s["participants"]), word))
        return cls(doc["name"], t, words, work, syncs, doc["meta"], tuple(doc["live_key"]))


def _jsonable(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (frozenset, set)):
        return sorted(obj)
    raise TypeError(f"cannot serialise {obj!r}")


def _tuple(x):
    return tuple(_tuple(v) if isinstance(v, list) else v for v in x)


def _task_to_list(task):
    return [task.kind, [list(r) for r in task.reads], [list(w) for w in task.writes],
            [list(c) for c in task.coeffs], list(task.params)]


def _task_from_list(item):
    kind, reads, writes, coeffs, params = item
    return Task(kind, tuple(map(_tuple, reads)), tuple(map(_tuple, writes)),
                tuple(map(_tuple, coeffs)), _tuple(params))


# ---------------------------------------------------------------------------
# helpers shared by the generators
# ---------------------------------------------------------------------------


def reserved_row(topology):
    """Offset of the per-bank word row kept free for barrier counters."""
    return topology.words_per_bank - 1


def counter_word(topology, participants):
    """Barrier counter: reserved word of the lowest participant's first local bank."""
    bank = topology.local_banks(min(participants))[0]
    return bank * topology.words_per_bank + reserved_row(topology)


def barrier(topology, after_phase, participants):
    members = frozenset(participants)
    return SyncPoint(after_phase, members, counter_word(topology, members))


def check_rows(topology, rows_needed, what):
    usable = reserved_row(topology)
    if rows_needed > usable:
        raise CapacityExceeded(f"{what} needs {rows_needed} rows per bank, only {usable} available")


class BankFiller:
    """Hands out consecutive free words of one set of banks, round robin."""

    def __init__(self, topology, banks, first_row=0):
        self.t = topology
        self.banks = list(banks)
        self.first_row = first_row
        self.count = 0

    def take(self):
        row, i = divmod(self.count, len(self.banks))
        row += self.first_row
        if row >= reserved_row(self.t):
            raise CapacityExceeded(f"banks {self.banks[:4]}... are full")
        self.count += 1
        return self.banks[i] * self.t.words_per_bank + row


def merge_plans(name, plans, meta=None):
    """Union of plans over disjoint cores (replicated instances)."""
    plans = list(plans)
    t = plans[0].topology
    words, work, syncs = {}, {}, []
    for p in plans:
        if set(work) & set(p.core_work):
            raise ValueError("merged plans must use disjoint cores")
        words.update(p.words)
        work.update(p.core_work)
        syncs.extend(p.sync_points)
    merged_meta = dict(plans[0].meta)
    merged_meta.update(meta or {})
    return LayoutPlan(name, t, words, work, syncs, merged_meta, plans[0].live_key)


def serial_plan(plan, core=0, topology=None):
    """Same work on one core, every word re-homed through the interleaved address map.

    Tasks keep their phase order (all cores of phase 0, then phase 1, ...); barriers
    disappear. Aliasing between ids is preserved because words, not ids, are re-homed.
    """
    t = topology or plan.topology
    used = sorted(set(plan.words.values()))
    if len(used) > t.num_words:
        raise CapacityExceeded("serial plan does not fit in memory")
    remap = {}
    for addr, word in enumerate(used):
        loc = map_address(t, addr)
        remap[word] = loc.word(t)
    words = {k: remap[w] for k, w in plan.words.items()}
    phases = []
    for p in range(plan.num_phases):
        phase = []
        for c in plan.cores:
            ph = plan.core_work[c]
            if p < len(ph):
                phase.extend(ph[p])
        phases.append(phase)
    meta = dict(plan.meta, serial_of=plan.name)
    return LayoutPlan(f"{plan.name}-serial", t, words, {core: phases}, [], meta, plan.live_key)


# ---------------------------------------------------------------------------
# verifier
# ---------------------------------------------------------------------------


@dataclass
class LocalityReport:
    local_read_fraction: float
    conflict_count: int
    max_tile_to_group_collisions: int
    port_collision_count: int = 0
    tile_local_read_fraction: float = 0.0
    coeff_local_fraction: float = 1.0
    data_reads: int = 0
    writes: int = 0
    phase_local_fraction: list = field(default_factory=list)

    def as_dict(self):
        return dict(self.__dict__)


def verify_conflict_free(plan, topology=None):
    """Replay every core's address stream in lockstep slots and count collisions.

    Slot ``s`` of phase ``p`` holds the ``s``-th access of each core in that phase.
    Two accesses to one bank in the same slot are a bank conflict; two non-local
    accesses from one tile to one group in the same slot collide on the tile's port.
    Reads are core-local when they hit one of the core's four own banks.
    """
    t = topology or plan.topology
    wpb = t.words_per_bank
    rows = []  # phase, slot, core, bank, is_write, is_coeff
    for core in plan.cores:
        for p, phase in enumerate(plan.core_work[core]):
            slot = 0
            for task in phase:
                for key, is_write, is_coeff in task.accesses():
                    rows.append((p, slot, core, plan.words[key] // wpb, is_write, is_coeff))
                    slot += 1
    if not rows:
        return LocalityReport(1.0, 0, 0)
    arr = np.array(rows, dtype=np.int64)
    phase, slot, core, bank, is_write, is_coeff = arr.T
    own_first = (core // t.cores_per_tile) * t.banks_per_tile + 4 * (core % t.cores_per_tile)
    own = (bank >= own_first) & (bank < own_first + 4)
    src_tile = core // t.cores_per_tile
    dst_tile = bank // t.banks_per_tile
    data = (is_write == 0) & (is_coeff == 0)
    coeff = is_coeff == 1

    n_slots = int(slot.max()) + 1
    cell = phase * n_slots + slot
    _, counts = np.unique(cell * t.num_banks + bank, return_counts=True)
    conflicts = int(np.sum(counts - 1))

    remote = src_tile != dst_tile
    port_key = (cell[remote] * t.num_tiles + src_tile[remote]) * t.num_groups \
        + dst_tile[remote] // t.tiles_per_group
    if port_key.size:
        _, pc = np.unique(port_key, return_counts=True)
        port_collisions = int(np.sum(pc - 1))
        max_port = int(pc.max() - 1)
    else:
        port_collisions = max_port = 0

    def frac(mask):
        return float(own[mask].mean()) if mask.any() else 1.0

    per_phase = [frac(data & (phase == p)) for p in range(int(phase.max()) + 1)]
    return LocalityReport(
        local_read_fraction=frac(data),
        conflict_count=conflicts,
        max_tile_to_group_collisions=max_port,
        port_collision_count=port_collisions,
        tile_local_read_fraction=float((~remote)[data].mean()) if data.any() else 1.0,
        coeff_local_fraction=frac(coeff),
        data_reads=int(data.sum()),
        writes=int(is_write.sum()),
        phase_local_fraction=per_phase,
    )

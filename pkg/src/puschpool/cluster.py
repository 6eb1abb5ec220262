"""Static model of the hierarchical cluster: topology, addressing, latency, arbitration.

Banks are numbered globally: ``bank = (group * tiles_per_group + tile) * banks_per_tile
+ local_bank``. A physical word is ``bank * words_per_bank + offset``. Core ``c`` sits in
global tile ``c // cores_per_tile`` and owns the four tile-local banks
``4 * (c % cores_per_tile) + {0, 1, 2, 3}``.
"""

from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

from .errors import ConfigError, OutOfRange

LOCAL_BANKS_PER_CORE = 4


@dataclass(frozen=True)
class ClusterTopology:
    name: str = "custom"
    cores_per_tile: int = 4
    banks_per_tile: int = 16
    tiles_per_group: int = 16
    num_groups: int = 4
    words_per_bank: int = 256
    latency_local: int = 1
    latency_local_group: int = 3
    latency_remote_group: int = 5
    max_outstanding: int = 8
    # rows [0, interleaved_rows) are interleaved cluster-wide; the rest is per-tile sequential
    interleaved_rows: int = field(default=None)

    def __post_init__(self):
        for key in ("cores_per_tile", "tiles_per_group", "num_groups", "words_per_bank",
                    "latency_local", "latency_local_group", "latency_remote_group",
                    "max_outstanding"):
            value = getattr(self, key)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"topology field {key} must be a positive integer, got {value!r}")
        if self.banks_per_tile != LOCAL_BANKS_PER_CORE * self.cores_per_tile:
            raise ConfigError("banks_per_tile must equal 4 x cores_per_tile")
        if self.interleaved_rows is None:
            object.__setattr__(self, "interleaved_rows", self.words_per_bank // 2)
        if not 0 <= self.interleaved_rows <= self.words_per_bank:
            raise ConfigError("interleaved_rows must lie within a bank")

    @property
    def num_tiles(self):
        return self.tiles_per_group * self.num_groups

    @property
    def num_cores(self):
        return self.cores_per_tile * self.num_tiles

    @property
    def num_banks(self):
        return self.banks_per_tile * self.num_tiles

    @property
    def banks_per_group(self):
        return self.banks_per_tile * self.tiles_per_group

    @property
    def cores_per_group(self):
        return self.cores_per_tile * self.tiles_per_group

    @property
    def num_words(self):
        return self.num_banks * self.words_per_bank

    @property
    def size_bytes(self):
        return self.num_words * 4

    # -- hierarchy helpers -------------------------------------------------

    def core_tile(self, core):
        """Global tile index of a core."""
        return core // self.cores_per_tile

    def core_group(self, core):
        return core // self.cores_per_group

    def bank_tile(self, bank):
        return bank // self.banks_per_tile

    def bank_group(self, bank):
        return bank // self.banks_per_group

    def local_banks(self, core):
        """Global ids of the four banks owned by ``core``."""
        first = self.core_tile(core) * self.banks_per_tile + LOCAL_BANKS_PER_CORE * (core % self.cores_per_tile)
        return tuple(range(first, first + LOCAL_BANKS_PER_CORE))

    def tile_cores(self, tile):
        first = tile * self.cores_per_tile
        return range(first, first + self.cores_per_tile)

    def location(self, bank, offset):
        """BankLocation of global bank ``bank`` at word ``offset``."""
        tile, local = divmod(bank, self.banks_per_tile)
        group, tile = divmod(tile, self.tiles_per_group)
        return BankLocation(group, tile, local, offset)

    def check_core(self, core):
        if not 0 <= core < self.num_cores:
            raise OutOfRange(f"core {core} outside 0..{self.num_cores - 1}")

    def to_dict(self):
        return asdict(self)


class BankLocation(NamedTuple):
    group: int
    tile: int
    bank: int
    offset: int

    def global_bank(self, topology):
        return (self.group * topology.tiles_per_group + self.tile) * topology.banks_per_tile + self.bank

    def global_tile(self, topology):
        return self.group * topology.tiles_per_group + self.tile

    def word(self, topology):
        """Physical word index used by the simulator's flat memory."""
        return self.global_bank(topology) * topology.words_per_bank + self.offset

    def validate(self, topology):
        if not (0 <= self.group < topology.num_groups and 0 <= self.tile < topology.tiles_per_group
                and 0 <= self.bank < topology.banks_per_tile
                and 0 <= self.offset < topology.words_per_bank):
            raise OutOfRange(f"{self} is outside the {topology.name} topology")
        return self


MEMPOOL = ClusterTopology(name="mempool", cores_per_tile=4, banks_per_tile=16,
                          tiles_per_group=16, num_groups=4)
TERAPOOL = ClusterTopology(name="terapool", cores_per_tile=8, banks_per_tile=32,
                           tiles_per_group=16, num_groups=8)
# desk-scale clusters with the same hierarchy rules, used for fast tests and sweeps;
# both keep cores_per_tile <= num_groups like the full presets
DESK16 = ClusterTopology(name="desk16", cores_per_tile=2, banks_per_tile=8,
                         tiles_per_group=2, num_groups=4)
DESK64 = ClusterTopology(name="desk64", cores_per_tile=4, banks_per_tile=16,
                         tiles_per_group=4, num_groups=4)

PRESETS = {t.name: t for t in (MEMPOOL, TERAPOOL, DESK16, DESK64)}


def get_topology(spec):
    """Resolve a preset name, a dict of fields (optionally with ``preset``), or a topology."""
    if isinstance(spec, ClusterTopology):
        return spec
    if isinstance(spec, str):
        try:
            return PRESETS[spec]
        except KeyError:
            raise ConfigError(f"unknown topology preset {spec!r}; choose from {sorted(PRESETS)}") from None
    if isinstance(spec, dict):
        spec = dict(spec)
        base = PRESETS.get(spec.pop("preset", None)) if "preset" in spec else None
        known = set(ClusterTopology.__dataclass_fields__)
        unknown = set(spec) - known
        if unknown:
            raise ConfigError(f"unknown topology keys: {sorted(unknown)}")
        if base is not None:
            return replace(base, **spec)
        spec.setdefault("name", "custom")
        if "cores_per_tile" in spec and "banks_per_tile" not in spec:
            spec["banks_per_tile"] = LOCAL_BANKS_PER_CORE * spec["cores_per_tile"]
        return ClusterTopology(**spec)
    raise ConfigError(f"cannot build a topology from {spec!r}")


# ---------------------------------------------------------------------------
# addressing and latency
# ---------------------------------------------------------------------------


def map_address(topology, word_address):
    """Map a logical word address onto a bank.

    Addresses below ``num_banks * interleaved_rows`` rotate across every bank of the
    cluster; the remainder is split into per-tile sequential regions whose words are
    interleaved over that tile's banks only.
    """
    t = topology
    if not 0 <= word_address < t.num_words:
        raise OutOfRange(f"address {word_address} outside 0..{t.num_words - 1}")
    boundary = t.num_banks * t.interleaved_rows
    if word_address < boundary:
        offset, bank = divmod(word_address, t.num_banks)
        return t.location(bank, offset)
    rel = word_address - boundary
    per_tile = t.banks_per_tile * (t.words_per_bank - t.interleaved_rows)
    tile, rel = divmod(rel, per_tile)
    row, local = divmod(rel, t.banks_per_tile)
    return t.location(tile * t.banks_per_tile + local, t.interleaved_rows + row)


def sequential_base(topology, tile):
    """First word address of a tile's sequential region."""
    t = topology
    return t.num_banks * t.interleaved_rows + tile * t.banks_per_tile * (t.words_per_bank - t.interleaved_rows)


def access_latency(topology, core, loc):
    """Cycles for ``core`` to reach ``loc`` (a BankLocation or a global bank id)."""
    bank = loc if isinstance(loc, int) else loc.global_bank(topology)
    return bank_latency(topology, core, bank)


def bank_latency(topology, core, bank):
    t = topology
    core_tile = core // t.cores_per_tile
    bank_tile = bank // t.banks_per_tile
    if core_tile == bank_tile:
        return t.latency_local
    if core_tile // t.tiles_per_group == bank_tile // t.tiles_per_group:
        return t.latency_local_group
    return t.latency_remote_group


# ---------------------------------------------------------------------------
# arbitration
# ---------------------------------------------------------------------------


class AccessRequest(NamedTuple):
    core: int
    kind: str  # "load" | "store" | "atomic-add"
    location: BankLocation
    issue_cycle: int = 0


class Arbiter:
    """Per-cycle resource bookkeeping for banks and tile-to-group ports.

    Callers present requests in ascending core order; the first request to claim a
    bank, or a (source tile, destination group) port for non-local traffic, wins the
    cycle. Everything else must retry.
    """

    __slots__ = ("topology", "cycle", "banks", "ports")

    def __init__(self, topology):
        self.topology = topology
        self.cycle = None
        self.banks = set()
        self.ports = set()

    def new_cycle(self, cycle):
        self.cycle = cycle
        self.banks.clear()
        self.ports.clear()

    def port(self, core, bank):
        """Port key used by a request, or None for tile-local traffic."""
        t = self.topology
        src = core // t.cores_per_tile
        dst = bank // t.banks_per_tile
        if src == dst:
            return None
        return (src, dst // t.tiles_per_group)

    def try_grant(self, core, bank):
        if bank in self.banks:
            return False
        port = self.port(core, bank)
        if port is not None:
            if port in self.ports:
                return False
            self.ports.add(port)
        self.banks.add(bank)
        return True


def arbitrate(topology, pending, cycle):
    """Grant at most one request per bank and per tile-to-group port this cycle.

    Returns ``(granted, stalled)`` lists; ties go to the lowest core id.
    """
    arb = Arbiter(topology)
    arb.new_cycle(cycle)
    granted, stalled = [], []
    for req in sorted(pending, key=lambda r: (r.core, r.issue_cycle)):
        if req.issue_cycle > cycle:
            raise ValueError(f"request {req} issued after cycle {cycle}")
        topology.check_core(req.core)
        bank = req.location.validate(topology).global_bank(topology)
        (granted if arb.try_grant(req.core, bank) else stalled).append(req)
    return granted, stalled

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puschpool.cluster import (AccessRequest, BankLocation, access_latency,
                               arbitrate, bank_latency, get_topology, map_address,
                               sequential_base)
from puschpool.errors import ConfigError, OutOfRange


@pytest.mark.parametrize("name, cores, banks, groups, mib", [
    ("mempool", 256, 1024, 4, 1),
    ("terapool", 1024, 4096, 8, 4),
])
def test_presets(name, cores, banks, groups, mib):
    t = get_topology(name)
    assert t.num_cores == cores == t.cores_per_tile * t.tiles_per_group * t.num_groups
    assert t.num_banks == banks
    assert t.num_groups == groups
    assert t.banks_per_tile == 4 * t.cores_per_tile
    assert t.size_bytes == mib * 2**20
    assert (t.latency_local, t.latency_local_group, t.latency_remote_group) == (1, 3, 5)
    assert t.max_outstanding == 8


def test_topology_dict_round_trip(terapool):
    assert get_topology(terapool.to_dict()) == terapool
    custom = get_topology({"preset": "mempool", "num_groups": 2})
    assert custom.num_cores == 128


@pytest.mark.parametrize("spec", ["nosuch", {"cores_per_tile": 4, "bogus": 1}])
def test_topology_rejects_bad_specs(spec):
    with pytest.raises(ConfigError):
        get_topology(spec)


def test_topology_rejects_wrong_bank_ratio():
    with pytest.raises(ConfigError):
        get_topology({"preset": "mempool", "banks_per_tile": 8})


# ---------------------------------------------------------------------------
# address mapping
# ---------------------------------------------------------------------------


def test_map_address_examples(mempool):
    assert map_address(mempool, 0) == BankLocation(0, 0, 0, 0)
    assert map_address(mempool, mempool.num_banks) == BankLocation(0, 0, 0, 1)
    loc = map_address(mempool, 17)
    # tile 1 holds global banks 16..31; the location stores the tile-local index
    assert (loc.group, loc.tile, loc.offset) == (0, 1, 0)
    assert loc.global_bank(mempool) == 17


def test_sequential_region_stays_in_tile(mempool):
    base = sequential_base(mempool, 5)
    span = mempool.banks_per_tile * (mempool.words_per_bank - mempool.interleaved_rows)
    tiles = {map_address(mempool, a).global_tile(mempool) for a in range(base, base + span)}
    assert tiles == {5}


def test_map_address_out_of_range(mempool):
    for bad in (-1, mempool.num_words):
        with pytest.raises(OutOfRange):
            map_address(mempool, bad)


@pytest.mark.parametrize("name", ["desk16", "mempool"])
def test_map_address_bijection(name):
    t = get_topology(name)
    words = [map_address(t, a).word(t) for a in range(t.num_words)]
    assert sorted(words) == list(range(t.num_words))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 4 * 2**20 // 4 - 1))
def test_map_address_locations_valid(addr):
    t = get_topology("terapool")
    loc = map_address(t, addr)
    assert loc.validate(t) == loc
    assert loc.word(t) < t.num_words


# ---------------------------------------------------------------------------
# latency
# ---------------------------------------------------------------------------


def test_latency_examples(mempool):
    assert access_latency(mempool, 0, BankLocation(0, 0, 3, 0)) == 1
    assert access_latency(mempool, 0, BankLocation(0, 5, 0, 0)) == 3
    for tile in (0, 9, 15):
        assert access_latency(mempool, 0, BankLocation(2, tile, 7, 0)) == 5


def _expected_latency(t):
    core = np.arange(t.num_cores)[:, None]
    bank = np.arange(t.num_banks)[None, :]
    ct = core // t.cores_per_tile
    bt = bank // t.banks_per_tile
    same_group = ct // t.tiles_per_group == bt // t.tiles_per_group
    return np.where(ct == bt, 1, np.where(same_group, 3, 5))


@pytest.mark.parametrize("name", ["mempool", "terapool"])
def test_latency_table_exhaustive(name):
    t = get_topology(name)
    expected = _expected_latency(t)
    for core in range(t.num_cores):
        row = [bank_latency(t, core, b) for b in range(t.num_banks)]
        assert row == expected[core].tolist()


# ---------------------------------------------------------------------------
# arbitration
# ---------------------------------------------------------------------------


def _req(core, group, tile, bank, cycle=0):
    return AccessRequest(core, "load", BankLocation(group, tile, bank, 0), cycle)


def test_arbitrate_different_banks(mempool):
    granted, stalled = arbitrate(mempool, [_req(0, 0, 0, 0), _req(1, 0, 0, 5)], 0)
    assert len(granted) == 2 and not stalled


def test_arbitrate_same_bank_lower_id_wins(mempool):
    granted, stalled = arbitrate(mempool, [_req(1, 0, 0, 2), _req(0, 0, 0, 2)], 0)
    assert [r.core for r in granted] == [0]
    assert [r.core for r in stalled] == [1]
    granted, stalled = arbitrate(mempool, stalled, 1)
    assert [r.core for r in granted] == [1] and not stalled


def test_arbitrate_tile_to_group_port(mempool):
    # four cores of tile 0 to four distinct banks of group 2
    pending = [_req(c, 2, c, 0) for c in range(4)]
    order = []
    cycle = 0
    while pending:
        granted, pending = arbitrate(mempool, pending, cycle)
        assert len(granted) == 1
        order.append((cycle, granted[0].core))
        cycle += 1
    assert order == [(0, 0), (1, 1), (2, 2), (3, 3)]


def test_arbitrate_rejects_future_requests(mempool):
    with pytest.raises(ValueError):
        arbitrate(mempool, [_req(0, 0, 0, 0, cycle=3)], 2)


@settings(max_examples=60, deadline=None)
@given(st.dictionaries(st.integers(0, 15), st.integers(0, 63), min_size=1))
def test_arbitration_properties(requests):
    t = get_topology("desk16")
    pending = [AccessRequest(c, "load", t.location(b, 0), 0) for c, b in requests.items()]
    granted_at = {}
    cycle = 0
    while pending:
        granted, stalled = arbitrate(t, pending, cycle)
        assert sorted(granted + stalled) == sorted(pending)
        banks = [r.location.global_bank(t) for r in granted]
        assert len(banks) == len(set(banks))
        assert granted, "someone must make progress every cycle"
        granted_at.update((r.core, cycle) for r in granted)
        pending = stalled
        cycle += 1
    assert set(granted_at) == set(requests)
    assert max(granted_at.values()) <= t.num_cores

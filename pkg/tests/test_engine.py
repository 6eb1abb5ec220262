import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from puschpool.cluster import get_topology
from puschpool.engine import (AtomicAdd, Compute, CsrWakeup, CycleStats, EngineConfig, Load,
                              Store, Wfi, barrier_ops, format_trace, run, scope_cores,
                              wakeup_dispatch, wakeup_scopes)
from puschpool.errors import ConfigError, Deadlock, MismatchedParticipants, OutOfRange


def word(t, bank, offset=0):
    return bank * t.words_per_bank + offset


def test_alu_stream_is_one_per_cycle(mempool):
    stats = run(mempool, {0: [Compute("addi", 1, (1,), imm=1) for _ in range(100)]}).stats
    assert stats.total_cycles == 100
    assert stats.ipc == 1.0
    assert stats.total_raw == stats.total_lsu == 0


@pytest.mark.parametrize("bank, latency", [(0, 1), (16, 3), (300, 5)])
def test_load_use_waits_for_latency(mempool, bank, latency):
    stats = run(mempool, {0: [Load(1, word(mempool, bank)), Compute("add", 2, (1, 1))]}).stats
    assert stats.raw[0] == latency - 1
    assert stats.total_cycles == latency + 1


def test_mul_latency_is_raw_stall(mempool):
    prog = [Compute("mul", 2, (1, 1)), Compute("add", 3, (2, 2))]
    stats = run(mempool, {0: prog}, config=EngineConfig(latency_mul=5)).stats
    assert stats.raw[0] == 4


def test_divider_is_not_pipelined(mempool):
    prog = [Compute("sqrt", 1, (5,)), Compute("sqrt", 2, (6,))]
    stats = run(mempool, {0: prog}).stats
    assert stats.raw[0] == 11
    assert stats.total_cycles == 13


def test_same_bank_conflict_costs_losing_core_100_cycles(mempool):
    addr = word(mempool, 5)
    prog = lambda: [Load(i % 8, addr) for i in range(100)]
    stats = run(mempool, {0: prog(), 1: prog()}).stats
    assert stats.lsu[0] == 0
    assert stats.lsu[1] == 100


def test_lsu_queue_limit():
    # with a 12-cycle remote latency the ninth request must wait for the first to return
    t = get_topology({"preset": "mempool", "latency_remote_group": 12})
    prog = [Load(i, word(t, 600 + i)) for i in range(9)]
    stats = run(t, {0: prog}).stats
    assert stats.lsu[0] == 12 - 8
    assert stats.check_accounting()


def test_memory_effects(mempool):
    mem = [(np.float32(0), np.float32(0))] * mempool.num_words
    mem[3] = (np.float32(2), np.float32(1))
    prog = [Load(1, 3), Compute("mul", 2, (1, 1)), Store(2, 4), AtomicAdd(3, 7, imm=5)]
    res = run(mempool, {0: prog}, memory=mem)
    assert res.memory[4] == (np.float32(3), np.float32(4))
    assert res.memory[7] == 5
    assert res.stats.total_macs == 1


def test_memory_size_checked(mempool):
    with pytest.raises(ConfigError):
        run(mempool, {0: []}, memory=[0] * 10)


def test_register_tags_bounded():
    with pytest.raises(OutOfRange):
        Load(31, 0)


# ---------------------------------------------------------------------------
# barriers and wake-up
# ---------------------------------------------------------------------------


def test_two_core_barrier(mempool):
    ops = lambda: barrier_ops(mempool, {0, 1}, 0)
    res = run(mempool, {0: ops(), 1: ops()})
    # the atomics serialise in bank 0: core 1 arrives last and wakes core 0
    assert res.stats.wfi[0] >= 1
    assert res.stats.wfi[1] == 0
    assert res.memory[0] == 0  # counter reset for reuse


def _barrier_programs(t, cores, counter, arrive, after_addr):
    """Each core idles ``arrive[c]`` cycles, passes the barrier, then stores once."""
    progs = {}
    for c in cores:
        body = [Compute("nop") for _ in range(arrive[c])]
        body += barrier_ops(t, cores, counter)
        body.append(Store(None, after_addr(c), imm=1))
        progs[c] = body
    return progs


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 30), min_size=16, max_size=16),
       st.sets(st.integers(0, 15), min_size=2))
def test_barrier_safety_and_liveness(delays, members):
    t = get_topology("desk16")
    cores = sorted(members)
    arrive = {c: delays[c] for c in cores}
    trace = []
    res = run(t, _barrier_programs(t, cores, 0, arrive, lambda c: word(t, 4 * c + 1, 3)),
              config=EngineConfig(trace=trace))
    atomics = [int(l.split()[0]) for l in trace if l.split()[2] == "atomic-add"]
    stores = {int(l.split()[1]): int(l.split()[0]) for l in trace
              if l.split()[2] == "store" and int(l.split()[3]) % t.words_per_bank == 3}
    last_arrival = max(atomics)
    assert set(stores) == set(cores)
    assert min(stores.values()) > last_arrival
    scopes = len(wakeup_scopes(t, cores))
    # reset store, seteq, scopes and the latency of the counter access
    assert max(stores.values()) <= last_arrival + scopes + 2 + t.latency_remote_group + 2
    assert res.stats.check_accounting()


def test_barrier_reusable(desk16):
    cores = list(range(8))
    progs = {c: barrier_ops(desk16, cores, 0) + [Compute("nop")] * c + barrier_ops(desk16, cores, 0)
             for c in cores}
    res = run(desk16, progs)
    assert res.memory[0] == 0
    assert res.stats.check_accounting()


def test_wakeup_scopes_all_cores_is_broadcast(terapool):
    assert wakeup_scopes(terapool, range(1024)) == [("broadcast",)]
    assert len(scope_cores(terapool, ("broadcast",))) == 1024


def test_wakeup_scopes_eight_tiles_of_one_group(terapool):
    scopes = wakeup_scopes(terapool, range(64))
    assert scopes == [("tiles", 0, 0xFF)]
    assert sorted(scope_cores(terapool, scopes[0])) == list(range(64))


def test_wakeup_scopes_whole_groups_and_remainders(terapool):
    members = set(range(256)) | set(range(256 + 8, 256 + 16)) | {300}
    scopes = wakeup_scopes(terapool, members)
    assert scopes[0] == ("groups", 0b11)
    assert ("tiles", 2, 0b10) in scopes
    assert ("core", 300) in scopes
    covered = set().union(*(set(scope_cores(terapool, s)) for s in scopes))
    assert covered == members


def test_wakeup_dispatch_examples(terapool):
    assert wakeup_dispatch(terapool, ("core", 7), {7, 9}) == {7}
    assert wakeup_dispatch(terapool, ("core", 7), {9}) == set()
    tile = scope_cores(terapool, ("tiles", 1, 1 << 3))
    assert len(tile) == 8
    assert all(terapool.core_tile(c) == 16 + 3 for c in tile)
    sleeping = {1, 500, 1023}
    assert wakeup_dispatch(terapool, ("broadcast",), sleeping) == sleeping


def test_wakeup_outside_participants_rejected(mempool):
    progs = {0: [CsrWakeup(("core", 2), frozenset({0, 1}))], 2: [Compute("nop")] * 3}
    with pytest.raises(MismatchedParticipants):
        run(mempool, progs)


def test_wakeup_before_sleep_is_latched(mempool):
    # core 0 wakes core 1 before core 1 reaches its Wfi; core 1 must not hang
    progs = {0: [CsrWakeup(("core", 1))], 1: [Compute("nop")] * 3 + [Wfi()]}
    res = run(mempool, progs)
    assert res.stats.wfi[1] == 0


def test_deadlock_reports_sleepers(mempool):
    with pytest.raises(Deadlock) as info:
        run(mempool, {0: [Wfi()], 3: [Compute("nop")]})
    assert info.value.sleeping == [0]


def test_max_cycles_raises_deadlock(mempool):
    with pytest.raises(Deadlock):
        run(mempool, {0: [Compute("nop")] * 50}, config=EngineConfig(max_cycles=10))


# ---------------------------------------------------------------------------
# statistics
# ---------------------------------------------------------------------------


def _random_programs(t, seed, n_cores=8, length=40):
    rng = np.random.default_rng(seed)
    progs = {}
    for c in range(n_cores):
        ops = []
        for _ in range(length):
            kind = rng.integers(4)
            tag = int(rng.integers(0, 8))
            if kind == 0:
                ops.append(Load(tag, word(t, int(rng.integers(t.num_banks)))))
            elif kind == 1:
                ops.append(Store(tag, word(t, int(rng.integers(t.num_banks)), 1)))
            elif kind == 2:
                ops.append(Compute("mul", tag, (int(rng.integers(8)), tag)))
            else:
                ops.append(Compute("add", tag, (int(rng.integers(8)), tag)))
        progs[c] = ops
    cores = list(range(n_cores))
    for c in cores:
        progs[c] += barrier_ops(t, cores, word(t, 2, 5))
    return progs


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31))
def test_accounting_and_bounds(seed):
    t = get_topology("desk16")
    stats = run(t, _random_programs(t, seed)).stats
    assert stats.check_accounting()
    rows = stats.issued + stats.lsu + stats.raw + stats.wfi
    assert np.all(rows[stats.active] <= stats.total_cycles)
    assert 0 <= stats.ipc <= 1


def test_determinism(desk16):
    a = run(desk16, _random_programs(desk16, 7)).stats
    b = run(desk16, _random_programs(desk16, 7)).stats
    assert a == b
    assert a.as_dict() == b.as_dict()


def test_stats_dict_and_fractions(desk16):
    stats = run(desk16, _random_programs(desk16, 3)).stats
    d = stats.as_dict()
    assert d["stalls"]["instruction"] == 0
    total = sum(stats.fraction(k) for k in ("issued", "lsu", "raw", "wfi", "tail"))
    assert total == pytest.approx(1.0)
    assert d["issued"] + sum(d["stalls"].values()) + d["idle_tail"] == stats.core_cycles


def test_combine_and_scale(desk16):
    a = run(desk16, _random_programs(desk16, 1, n_cores=4)).stats
    b = run(desk16, _random_programs(desk16, 2, n_cores=8)).stats
    both = CycleStats.combine([a, b])
    assert both.total_cycles == a.total_cycles + b.total_cycles
    assert both.check_accounting()
    triple = a.scaled(3)
    assert triple.total_cycles == 3 * a.total_cycles and triple.check_accounting()
    assert triple.ipc == pytest.approx(a.ipc)


def test_trace_lines(mempool):
    trace = []
    run(mempool, {0: [Load(1, 0), Compute("add", 2, (1, 1))]}, config=EngineConfig(trace=trace))
    text = format_trace(trace)
    lines = text.splitlines()
    assert lines[0] == "cycle core event address"
    assert lines[1] == "0 0 load 0"
    assert all(len(l.split()) == 4 for l in lines)


def test_engine_config_validation():
    with pytest.raises(ConfigError):
        EngineConfig(latency_mul=0)

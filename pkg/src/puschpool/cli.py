"""Command-line front end: ``kernel``, ``pipeline``, ``sweep`` and ``verify-layout``.

Exit codes: 0 success, 1 usage or configuration error, 2 verification failure,
3 simulator deadlock.
"""

import argparse
import itertools
import json
import math
import sys

import numpy as np

from . import config as config_module
from . import numerics
from .cluster import get_topology
from .config import KERNEL_ARGS, KERNELS, PRESETS, load_config, resolve_kernel
from .engine import format_trace
from .errors import ConfigError, Deadlock, GoldenMismatch, PuschPoolError
from .kernels import (GOLDEN_TOL, random_spd, simulate_che, simulate_cholesky, simulate_fft,
                      simulate_mimo, simulate_mmm, simulate_ne)
from .layouts import verify_conflict_free
from .layouts.cholesky import cholesky_capacity, cholesky_layout
from .layouts.fft import fft_replicated_layout, fft_unfolded_layout
from .layouts.local import che_layout, mimo_layout, ne_layout
from .layouts.mmm import mmm_schedule
from .pipeline import run_simulated, stage_breakdown
from .report import ReportDocument

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_DEADLOCK = 0, 1, 2, 3
RECONSTRUCTION_TOL = 1e-5


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# kernel runs
# ---------------------------------------------------------------------------


def _qpsk(rng, shape):
    return np.exp(1j * np.pi / 4 * (2 * rng.integers(0, 4, shape) + 1)).astype(np.complex64)


def _comb_pilots(rng, n_pilot, n_l, n_sc):
    return _qpsk(rng, (n_pilot, n_l, n_sc)) * numerics.comb_mask(n_l, n_sc)


def _crandn(rng, shape):
    return ((rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)).astype(np.complex64)


def _cholesky_split(n, instances, batch, topology):
    """(cores, pairs, batch) so that the runs cover at least ``instances`` matrices."""
    cores = topology.num_cores
    if n == 4:
        instances = instances or cores * (batch or 1)
        batch = batch or math.ceil(instances / cores)
        return min(cores, math.ceil(instances / batch)), None, batch
    fit = cholesky_capacity(n, topology) // 2
    instances = instances or 2 * fit * (batch or 1)
    batch = batch or math.ceil(instances / (2 * fit))
    return None, min(fit, math.ceil(instances / (2 * batch))), batch


def run_kernel(kernel, topology, seed=0, config=None):
    """Simulate one kernel configuration; returns (record, verified)."""
    k = resolve_kernel(kernel)
    name = k["name"]
    rng = np.random.default_rng(seed)
    extra = {}
    if name == "fft":
        res = simulate_fft(k["n"], topology, k["batch"], k["instances"], seed, layout=k["layout"],
                           serial=True, config=config)
    elif name == "mmm":
        cores = None if k["cores"] is None else range(k["cores"])
        res = simulate_mmm(k["m"], k["n"], k["p"], topology, cores, k["stagger"], seed,
                           serial=True, config=config)
        extra["idle_cores"] = len(res.plan_meta.get("idle", ()))
    elif name == "cholesky":
        n = k["size"]
        cores, pairs, batch = _cholesky_split(n, k["instances"], k["batch"], topology)
        count = (cores * batch) if n == 4 else 2 * pairs * batch
        g = random_spd(rng, count, n)
        res = simulate_cholesky(n, topology, None if cores is None else range(cores), batch, pairs,
                                g=g, serial=True, config=config)
        l = res.outputs.astype(np.complex128)
        recon = l @ np.conj(np.swapaxes(l, -1, -2))
        gd = g.astype(np.complex128)
        errs = np.linalg.norm(recon - gd, axis=(-2, -1)) / np.linalg.norm(gd, axis=(-2, -1))
        per = [numerics.relative_error(res.outputs[i], res.golden[i]) for i in range(count)]
        extra.update(instances=count, batch=batch,
                     verified_instances=int(sum(e <= GOLDEN_TOL for e in per)),
                     max_reconstruction_error=float(errs.max()))
    elif name == "mmse":
        n_l, n_b, count = k["size"], k["n_b"], k["instances"]
        if n_b < n_l:
            raise ConfigError("mmse needs n_b >= size")
        h = _crandn(rng, (count, n_b, n_l))
        x0 = _qpsk(rng, (count, n_l))
        y = (np.einsum("pbl,pl->pb", h, x0) + np.sqrt(k["sigma2"]) * _crandn(rng, (count, n_b)))
        y = y.astype(np.complex64)
        g = numerics.gramian(h, k["sigma2"])
        z = numerics.matched_filter(h, y)
        res = simulate_mimo(g, z, topology, serial=True, config=config)
        oracle = numerics.normal_equations_oracle(h, y, k["sigma2"])
        extra.update(instances=count, oracle_error=numerics.relative_error(res.outputs, oracle))
    else:
        n_pilot, n_b, n_l, n_sc = k["n_pilot"], k["n_b"], k["n_l"], k["n_sc"]
        x = _comb_pilots(rng, n_pilot, n_l, n_sc)
        y = _crandn(rng, (n_pilot, n_b, n_sc))
        if name == "che":
            res = simulate_che(y, x, topology, serial=True, config=config)
        else:
            h = _crandn(rng, (n_sc, n_b, n_l))
            res = simulate_ne(y, h, x, topology, serial=True, config=config)
    record = {**res.record(), "args": {key: v for key, v in k.items() if key != "name"}, **extra}
    record["accounting_closed"] = res.stats.check_accounting()
    verified = res.verified and record["accounting_closed"]
    if name == "cholesky":
        verified = verified and extra["max_reconstruction_error"] <= RECONSTRUCTION_TOL
    return record, verified


# ---------------------------------------------------------------------------
# layout verification
# ---------------------------------------------------------------------------


def build_layout(kernel, topology):
    """The plan a kernel configuration would run, plus the locality it must reach."""
    k = resolve_kernel(kernel)
    name = k["name"]
    if name == "fft":
        if k["layout"] == "unfolded":
            return fft_unfolded_layout(k["n"], topology, batch=k["batch"]), None
        plan = fft_replicated_layout(k["n"], topology, k["batch"], k["instances"])
        return plan, lambda r: r.local_read_fraction == 1.0 and r.conflict_count == 0
    if name == "mmm":
        cores = None if k["cores"] is None else range(k["cores"])
        plan = mmm_schedule(k["m"], k["n"], k["p"], topology, cores, k["stagger"])
        return plan, (lambda r: r.max_tile_to_group_collisions == 0) if k["stagger"] else None
    if name == "cholesky":
        cores, pairs, batch = _cholesky_split(k["size"], k["instances"], k["batch"], topology)
        plan = cholesky_layout(k["size"], topology, None if cores is None else range(cores),
                               batch, pairs)
        return plan, lambda r: r.local_read_fraction == 1.0 if k["size"] == 4 else True
    if name == "mmse":
        return mimo_layout(k["instances"], k["size"], topology), lambda r: r.local_read_fraction == 1.0
    make = che_layout if name == "che" else ne_layout
    plan = make(k["n_pilot"], k["n_sc"], k["n_b"], k["n_l"], topology)
    return plan, lambda r: r.conflict_count == 0


def verify_layout(kernel, topology):
    plan, check = build_layout(kernel, topology)
    plan.check_injective()
    rep = verify_conflict_free(plan, topology)
    record = {"layout": plan.name, "topology": topology.name, "cores": len(plan.cores),
              "phases": plan.num_phases, "sync_points": len(plan.sync_points), **rep.as_dict()}
    return record, True if check is None else bool(check(rep))


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--topology", help="topology preset or JSON object (default from config)")
    p.add_argument("--config", help=f"JSON config file, JSON text or preset {sorted(PRESETS)}")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--trace", help="write a per-cycle event trace of the simulated run here")
    p.add_argument("--seed", type=int, help="seed for generated inputs")


def _add_kernel_args(p):
    seen = {}
    for args in KERNEL_ARGS.values():
        for key, default in args.items():
            seen.setdefault(key, default)
    for key, default in seen.items():
        flag = "--" + key.replace("_", "-")
        if isinstance(default, bool):
            p.add_argument(flag, dest=key, choices=("true", "false"), default=None)
        elif key == "layout":
            p.add_argument(flag, dest=key, choices=("fold", "unfolded"), default=None)
        elif key == "sigma2":
            p.add_argument(flag, dest=key, type=float, default=None)
        else:
            p.add_argument(flag, dest=key, type=int, default=None)


def build_parser():
    parser = _Parser(prog="puschpool", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("kernel", help="simulate one kernel and check it against its golden model")
    p.add_argument("name", choices=KERNELS)
    _add_kernel_args(p)
    _add_common(p)
    p = sub.add_parser("pipeline", help="simulate the whole receive chain")
    p.add_argument("--fft-batch", type=int)
    p.add_argument("--cholesky-batch", type=int)
    _add_common(p)
    p = sub.add_parser("sweep", help="one kernel over the cartesian product of sweep axes")
    _add_common(p)
    p = sub.add_parser("verify-layout", help="check a layout's locality and conflicts")
    p.add_argument("name", choices=KERNELS)
    _add_kernel_args(p)
    _add_common(p)
    return parser


def _kernel_from_args(args, base=None):
    kernel = dict(base or {})
    if base is None or kernel.get("name") != args.name:
        kernel = {"name": args.name}
    for key in KERNEL_ARGS[args.name]:
        value = getattr(args, key, None)
        if value is not None:
            kernel[key] = {"true": True, "false": False}.get(value, value)
    return resolve_kernel(kernel)


def _resolve(args):
    cfg = load_config(args.config) if args.config else load_config({})
    doc = cfg.to_dict()
    if args.topology:
        doc["topology"] = load_topology_arg(args.topology)
    if args.seed is not None:
        doc["seed"] = args.seed
        doc["usecase"]["seed"] = args.seed
    if getattr(args, "fft_batch", None) is not None:
        doc["batching"]["fft_batch"] = args.fft_batch
    if getattr(args, "cholesky_batch", None) is not None:
        doc["batching"]["cholesky_batch"] = args.cholesky_batch
    if args.command in ("kernel", "verify-layout"):
        doc["kernel"] = _kernel_from_args(args, doc.get("kernel"))
    for key in ("kernel", "sweep"):
        if doc[key] is None:
            del doc[key]
    return load_config(doc)


def load_topology_arg(text):
    if text.lstrip().startswith("{"):
        try:
            return get_topology(json.loads(text)).to_dict()
        except ValueError as exc:
            raise ConfigError(f"--topology is not valid JSON: {exc}") from None
    return get_topology(text).to_dict()


def sweep_points(sweep):
    """``[(axis values, kernel object)]`` in a fixed order; no axes gives one point."""
    axes = sweep["axes"]
    names = sorted(axes)
    points = []
    for combo in itertools.product(*(axes[n] for n in names)):
        values = dict(zip(names, combo))
        points.append((values, {**sweep["kernel"], **values}))
    return points


def _emit(doc, args):
    text = doc.render(args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _execute(args, cfg):
    doc = ReportDocument(cfg, args.command)
    t = cfg.topology
    trace = [] if args.trace else None
    engine = cfg.engine_config(trace)
    if args.command == "kernel":
        record, ok = run_kernel(cfg.kernel, t, cfg.seed, engine)
        doc.add(record, ok)
    elif args.command == "verify-layout":
        record, ok = verify_layout(cfg.kernel, t)
        doc.add(record, ok)
    elif args.command == "pipeline":
        chain = run_simulated(cfg.usecase, t, cfg.fft_batch, cfg.cholesky_batch, config=engine)
        for stage in chain.stages:
            doc.add(stage.record(), stage.golden_error <= GOLDEN_TOL)
        doc.add(chain.record(), True)
        for base in (4, 2):
            doc.add({"stage": "mac_breakdown", "log_base": base,
                     "mac_shares": stage_breakdown(cfg.usecase, log_base=base)})
    else:
        if cfg.sweep is None:
            raise ConfigError("sweep needs a 'sweep' object in the config")
        for i, (values, kernel) in enumerate(sweep_points(cfg.sweep)):
            record, ok = run_kernel(kernel, t, cfg.seed, engine)
            doc.add({"point": i, "axes": values, **record}, ok)
    if trace is not None:
        with open(args.trace, "w", encoding="utf-8") as fh:
            fh.write(format_trace(trace))
    return doc


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve(args)
        doc = _execute(args, cfg)
    except UsageError as exc:
        print(f"puschpool: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"puschpool: config error: {exc}\n\nconfig schema:{config_module.__doc__.split('(anything', 1)[1]}",
              file=sys.stderr)
        return EXIT_USAGE
    except Deadlock as exc:
        print(f"puschpool: deadlock: {exc}", file=sys.stderr)
        return EXIT_DEADLOCK
    except GoldenMismatch as exc:
        print(f"puschpool: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except (PuschPoolError, OSError) as exc:
        print(f"puschpool: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(doc, args)
    if not doc.verified:
        print("puschpool: verification failed", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Run configuration: strict JSON documents, named presets and resolution.

A configuration document is a JSON object with these optional keys (anything
else is rejected):

``preset``
    Name of a base configuration (see :data:`PRESETS`) that the other keys override.
``topology``
    A topology preset name or an object of :class:`~puschpool.cluster.ClusterTopology`
    fields, optionally with its own ``preset`` key.
``usecase``
    An object of :class:`~puschpool.pipeline.UseCaseConfig` fields, or ``"default"``
    / ``"desk"``.
``batching``
    ``{"fft_batch": int, "cholesky_batch": int}``.
``engine``
    ``{"latency_alu", "latency_mul", "latency_div", "max_cycles"}``.
``kernel``
    ``{"name": one of KERNELS, ...size arguments}``; see :data:`KERNEL_ARGS`.
``sweep``
    ``{"kernel": {...kernel object...}, "axes": {argument: [values, ...]}}``.
``seed``
    Integer seed for the generated inputs.

The resolved form (:meth:`RunConfig.to_dict`) spells out every field, so echoing
it back through :func:`load_config` gives the same configuration.
"""

import copy
import hashlib
import json
from dataclasses import dataclass, field

from .cluster import get_topology
from .engine import EngineConfig
from .errors import ConfigError
from .pipeline import DESK, USECASE_5G, UseCaseConfig

KERNELS = ("fft", "mmm", "cholesky", "mmse", "che", "ne")

# argument -> default, per kernel; None means "as many as fit"
KERNEL_ARGS = {
    "fft": {"n": 256, "batch": 1, "instances": None, "layout": "fold"},
    "mmm": {"m": 32, "n": 16, "p": 32, "cores": None, "stagger": True},
    "cholesky": {"size": 4, "instances": None, "batch": None},
    "mmse": {"size": 4, "n_b": 8, "instances": 64, "sigma2": 0.01},
    "che": {"n_sc": 64, "n_b": 8, "n_l": 4, "n_pilot": 2},
    "ne": {"n_sc": 64, "n_b": 8, "n_l": 4, "n_pilot": 2},
}

TOP_KEYS = {"preset", "topology", "usecase", "batching", "engine", "kernel", "sweep", "seed"}
ENGINE_KEYS = {"latency_alu", "latency_mul", "latency_div", "max_cycles"}
BATCH_KEYS = {"fft_batch", "cholesky_batch"}

PRESETS = {
    "mempool": {"topology": "mempool"},
    "terapool": {"topology": "terapool"},
    "usecase-5g": {"topology": "terapool", "usecase": "default",
                   "batching": {"fft_batch": 16, "cholesky_batch": 4}},
    "desk": {"topology": "desk16", "usecase": "desk"},
}

USECASES = {"default": USECASE_5G, "desk": DESK}


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object, got {type(obj).__name__}")
    unknown = set(obj) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _int(value, where, minimum=1, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where} must be an integer >= {minimum}, got {value!r}")
    return value


def resolve_kernel(obj, where="kernel"):
    """Validated kernel object with every argument present."""
    _reject_unknown(obj, {"name"} | set().union(*KERNEL_ARGS.values()), where)
    name = obj.get("name")
    if name not in KERNELS:
        raise ConfigError(f"{where}.name must be one of {KERNELS}, got {name!r}")
    args = KERNEL_ARGS[name]
    _reject_unknown(obj, {"name"} | set(args), f"{where} ({name})")
    out = {"name": name}
    for key, default in args.items():
        value = obj.get(key, default)
        if key == "layout":
            if value not in ("fold", "unfolded"):
                raise ConfigError(f"{where}.layout must be 'fold' or 'unfolded'")
        elif key == "stagger":
            if not isinstance(value, bool):
                raise ConfigError(f"{where}.stagger must be true or false")
        elif key == "sigma2":
            if isinstance(value, bool) or not isinstance(value, (int, float)) or value < 0:
                raise ConfigError(f"{where}.sigma2 must be a non-negative number")
            value = float(value)
        else:
            value = _int(value, f"{where}.{key}", allow_none=default is None)
        out[key] = value
    return out


def resolve_sweep(obj):
    _reject_unknown(obj, {"kernel", "axes"}, "sweep")
    if "kernel" not in obj:
        raise ConfigError("sweep.kernel is required")
    base = resolve_kernel(obj["kernel"], "sweep.kernel")
    axes = obj.get("axes", {})
    _reject_unknown(axes, set(KERNEL_ARGS[base["name"]]), "sweep.axes")
    out = {}
    for key in sorted(axes):
        values = axes[key]
        if not isinstance(values, list) or not values:
            raise ConfigError(f"sweep.axes.{key} must be a non-empty list")
        for v in values:
            resolve_kernel({**base, key: v}, f"sweep.axes.{key}")
        out[key] = list(values)
    return {"kernel": base, "axes": out}


@dataclass(frozen=True)
class RunConfig:
    topology: object
    usecase: UseCaseConfig
    fft_batch: int = 1
    cholesky_batch: int = 1
    engine: dict = field(default_factory=dict)
    kernel: dict = None
    sweep: dict = None
    seed: int = 0

    def engine_config(self, trace=None):
        return EngineConfig(**self.engine, trace=trace)

    def to_dict(self):
        return {
            "topology": self.topology.to_dict(),
            "usecase": self.usecase.to_dict(),
            "batching": {"fft_batch": self.fft_batch, "cholesky_batch": self.cholesky_batch},
            "engine": dict(self.engine),
            "kernel": copy.deepcopy(self.kernel),
            "sweep": copy.deepcopy(self.sweep),
            "seed": self.seed,
        }

    def digest(self):
        """Short hash of the resolved configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _merge(base, over):
    out = dict(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict) and key in ("batching", "engine"):
            out[key] = {**out[key], **value}
        else:
            out[key] = value
    return out


def resolve(doc):
    """Validate a configuration object and fill in every default."""
    _reject_unknown(doc, TOP_KEYS, "config")
    doc = dict(doc)
    if "preset" in doc:
        name = doc.pop("preset")
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        doc = _merge(PRESETS[name], doc)
    topology = get_topology(doc.get("topology", "mempool"))
    usecase = doc.get("usecase", "default")
    if isinstance(usecase, str):
        if usecase not in USECASES:
            raise ConfigError(f"unknown use case {usecase!r}; choose from {sorted(USECASES)}")
        usecase = USECASES[usecase]
    else:
        _reject_unknown(usecase, UseCaseConfig.__dataclass_fields__, "usecase")
        usecase = UseCaseConfig(**usecase)
    batching = doc.get("batching", {})
    _reject_unknown(batching, BATCH_KEYS, "batching")
    engine = doc.get("engine", {})
    _reject_unknown(engine, ENGINE_KEYS, "engine")
    engine = {k: _int(v, f"engine.{k}", allow_none=k == "max_cycles") for k, v in engine.items()}
    kernel = doc.get("kernel")
    sweep = doc.get("sweep")
    return RunConfig(
        topology=topology,
        usecase=usecase.replace(seed=doc["seed"]) if "seed" in doc else usecase,
        fft_batch=_int(batching.get("fft_batch", 1), "batching.fft_batch"),
        cholesky_batch=_int(batching.get("cholesky_batch", 1), "batching.cholesky_batch"),
        engine=dict(sorted(engine.items())),
        kernel=None if kernel is None else resolve_kernel(kernel),
        sweep=None if sweep is None else resolve_sweep(sweep),
        seed=_int(doc.get("seed", usecase.seed), "seed", minimum=0),
    )


def load_config(source):
    """Resolve a preset name, a JSON file path, a JSON string or a dict."""
    if isinstance(source, dict):
        return resolve(source)
    if isinstance(source, str) and source in PRESETS:
        return resolve({"preset": source})
    text = source
    if isinstance(source, str) and not source.lstrip().startswith("{"):
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source!r}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    return resolve(doc)


__all__ = ["RunConfig", "load_config", "resolve", "resolve_kernel", "PRESETS", "KERNELS",
           "KERNEL_ARGS"]

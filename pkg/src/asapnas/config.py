"""YAML run configuration: schema, presets and line-aware validation.

Top-level keys::

    preset: asap_default     # optional, see PRESETS; explicit keys override it
    epochs: 50
    seeds: [0, 1, 2]
    output: runs/
    dataset:   {kind, n, d, classes, noise, seed, test_n}
    cell:      {B, width, ops}
    schedule:  {kind, T0, decay, eta_L, delta, nu, granularity}
    threshold: {kind, theta0}
    grace:     {mode, epochs, tau}
    pruner:    {kind, sparsity_p, prune_start, top_k}
    optimizer: {batch_size, w_lr, w_momentum, w_weight_decay, grad_clip,
                alpha_lr, alpha_betas}
    child:     {epochs, batch_size, lr, momentum, weight_decay, grad_clip, repeats}
    compare:   {runs: [preset names]}
    simulate:  {Ns, deltas, gaps, trials, noise, sigma, eta_L, max_steps}

Unknown sections or keys are errors; every error carries the line number of
the offending node when it came from a file.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from typing import Any

import yaml

from .data import KINDS
from .engine import PRUNERS, ChildConfig, SearchConfig
from .ops import DEFAULT_NAMES, REGISTRY


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        where = ""
        if source:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _pos(v):
    return _num(v) and v > 0


def _opt(check):
    return lambda v: v is None or check(v)


def _one_of(*choices):
    return lambda v: v in choices


def _list_of(check, min_len=1):
    return lambda v: isinstance(v, list) and len(v) >= min_len and all(check(x) for x in v)


def _ops(v):
    return _list_of(lambda x: x in REGISTRY, 2)(v) and len(set(v)) == len(v)


# section -> key -> (validator, human description, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "dataset": {
        "kind": (_one_of(*KINDS), f"one of {KINDS}", "xor_grid"),
        "n": (lambda v: _int(v) and v >= 8 and v % 2 == 0, "even int >= 8", 1024),
        "d": (lambda v: _int(v) and v >= 2, "int >= 2", 2),
        "classes": (lambda v: _int(v) and v >= 2, "int >= 2", 2),
        "noise": (lambda v: _num(v) and v >= 0, "number >= 0", 0.0),
        "seed": (_opt(_int), "int or null (null: use the run seed)", None),
        "test_n": (lambda v: _int(v) and v >= 8, "int >= 8", 1000),
    },
    "cell": {
        "B": (lambda v: _int(v) and v >= 1, "int >= 1", 4),
        "width": (lambda v: _int(v) and v >= 1, "int >= 1", 8),
        "ops": (_ops, f"list of >= 2 distinct names from {sorted(REGISTRY)}", list(DEFAULT_NAMES)),
    },
    "schedule": {
        "kind": (_one_of("exponential", "constant", "theoretical"),
                 "exponential | constant | theoretical", "exponential"),
        "T0": (_pos, "number > 0", 1.3),
        "decay": (lambda v: _num(v) and 0 < v < 1, "number in (0, 1)", 0.95),
        "eta_L": (_pos, "number > 0", 1.0),
        "delta": (lambda v: _num(v) and 0 < v < 1, "number in (0, 1)", 0.1),
        "nu": (_opt(_pos), "number > 0 or null (null: 1/N)", None),
        "granularity": (_one_of("epoch", "step"), "epoch | step", "epoch"),
    },
    "threshold": {
        "kind": (_one_of("fixed", "theoretical", "none"), "fixed | theoretical | none", "fixed"),
        "theta0": (lambda v: _num(v) and v >= 0, "number >= 0", 0.4),
    },
    "grace": {
        "mode": (_one_of("epochs", "temperature"), "epochs | temperature", "epochs"),
        "epochs": (lambda v: _int(v) and v >= 0, "int >= 0", 5),
        "tau": (_opt(_pos), "number > 0 or null (null: infinity)", None),
    },
    "pruner": {
        "kind": (_one_of(*PRUNERS), f"one of {PRUNERS}", "asap"),
        "sparsity_p": (_one_of(1, 3), "1 or 3", 3),
        "prune_start": (lambda v: _int(v) and v >= 0, "int >= 0", 20),
        "top_k": (lambda v: _int(v) and v >= 1, "int >= 1", 2),
    },
    "optimizer": {
        "batch_size": (lambda v: _int(v) and v >= 1, "int >= 1", 64),
        "w_lr": (_pos, "number > 0", 0.05),
        "w_momentum": (lambda v: _num(v) and 0 <= v < 1, "number in [0, 1)", 0.9),
        "w_weight_decay": (lambda v: _num(v) and v >= 0, "number >= 0", 3e-4),
        "grad_clip": (_opt(_pos), "number > 0 or null", 5.0),
        "alpha_lr": (_pos, "number > 0", 0.01),
        "alpha_betas": (_list_of(lambda x: _num(x) and 0 <= x < 1, 2), "[beta1, beta2]", [0.5, 0.999]),
    },
    "child": {
        "epochs": (lambda v: _int(v) and v >= 1, "int >= 1", 40),
        "batch_size": (lambda v: _int(v) and v >= 1, "int >= 1", 64),
        "lr": (_pos, "number > 0", 0.05),
        "momentum": (lambda v: _num(v) and 0 <= v < 1, "number in [0, 1)", 0.9),
        "weight_decay": (lambda v: _num(v) and v >= 0, "number >= 0", 3e-4),
        "grad_clip": (_opt(_pos), "number > 0 or null", 5.0),
        "repeats": (lambda v: _int(v) and 1 <= v <= 100, "int in [1, 100]", 2),
    },
    "compare": {
        "runs": (_list_of(lambda x: x in PRESETS, 2), "list of >= 2 preset names", None),
    },
    "simulate": {
        "Ns": (_list_of(lambda x: _int(x) and x >= 2), "list of ints >= 2", [2, 5, 10]),
        "deltas": (_list_of(lambda x: _num(x) and 0 < x < 1), "list of numbers in (0, 1)", [0.05, 0.1]),
        "gaps": (_list_of(lambda x: _num(x) and 0 < x <= 2), "list of numbers in (0, 2]", [0.1, 0.3]),
        "trials": (lambda v: _int(v) and v >= 1, "int >= 1", 2000),
        "noise": (_one_of("uniform", "clipped_gaussian", "none"),
                  "uniform | clipped_gaussian | none", "uniform"),
        "sigma": (_pos, "number > 0", 0.5),
        "eta_L": (_pos, "number > 0", 1.0),
        "max_steps": (lambda v: _int(v) and v >= 1, "int >= 1", 1_000_000),
    },
}

TOP_LEVEL = {
    "preset": (lambda v: v in PRESETS, "a preset name", None),
    "epochs": (lambda v: _int(v) and v >= 1, "int >= 1", 50),
    "seeds": (_list_of(_int), "non-empty list of ints", [0]),
    "output": (lambda v: isinstance(v, str) and v, "path string", "runs"),
}

# Main-text and supplementary hyperparameter sets, plus baselines.
PRESETS: dict[str, dict[str, dict]] = {
    "asap_default": {
        "schedule": {"kind": "exponential", "T0": 1.3, "decay": 0.95},
        "threshold": {"kind": "fixed", "theta0": 0.4},
        "grace": {"mode": "epochs", "epochs": 5},
        "pruner": {"kind": "asap"},
    },
    "asap_supplement": {
        "schedule": {"kind": "exponential", "T0": 1.6, "decay": 0.95},
        "threshold": {"kind": "fixed", "theta0": 0.4},
        "grace": {"mode": "temperature", "tau": 1.0},
        "pruner": {"kind": "asap"},
    },
    "asap_theoretical": {
        "schedule": {"kind": "theoretical", "eta_L": 1.0, "delta": 0.1},
        "threshold": {"kind": "theoretical"},
        "grace": {"mode": "epochs", "epochs": 5},
        "pruner": {"kind": "asap"},
    },
    "darts_mode": {
        "schedule": {"kind": "constant", "T0": 1.0},
        "threshold": {"kind": "none"},
        "grace": {"mode": "epochs", "epochs": 0},
        "pruner": {"kind": "darts_hard"},
    },
    "magnitude": {
        "schedule": {"kind": "exponential", "T0": 1.3, "decay": 0.95},
        "threshold": {"kind": "none"},
        "grace": {"mode": "epochs", "epochs": 5},
        "pruner": {"kind": "magnitude", "prune_start": 20, "sparsity_p": 3},
    },
    "accum_grad": {
        "schedule": {"kind": "exponential", "T0": 1.3, "decay": 0.95},
        "threshold": {"kind": "none"},
        "grace": {"mode": "epochs", "epochs": 5},
        "pruner": {"kind": "accum_grad", "prune_start": 20, "sparsity_p": 3},
    },
}


# --------------------------------------------------------------------------
# YAML with line numbers
# --------------------------------------------------------------------------


def _construct(node, path, lines):
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for k, v in node.value:
            key = _scalar(k)
            if key in out:
                raise ConfigError(f"duplicate key {key!r}", k.start_mark.line + 1)
            out[key] = _construct(v, path + (key,), lines)
            lines[path + (key,)] = k.start_mark.line + 1
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_construct(v, path + (i,), lines) for i, v in enumerate(node.value)]
    return _scalar(node)


def _scalar(node):
    return yaml.SafeLoader(yaml.serialize(node)).get_single_data()


def load_yaml(text: str) -> tuple[Any, dict]:
    """Parse YAML, returning the data and a map from key paths to line numbers."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          mark.line + 1 if mark else None) from None
    lines: dict = {}
    if node is None:
        return {}, lines
    return _construct(node, (), lines), lines


# --------------------------------------------------------------------------
# validated config
# --------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Validated configuration with every section filled in."""

    values: dict
    source: str | None = None
    preset: str | None = None

    def section(self, name: str) -> dict:
        return self.values[name]

    @property
    def epochs(self) -> int:
        return self.values["epochs"]

    @property
    def seeds(self) -> list[int]:
        return self.values["seeds"]

    @property
    def output(self) -> str:
        return self.values["output"]

    @property
    def run_name(self) -> str:
        return self.preset or "search"

    def with_preset(self, name: str) -> "RunConfig":
        """Same dataset/optimizer/cell settings with a different preset's search policy."""
        values = copy.deepcopy(self.values)
        for sec, kv in PRESETS[name].items():
            values[sec] = {**SCHEMA_DEFAULTS[sec], **kv}
        return RunConfig(values, self.source, name)

    def search_config(self, seed: int) -> SearchConfig:
        v = self.values
        sch, thr, gr, pr, opt, cell = (v["schedule"], v["threshold"], v["grace"], v["pruner"],
                                       v["optimizer"], v["cell"])
        return SearchConfig(
            epochs=v["epochs"], batch_size=opt["batch_size"], B=cell["B"], width=cell["width"],
            ops=tuple(cell["ops"]), w_lr=opt["w_lr"], w_momentum=opt["w_momentum"],
            w_weight_decay=opt["w_weight_decay"], grad_clip=opt["grad_clip"],
            alpha_lr=opt["alpha_lr"], alpha_betas=tuple(opt["alpha_betas"]),
            schedule=sch["kind"], T0=sch["T0"], decay=sch["decay"], eta_L=sch["eta_L"],
            delta=sch["delta"], nu=sch["nu"], granularity=sch["granularity"],
            threshold=thr["kind"], theta0=thr["theta0"], grace_mode=gr["mode"],
            grace_epochs=gr["epochs"], tau=math.inf if gr["tau"] is None else gr["tau"],
            pruner=pr["kind"], sparsity_p=pr["sparsity_p"], prune_start=pr["prune_start"],
            top_k=pr["top_k"], seed=seed)

    def child_config(self) -> ChildConfig:
        return ChildConfig(**self.values["child"])


SCHEMA_DEFAULTS = {sec: {k: copy.deepcopy(spec[2]) for k, spec in keys.items()}
                   for sec, keys in SCHEMA.items()}


def validate(raw: Any, lines: dict | None = None, source: str | None = None,
             require: tuple[str, ...] = ()) -> RunConfig:
    lines = lines or {}

    def fail(msg, path):
        line = None
        for k in range(len(path), -1, -1):
            if path[:k] in lines:
                line = lines[path[:k]]
                break
        raise ConfigError(msg, line, source)

    if not isinstance(raw, dict):
        fail("configuration must be a mapping of sections", ())
    for key, val in raw.items():
        if key in TOP_LEVEL:
            check, desc, _ = TOP_LEVEL[key]
            if not check(val):
                fail(f"'{key}' must be {desc}, got {val!r}", (key,))
        elif key in SCHEMA:
            if val is None:
                val = raw[key] = {}
            if not isinstance(val, dict):
                fail(f"section '{key}' must be a mapping", (key,))
            for sub, sval in val.items():
                if sub not in SCHEMA[key]:
                    fail(f"unknown key '{sub}' in section '{key}'; allowed: {sorted(SCHEMA[key])}",
                         (key, sub))
                check, desc, _ = SCHEMA[key][sub]
                if not check(sval):
                    fail(f"'{key}.{sub}' must be {desc}, got {sval!r}", (key, sub))
        else:
            fail(f"unknown section '{key}'; allowed: {sorted(list(TOP_LEVEL) + list(SCHEMA))}", (key,))

    for name in require:
        if name not in raw:
            raise ConfigError(f"missing required section '{name}'", None, source)

    preset = raw.get("preset")
    values = {k: spec[2] for k, spec in TOP_LEVEL.items()}
    values.update(copy.deepcopy(SCHEMA_DEFAULTS))
    if preset:
        for sec, kv in PRESETS[preset].items():
            values[sec].update(kv)
    for key, val in raw.items():
        if key in SCHEMA:
            values[key].update(copy.deepcopy(val))
        else:
            values[key] = copy.deepcopy(val)
    cfg = RunConfig(values, source, preset)
    if "compare" in raw and values["compare"]["runs"] is None:
        fail("section 'compare' needs 'runs'", ("compare",))
    try:
        if "dataset" in raw:
            cfg.search_config(cfg.seeds[0])
    except ValueError as exc:
        fail(str(exc), ())
    return cfg


def load_config(path, require: tuple[str, ...] = ()) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    raw, lines = load_yaml(text)
    try:
        return validate(raw, lines, str(path), require)
    except ConfigError:
        raise

"""Run configuration: INI files with one section per pipeline stage.

Every key is optional; missing keys take the desk-scale defaults below.
Example::

    [run]
    seed = 7
    objects = bent_pipe, cinder_block, pulley
    output_dir = out

    [primitives]
    counts = bent_pipe:145, cinder_block:141, pulley:118

    [planner]
    threshold = percentile(60)
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError, ValidationError
from .evaluation import EvalParams
from .pipeline import PlannerParams, ThresholdPolicy, TrialParams, Workspace
from .vae import Architecture, TrainConfig

DEFAULT_COUNTS = {"bent_pipe": 145, "cinder_block": 141, "pulley": 118}
DEFAULT_HGG_KL = 0.1
DEFAULT_QGG_KL = 0.01


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    objects: tuple = ("bent_pipe", "cinder_block", "pulley")
    output_dir: str = "run"
    workers: int = 1
    primitive_counts: dict = field(default_factory=lambda: dict(DEFAULT_COUNTS))
    primitive_per_type: int = 40
    per_stable: int = 200
    hgg_arch: Architecture = Architecture("hgg")
    qgg_arch: Architecture = Architecture("qgg")
    hgg_train: TrainConfig = TrainConfig(kl_weight=DEFAULT_HGG_KL)
    qgg_train: TrainConfig = TrainConfig(kl_weight=DEFAULT_QGG_KL)
    threshold: ThresholdPolicy = ThresholdPolicy("percentile", 60.0)
    planner: PlannerParams = PlannerParams()
    trials: TrialParams = TrialParams()
    workspace: Workspace = Workspace()
    eval: EvalParams = EvalParams()

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        if self.per_stable < 0 or self.primitive_per_type < 1:
            raise ConfigError("per_stable must be non-negative and per_type positive")
        if not self.objects:
            raise ConfigError("no objects selected")
        if not (self.eval.mu > 0 and self.eval.force_budget > 0 and 0 <= self.eval.noise_amplitude <= 0.5):
            raise ConfigError("need mu > 0, force_budget > 0 and noise_amplitude in [0, 0.5]")
        for name, n in self.primitive_counts.items():
            if n < 1:
                raise ConfigError(f"primitive count for {name} must be positive")

    @classmethod
    def full_scale(cls, **overrides) -> "RunConfig":
        """Larger extension and trial counts matching the original experiments."""
        return replace(cls(per_stable=2000, trials=TrialParams(per_stable=1000)), **overrides)

    def primitive_count(self, name: str) -> int:
        return self.primitive_counts.get(name, 120)

    @property
    def output_path(self) -> Path:
        return Path(self.output_dir)


def _floats(text: str, n: int, key: str) -> tuple:
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected {n} comma separated numbers") from None
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} comma separated numbers")
    return vals


def _counts(text: str) -> dict:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, _, n = item.partition(":")
        try:
            out[name.strip()] = int(n)
        except ValueError:
            raise ConfigError(f"primitives.counts: bad entry {item!r}") from None
    return out


def _train(section, base: TrainConfig) -> TrainConfig:
    kw = {}
    for f in fields(TrainConfig):
        if f.name in section:
            kw[f.name] = section.getint(f.name) if f.type in ("int", int) else section.getfloat(f.name)
    return replace(base, **kw)


def _arch(section, base: Architecture) -> Architecture:
    kw = {}
    if "input_width" in section:
        kw["input_width"] = section.getint("input_width")
    if "output_width" in section:
        kw["output_width"] = section.getint("output_width")
    if "main_widths" in section:
        kw["main_widths"] = tuple(int(v) for v in section["main_widths"].split(","))
    return replace(base, **kw)


KNOWN = {
    "run": {"seed", "objects", "output_dir", "workers"},
    "primitives": {"counts", "per_type"},
    "extend": {"per_stable"},
    "hgg": {f.name for f in fields(TrainConfig)} | {"input_width", "output_width", "main_widths"},
    "qgg": {f.name for f in fields(TrainConfig)} | {"input_width", "output_width", "main_widths"},
    "planner": {"threshold", "candidates", "sample_cap"},
    "trials": {"per_stable", "square", "center"},
    "workspace": {"lo", "hi"},
    "eval": {"mu", "force_budget", "gravity", "noise_amplitude"},
}


def parse_config(text: str, base: RunConfig = RunConfig()) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
        for sec in cp.sections():
            if sec not in KNOWN:
                raise ConfigError(f"unknown section [{sec}]")
            unknown = set(cp[sec]) - KNOWN[sec]
            if unknown:
                raise ConfigError(f"unknown key(s) in [{sec}]: {', '.join(sorted(unknown))}")
        return _build(cp, base)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0]) from None
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def _build(cp, base: RunConfig) -> RunConfig:
    kw = {}
    sec = cp["run"] if cp.has_section("run") else {}
    if "seed" in sec:
        kw["seed"] = sec.getint("seed")
    if "objects" in sec:
        kw["objects"] = tuple(s.strip() for s in sec["objects"].split(",") if s.strip())
    if "output_dir" in sec:
        kw["output_dir"] = sec["output_dir"]
    if "workers" in sec:
        kw["workers"] = sec.getint("workers")
    if cp.has_section("primitives"):
        s = cp["primitives"]
        if "counts" in s:
            kw["primitive_counts"] = {**base.primitive_counts, **_counts(s["counts"])}
        if "per_type" in s:
            kw["primitive_per_type"] = s.getint("per_type")
    if cp.has_section("extend") and "per_stable" in cp["extend"]:
        kw["per_stable"] = cp["extend"].getint("per_stable")
    for name in ("hgg", "qgg"):
        if cp.has_section(name):
            kw[f"{name}_train"] = _train(cp[name], getattr(base, f"{name}_train"))
            kw[f"{name}_arch"] = _arch(cp[name], getattr(base, f"{name}_arch"))
    if cp.has_section("planner"):
        s = cp["planner"]
        if "threshold" in s:
            kw["threshold"] = ThresholdPolicy.parse(s["threshold"])
        kw["planner"] = PlannerParams(s.getint("candidates", base.planner.candidates),
                                      s.getint("sample_cap", base.planner.sample_cap))
    if cp.has_section("trials"):
        s = cp["trials"]
        center = _floats(s["center"], 2, "trials.center") if "center" in s else base.trials.center
        kw["trials"] = TrialParams(s.getint("per_stable", base.trials.per_stable),
                                   s.getfloat("square", base.trials.square), center)
    if cp.has_section("workspace"):
        s = cp["workspace"]
        kw["workspace"] = Workspace(_floats(s["lo"], 3, "workspace.lo") if "lo" in s else base.workspace.lo,
                                    _floats(s["hi"], 3, "workspace.hi") if "hi" in s else base.workspace.hi)
    if cp.has_section("eval"):
        s = cp["eval"]
        kw["eval"] = replace(base.eval, **{k: s.getfloat(k) for k in KNOWN["eval"] if k in s})
    try:
        return replace(base, **kw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path, base: RunConfig = RunConfig()) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, base)

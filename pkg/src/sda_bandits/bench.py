"""
Experiment orchestration: configs, seeded campaigns, summaries, emission.

A campaign runs every configured algorithm for ``runs`` independent runs.
Run ``i`` of an algorithm draws its randomness from a stream seeded with
``mix(base_seed, crc32(label), i)``, so results do not depend on how the
work is scheduled over threads.
"""
from __future__ import annotations

import csv
import json
import math
import re
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .arms import (BanditInstance, Family, bk_constant_truncated_gaussian,
                   lai_robbins_constant)
from .baselines import Besa, Imed, NonParametricTS, Phe, ReBoot, ThompsonSampling
from .samplers import Sampler
from .sda import Policy, RegretTrace, SdaConfig, SdaPolicy, run_policy

DEFAULT_CHECKPOINTS = (100, 1000, 10000, 15000, 20000)
QUANTILES = (20, 50, 80, 95, 99)
INSTANCE_TAG = 0x1D5A_B0A7  # algorithm id reserved for instance draws
_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    """Rejected configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


# --------------------------------------------------------------------------
# seeding


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def mix_seed(base_seed: int, algorithm_id: int, run_index: int) -> int:
    h = splitmix64(int(base_seed) & _MASK)
    h = splitmix64(h ^ (int(algorithm_id) & _MASK))
    return splitmix64(h ^ (int(run_index) & _MASK))


def algorithm_id(label: str) -> int:
    return zlib.crc32(label.encode())


# --------------------------------------------------------------------------
# algorithms

_SDA_NAMES = {"RB-SDA": "RB", "WR-SDA": "WR", "LB-SDA": "LB", "LDS-SDA": "LDS", "SSMC": "SSMC",
              "RB": "RB", "WR": "WR", "LB": "LB", "LDS": "LDS"}
_BASELINES = {"TS", "IMED", "BESA", "PHE", "REBOOT", "NPTS", "NP-TS"}


@dataclass(frozen=True)
class AlgorithmSpec:
    name: str
    params: tuple = ()  # sorted (key, value) pairs
    label: str = ""

    @classmethod
    def parse(cls, entry, where: str = "algorithms") -> "AlgorithmSpec":
        if isinstance(entry, str):
            entry = {"name": entry}
        if not isinstance(entry, dict) or "name" not in entry:
            raise ConfigError(where, "each algorithm needs a name")
        entry = dict(entry)
        name = str(entry.pop("name")).strip()
        label = str(entry.pop("label", ""))
        key = name.upper()
        if key not in _SDA_NAMES and key not in _BASELINES:
            raise ConfigError(f"{where}.name", f"unknown algorithm {name!r}")
        allowed = ({"forced_exploration", "binarized", "ties_to_challenger"} if key in _SDA_NAMES
                   else {"a", "sigma", "upper_bound", "binarized"})
        bad = set(entry) - allowed
        if bad:
            raise ConfigError(f"{where}.{sorted(bad)[0]}", f"not a parameter of {name}")
        return cls(name, tuple(sorted(entry.items())), label)

    def to_dict(self) -> dict:
        d = {"name": self.name, **dict(self.params)}
        if self.label:
            d["label"] = self.label
        return d


def make_policy(spec: AlgorithmSpec, family: Family, sigma: float = 1.0) -> Policy:
    """Instantiate a policy; TS on truncated Gaussian arms is Beta TS on binarized rewards."""
    p = dict(spec.params)
    key = spec.name.upper()
    if key in _SDA_NAMES:
        return SdaPolicy(SdaConfig(Sampler.parse(_SDA_NAMES[key]), **p))
    if key == "TS":
        if family is Family.TRUNCATED_GAUSSIAN:
            return ThompsonSampling("bernoulli", binarized=p.get("binarized", True))
        return ThompsonSampling(family, sigma=p.get("sigma", sigma),
                                binarized=p.get("binarized", False))
    if key == "IMED":
        return Imed(family, sigma=p.get("sigma", sigma))
    if key == "BESA":
        return Besa()
    if key == "PHE":
        return Phe(a=p.get("a", 1.1))
    if key == "REBOOT":
        return ReBoot(sigma=p.get("sigma", 1.5))
    return NonParametricTS(upper_bound=p.get("upper_bound", 1.0))


def algorithm_label(spec: AlgorithmSpec, family: Family, sigma: float = 1.0) -> str:
    if spec.label:
        return spec.label
    pol = make_policy(spec, family, sigma)
    if isinstance(pol, SdaPolicy) or not spec.params:
        return pol.name
    return pol.name + "(" + ",".join(f"{k}={v}" for k, v in spec.params) + ")"


# --------------------------------------------------------------------------
# configuration

_PRIOR_RE = re.compile(r"^\s*(uniform|normal)\s*[\[(]\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*[\])]\s*$")


@dataclass(frozen=True)
class Prior:
    kind: str  # "uniform", "normal" or "point"
    a: float = 0.0
    b: float = 1.0
    point: tuple = ()

    @classmethod
    def parse(cls, value) -> "Prior":
        if isinstance(value, (list, tuple)):
            return cls("point", point=tuple(float(v) for v in value))
        m = _PRIOR_RE.match(str(value))
        if not m:
            raise ConfigError("prior", f"unsupported prior {value!r}; "
                                       "use uniform[a,b], normal(m,s) or a list of means")
        return cls(m.group(1), float(m.group(2)), float(m.group(3)))

    def to_value(self):
        if self.kind == "point":
            return list(self.point)
        return f"uniform[{self.a},{self.b}]" if self.kind == "uniform" else f"normal({self.a},{self.b})"

    def check(self, family: Family):
        if self.kind == "point":
            lo, hi = (min(self.point), max(self.point)) if self.point else (0.0, 0.0)
        elif self.kind == "uniform":
            if not self.a < self.b:
                raise ConfigError("prior", "uniform prior needs a < b")
            lo, hi = self.a, self.b
        else:
            if self.b <= 0:
                raise ConfigError("prior", "normal prior needs a positive scale")
            lo, hi = -math.inf, math.inf
        if family is Family.BERNOULLI and not (0 <= lo and hi <= 1):
            raise ConfigError("prior", "Bernoulli means must lie in [0, 1]")
        if family in (Family.POISSON, Family.EXPONENTIAL) and not lo > 0:
            raise ConfigError("prior", f"{family.name.lower()} means must be positive")

    def draw(self, K: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "point":
            return np.array(self.point)
        if self.kind == "uniform":
            return rng.uniform(self.a, self.b, size=K)
        return rng.normal(self.a, self.b, size=K)


@dataclass(frozen=True)
class ExperimentConfig:
    family: Family
    algorithms: tuple
    horizon: int
    means: tuple = ()
    prior: Prior | None = None
    K: int = 0
    sigma: float = 1.0
    runs: int = 1000
    checkpoints: tuple = ()
    base_seed: int = 0
    output_path: str | None = None

    def __post_init__(self):
        try:
            fam = Family.parse(self.family)
        except ValueError as exc:
            raise ConfigError("family", str(exc)) from None
        object.__setattr__(self, "family", fam)
        if not self.algorithms:
            raise ConfigError("algorithms", "at least one algorithm is required")
        algs = tuple(a if isinstance(a, AlgorithmSpec) else AlgorithmSpec.parse(a, f"algorithms[{i}]")
                     for i, a in enumerate(self.algorithms))
        object.__setattr__(self, "algorithms", algs)
        if not (isinstance(self.sigma, (int, float)) and self.sigma > 0):
            raise ConfigError("sigma", "must be a positive number")
        object.__setattr__(self, "means", tuple(float(m) for m in self.means))
        if self.prior is not None and not isinstance(self.prior, Prior):
            object.__setattr__(self, "prior", Prior.parse(self.prior))
        if self.prior is None:
            if len(self.means) < 2:
                raise ConfigError("means", "need at least two arm means (or a prior)")
            try:
                BanditInstance.from_means(fam, self.means, self.sigma)
            except ValueError as exc:
                raise ConfigError("means", str(exc)) from None
            object.__setattr__(self, "K", len(self.means))
        else:
            self.prior.check(fam)
            K = len(self.prior.point) if self.prior.kind == "point" else int(self.K)
            if K < 2:
                raise ConfigError("K", "a prior needs the number of arms K >= 2")
            object.__setattr__(self, "K", K)
        if not isinstance(self.horizon, int) or self.horizon < self.K:
            raise ConfigError("horizon", f"must be an integer >= K={self.K}")
        if not isinstance(self.runs, int) or self.runs < 1:
            raise ConfigError("runs", "must be a positive integer")
        cps = tuple(int(c) for c in self.checkpoints) or tuple(
            c for c in DEFAULT_CHECKPOINTS if c < self.horizon) + (self.horizon,)
        if any(b < a for a, b in zip(cps, cps[1:])) or cps[0] < 1 or cps[-1] > self.horizon:
            raise ConfigError("checkpoints", f"must be sorted within [1, {self.horizon}]")
        object.__setattr__(self, "checkpoints", cps)
        object.__setattr__(self, "base_seed", int(self.base_seed) & _MASK)
        labels = [self.label(a) for a in algs]
        if len(set(labels)) != len(labels):
            raise ConfigError("algorithms", "duplicate algorithm labels")

    def label(self, spec: AlgorithmSpec) -> str:
        try:
            return algorithm_label(spec, self.family, self.sigma)
        except ValueError as exc:
            raise ConfigError("algorithms", f"{spec.name}: {exc}") from None

    @property
    def labels(self) -> list:
        return [self.label(a) for a in self.algorithms]

    def instance(self) -> BanditInstance:
        return BanditInstance.from_means(self.family, self.means, self.sigma)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config", "expected a mapping at the top level")
        known = {"family", "algorithms", "horizon", "means", "prior", "K", "sigma", "runs",
                 "checkpoints", "base_seed", "output_path"}
        for k in d:
            if k not in known:
                raise ConfigError(str(k), "unknown field")
        for k in ("family", "algorithms", "horizon"):
            if k not in d:
                raise ConfigError(k, "missing required field")
        return cls(**d)

    def to_dict(self) -> dict:
        d = {"family": self.family.name.lower(), "horizon": self.horizon, "runs": self.runs,
             "sigma": self.sigma, "checkpoints": list(self.checkpoints),
             "base_seed": self.base_seed,
             "algorithms": [a.to_dict() for a in self.algorithms]}
        if self.prior is None:
            d["means"] = list(self.means)
        else:
            d["prior"] = self.prior.to_value()
            d["K"] = self.K
        if self.output_path is not None:
            d["output_path"] = self.output_path
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(changes)
        return ExperimentConfig.from_dict(d)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"invalid YAML: {exc}") from None
    return ExperimentConfig.from_dict(data)


# --------------------------------------------------------------------------
# summaries


@dataclass
class AlgorithmSummary:
    checkpoints: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    quantiles: np.ndarray  # shape (len(QUANTILES), len(checkpoints))
    lower_bound_constant: float
    runs: int

    @classmethod
    def from_traces(cls, traces, lb_constant: float) -> "AlgorithmSummary":
        R = np.stack([tr.regrets for tr in traces])
        return cls(np.asarray(traces[0].checkpoints), R.mean(axis=0), R.std(axis=0),
                   np.percentile(R, QUANTILES, axis=0), float(lb_constant), len(traces))

    @property
    def final_mean(self) -> float:
        return float(self.mean[-1])

    def quantile(self, q: int) -> np.ndarray:
        return self.quantiles[QUANTILES.index(q)]

    def to_dict(self) -> dict:
        return {"checkpoints": [int(c) for c in self.checkpoints],
                "mean": [float(v) for v in self.mean], "std": [float(v) for v in self.std],
                "quantiles": {str(q): [float(v) for v in row]
                              for q, row in zip(QUANTILES, self.quantiles)},
                "lower_bound_constant": _json_float(self.lower_bound_constant),
                "runs": self.runs}

    @classmethod
    def from_dict(cls, d: dict) -> "AlgorithmSummary":
        return cls(np.array(d["checkpoints"], dtype=np.int64), np.array(d["mean"]),
                   np.array(d["std"]), np.array([d["quantiles"][str(q)] for q in QUANTILES]),
                   float(d["lower_bound_constant"]), int(d["runs"]))


def _json_float(x: float):
    return float(x) if math.isfinite(x) else None if math.isnan(x) else str(x)


@dataclass
class Summary:
    algorithms: dict = field(default_factory=dict)  # label -> AlgorithmSummary

    def __getitem__(self, label) -> AlgorithmSummary:
        return self.algorithms[label]

    def to_dict(self) -> dict:
        return {label: s.to_dict() for label, s in self.algorithms.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "Summary":
        fixed = {}
        for label, s in d.items():
            s = dict(s)
            lb = s["lower_bound_constant"]
            s["lower_bound_constant"] = math.nan if lb is None else float(lb)
            fixed[label] = AlgorithmSummary.from_dict(s)
        return cls(fixed)

    def __eq__(self, other):
        return isinstance(other, Summary) and self.to_dict() == other.to_dict()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    summary: Summary
    traces: dict  # label -> list[RegretTrace] sorted by run index


def lower_bound_constant(instance: BanditInstance) -> float:
    """Lai-Robbins constant, or the Burnetas-Katehakis one for truncated Gaussian arms."""
    fam = instance.family
    if fam is None:
        raise ValueError("lower bound needs a homogeneous family")
    if fam is Family.TRUNCATED_GAUSSIAN:
        return bk_constant_truncated_gaussian(instance)
    return lai_robbins_constant(instance)


def lower_bound_curve(instance: BanditInstance, t_grid) -> list:
    C = lower_bound_constant(instance)
    return [(int(t), C * math.log(t)) for t in t_grid]


# --------------------------------------------------------------------------
# campaigns


def _run_task(policy_factory, instance, horizon, checkpoints, seed, run_index):
    return run_policy(policy_factory(), instance, horizon, checkpoints,
                      np.random.default_rng(seed), run_index=run_index)


def _campaign(config: ExperimentConfig, instances, threads: int | None):
    """Run every (algorithm, run) task; ``instances[i]`` is the instance for run i."""
    tasks = []
    for spec in config.algorithms:
        label = config.label(spec)
        aid = algorithm_id(label)
        for i in range(config.runs):
            seed = mix_seed(config.base_seed, aid, i)
            factory = (lambda s=spec: make_policy(s, config.family, config.sigma))
            tasks.append((label, i, factory, seed))
    cp = list(config.checkpoints)

    def go(task):
        label, i, factory, seed = task
        return label, _run_task(factory, instances[i], config.horizon, cp, seed, i)

    if threads is not None and threads <= 1:
        out = [go(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(go, tasks))
    traces = {config.label(s): [] for s in config.algorithms}
    for label, tr in out:
        traces[label].append(tr)
    for label in traces:
        traces[label].sort(key=lambda tr: tr.run_index)
    return traces


def run_experiment(config: ExperimentConfig, threads: int | None = 1) -> ExperimentResult:
    """Fixed-instance campaign. The summary is independent of ``threads``."""
    if config.prior is not None:
        raise ConfigError("means", "fixed-instance campaigns need explicit means")
    inst = config.instance()
    traces = _campaign(config, [inst] * config.runs, threads)
    try:
        lb = lower_bound_constant(inst)
    except ValueError:
        lb = math.nan
    summary = Summary({label: AlgorithmSummary.from_traces(trs, lb)
                       for label, trs in traces.items()})
    return ExperimentResult(config, summary, traces)


def draw_instances(config: ExperimentConfig) -> list:
    prior = config.prior
    out = []
    for i in range(config.runs):
        rng = np.random.default_rng(mix_seed(config.base_seed, INSTANCE_TAG, i))
        out.append(BanditInstance.from_means(config.family, prior.draw(config.K, rng),
                                             config.sigma))
    return out


def run_bayesian_experiment(config: ExperimentConfig,
                            threads: int | None = 1) -> ExperimentResult:
    """Random-instance campaign: run i of every algorithm faces instance i.

    The lower-bound constant is the average over instances.
    """
    if config.prior is None:
        raise ConfigError("prior", "Bayesian campaigns need a prior")
    instances = draw_instances(config)
    traces = _campaign(config, instances, threads)
    try:
        lb = float(np.mean([lower_bound_constant(inst) for inst in instances]))
    except ValueError:
        lb = math.nan
    summary = Summary({label: AlgorithmSummary.from_traces(trs, lb)
                       for label, trs in traces.items()})
    return ExperimentResult(config, summary, traces)


# --------------------------------------------------------------------------
# emission


class EmitError(ValueError):
    pass


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="")
    except OSError as exc:
        raise EmitError(f"output_path: cannot write {path}: {exc.strerror}") from None


def write_traces_csv(result: ExperimentResult, path) -> Path:
    path = Path(path)
    if not any(result.traces.values()):
        raise EmitError("nothing to emit")
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "run", "t", "regret"])
        for label, trs in result.traces.items():
            for tr in trs:
                for t, reg in zip(tr.checkpoints, tr.regrets):
                    w.writerow([label, tr.run_index, int(t), repr(float(reg))])
    return path


def summary_document(result: ExperimentResult) -> dict:
    return {"version": __version__, "seed": result.config.base_seed,
            "config": result.config.to_dict(), "summary": result.summary.to_dict()}


def write_summary_json(result: ExperimentResult, path) -> Path:
    path = Path(path)
    if not result.summary.algorithms:
        raise EmitError("nothing to emit")
    doc = summary_document(result)
    with _open_for_write(path) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_summary_json(path) -> tuple:
    """Inverse of :func:`write_summary_json`: returns (config, summary)."""
    doc = json.loads(Path(path).read_text())
    return ExperimentConfig.from_dict(doc["config"]), Summary.from_dict(doc["summary"])


def emit(result: ExperimentResult, path, fmt: str = "csv") -> Path:
    """Write traces (csv) or the summary document (json) to ``path``."""
    if fmt == "csv":
        return write_traces_csv(result, path)
    if fmt == "json":
        return write_summary_json(result, path)
    raise EmitError(f"format must be csv or json, got {fmt!r}")


# --------------------------------------------------------------------------
# the reference experiment grid

_SDA = ["RB-SDA", "WR-SDA", "LB-SDA", "LDS-SDA", "SSMC"]

PRESETS = {
    "bernoulli-1": dict(family="bernoulli", means=[0.8, 0.9]),
    "bernoulli-2": dict(family="bernoulli", means=[0.5, 0.6]),
    "bernoulli-3": dict(family="bernoulli",
                        means=[0.1, 0.01, 0.01, 0.01, 0.03, 0.03, 0.03, 0.05, 0.05, 0.05]),
    "bernoulli-4": dict(family="bernoulli", means=[0.9] + [0.85] * 7),
    "gaussian-1": dict(family="gaussian", means=[0.5, 0.0]),
    "gaussian-2": dict(family="gaussian", means=[0.5, 0.0, 0.0, 0.0]),
    "gaussian-3": dict(family="gaussian", means=[1.5, 1.0, 0.5, 0.0]),
    "tg-1": dict(family="truncated_gaussian", means=[0.5, 0.6], sigma=0.1),
    "tg-2": dict(family="truncated_gaussian", means=[0.0, 0.2], sigma=0.3),
    "tg-3": dict(family="truncated_gaussian", means=[1.5, 2.0], sigma=1.0),
    "tg-4": dict(family="truncated_gaussian", means=[0.4, 0.5, 0.6, 0.7], sigma=1.0),
    "exponential-1": dict(family="exponential", means=[1.5, 1.0]),
    "exponential-2": dict(family="exponential", means=[0.2, 0.1]),
    "exponential-3": dict(family="exponential", means=[11.0, 10.0]),
    "exponential-4": dict(family="exponential", means=[4.0, 3.0, 2.0, 1.0]),
    "exponential-5": dict(family="exponential", means=[0.4, 0.3, 0.2, 0.1]),
    "exponential-6": dict(family="exponential", means=[5.0, 4.0, 4.0, 4.0]),
    "bayes-bernoulli": dict(family="bernoulli", prior="uniform[0,1]", K=10),
    "bayes-gaussian": dict(family="gaussian", prior="normal(0,1)", K=10),
}

_PRESET_ALGORITHMS = {
    "bernoulli": ["TS", {"name": "PHE", "a": 1.1}, "BESA"] + _SDA,
    "gaussian": ["TS", {"name": "ReBoot", "sigma": 1.5}, "BESA"] + _SDA,
    "truncated_gaussian": ["TS", "NPTS", {"name": "PHE", "a": 1.1}, "BESA"] + _SDA,
    "exponential": ["IMED", "BESA"] + _SDA,
}


def preset(name: str, **overrides) -> ExperimentConfig:
    """One of the reference experiments as a config (T=20000, 1000 runs by default)."""
    if name not in PRESETS:
        raise ConfigError("config", f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    d = {"horizon": 20000, "runs": 1000, "base_seed": 20201206, **PRESETS[name]}
    d.setdefault("algorithms", _PRESET_ALGORITHMS[Family.parse(d["family"]).name.lower()])
    d.update(overrides)
    return ExperimentConfig.from_dict(d)

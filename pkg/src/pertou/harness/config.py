"""Strict YAML experiment configuration.

Every block is checked against a fixed set of keys; anything unknown is an
error naming its full path.  The seed has no default.

Schema (keys marked * are required)::

    experiment: <registered name>
    operator:*   {A*, B*, alpha, horizon, spectral: {kind*, atoms, weights, mass}}
    schedule:    {kind*: zero|constant|piecewise|alternating,
                  value, breakpoints, values, matrices, switches}
    source:      {breakpoints, pieces: [[term, ...], ...]} or {terms: [term, ...]}
                 term = {family*: gaussian_bump|cos_window|polynomial_window|constant, ...}
    norms:       {beta, p, quad: {...}, grid: {half_width, nodes, center},
                  lattice: {extents, nodes}, times}
    mc:*         {seed*, samples, nsteps, n_time, block_size, threads}
    probes:      [{t*, x*}, ...]
    outputs:     {path, format: csv}
    settings:    experiment-specific options (see the experiment registry)
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from ..levy import SpectralMeasure
from ..norms import FracQuad, NormConfig
from ..perturb import PerturbationSchedule
from ..semigroup import MCParams
from ..sources import SourceFunction, make_term
from ..structure import OperatorSpec, ValidationError


class ConfigError(ValidationError):
    """Invalid configuration; the message names the offending field."""


TERM_PARAMS = {
    "gaussian_bump": ({"center"}, {"amplitude", "cov", "width"}),
    "cos_window": ({"wavevector", "center", "radius"}, {"amplitude", "phase"}),
    "polynomial_window": ({"monomials", "coefficients", "center", "radius"}, set()),
    "constant": (set(), {"value"}),
}

SCHEDULE_KEYS = {
    "zero": set(),
    "constant": {"value"},
    "piecewise": {"breakpoints", "values"},
    "alternating": {"matrices", "switches"},
}


def _block(raw, path: str, required=(), optional=()) -> dict:
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(raw).__name__}")
    allowed = set(required) | set(optional)
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key (allowed: {', '.join(sorted(allowed))})")
    for key in required:
        if key not in raw:
            raise ConfigError(f"{path}.{key}: required key missing")
    return raw


def _matrix(raw, path: str, N: Optional[int] = None) -> np.ndarray:
    try:
        M = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric matrix ({exc})") from None
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"{path}: expected a square matrix, got shape {M.shape}")
    if N is not None and M.shape[0] != N:
        raise ConfigError(f"{path}: expected {N}x{N}, got {M.shape}")
    return M


def _vector(raw, path: str, N: Optional[int] = None) -> np.ndarray:
    try:
        v = np.atleast_1d(np.array(raw, dtype=float))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a numeric vector ({exc})") from None
    if v.ndim != 1 or (N is not None and len(v) != N):
        raise ConfigError(f"{path}: expected a vector of length {N}, got shape {v.shape}")
    return v


def _number(raw, path: str, kind=float):
    if isinstance(raw, str):
        # PyYAML reads exponent literals without a dot (1e-4) as strings
        try:
            raw = float(raw)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {raw!r}") from None
    if isinstance(raw, bool) or not isinstance(raw, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {raw!r}")
    if kind is int and int(raw) != raw:
        raise ConfigError(f"{path}: expected an integer, got {raw!r}")
    return kind(raw)


def _wrap(path: str, fn, *args, **kwargs):
    """Re-raise library validation errors with the config path attached."""
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (ValidationError, ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_operator(raw) -> OperatorSpec:
    b = _block(raw, "operator", ["A", "B"], ["alpha", "horizon", "spectral"])
    A = _matrix(b["A"], "operator.A")
    B = _matrix(b["B"], "operator.B", A.shape[0])
    alpha = _number(b.get("alpha", 2.0), "operator.alpha")
    T = _number(b.get("horizon", 1.0), "operator.horizon")
    mu = None
    if "spectral" in b:
        s = _block(b["spectral"], "operator.spectral", ["kind"], ["atoms", "weights", "mass"])
        if s["kind"] == "isotropic_1d":
            mu = _wrap("operator.spectral", SpectralMeasure.isotropic_1d,
                       _number(s.get("mass", 1.0), "operator.spectral.mass"))
        else:
            if "atoms" not in s or "weights" not in s:
                raise ConfigError("operator.spectral: discrete kind needs atoms and weights")
            mu = _wrap("operator.spectral", SpectralMeasure.from_config,
                       s["kind"], s["atoms"], s["weights"])
    return _wrap("operator", OperatorSpec, A, B, alpha, mu, T)


def parse_schedule(raw, N: int, T: float) -> PerturbationSchedule:
    if raw is None:
        return PerturbationSchedule.zero(N, T)
    kind = raw.get("kind") if isinstance(raw, dict) else None
    if kind not in SCHEDULE_KEYS:
        raise ConfigError(f"schedule.kind: expected one of {sorted(SCHEDULE_KEYS)}, got {kind!r}")
    b = _block(raw, "schedule", ["kind"] + sorted(SCHEDULE_KEYS[kind]))
    if kind == "zero":
        return PerturbationSchedule.zero(N, T)
    if kind == "constant":
        return _wrap("schedule", PerturbationSchedule.constant,
                     _matrix(b["value"], "schedule.value", N), T)
    if kind == "piecewise":
        vals = [_matrix(v, f"schedule.values[{j}]", N) for j, v in enumerate(b["values"])]
        bp = _vector(b["breakpoints"], "schedule.breakpoints")
        if not np.isclose(bp[-1], T):
            raise ConfigError(f"schedule.breakpoints: must end at the horizon {T}")
        return _wrap("schedule", PerturbationSchedule, bp, np.array(vals))
    mats = [_matrix(v, f"schedule.matrices[{j}]", N) for j, v in enumerate(b["matrices"])]
    switches = _number(b["switches"], "schedule.switches", int)
    if switches < 0:
        raise ConfigError("schedule.switches: must be non-negative")
    return _wrap("schedule", PerturbationSchedule.alternating, mats, switches, T)


def parse_term(raw, path: str, N: int):
    fam = raw.get("family") if isinstance(raw, dict) else None
    if fam not in TERM_PARAMS:
        raise ConfigError(f"{path}.family: unknown family {fam!r} "
                          f"(known: {', '.join(sorted(TERM_PARAMS))})")
    req, opt = TERM_PARAMS[fam]
    b = _block(raw, path, ["family"] + sorted(req), sorted(opt))
    params = {k: v for k, v in b.items() if k != "family"}
    for key in ("center", "wavevector"):
        if key in params:
            _vector(params[key], f"{path}.{key}", N)
    return _wrap(path, make_term, fam, N, **params)


def parse_source(raw, N: int, T: float) -> SourceFunction:
    if raw is None:
        return SourceFunction.zero(N)
    b = _block(raw, "source", [], ["breakpoints", "pieces", "terms"])
    if ("pieces" in b) == ("terms" in b):
        raise ConfigError("source: give exactly one of 'pieces' or 'terms'")
    if "terms" in b:
        terms = [parse_term(t, f"source.terms[{j}]", N) for j, t in enumerate(b["terms"])]
        bp = _vector(b.get("breakpoints", [0.0, T]), "source.breakpoints")
        if len(bp) != 2:
            raise ConfigError("source.breakpoints: 'terms' form takes one interval [t0, t1]")
        return _wrap("source", SourceFunction, N, [(bp[0], bp[1], terms)])
    bp = _vector(b.get("breakpoints", [0.0, T]), "source.breakpoints")
    if len(b["pieces"]) != len(bp) - 1:
        raise ConfigError(f"source.pieces: {len(bp) - 1} intervals need as many term lists, "
                          f"got {len(b['pieces'])}")
    if bp[0] < 0.0 or bp[-1] > T + 1e-12:
        raise ConfigError(f"source.breakpoints: must lie in [0, {T}]")
    pieces = []
    for j, terms in enumerate(b["pieces"]):
        built = [parse_term(t, f"source.pieces[{j}][{i}]", N) for i, t in enumerate(terms)]
        pieces.append((float(bp[j]), float(bp[j + 1]), built))
    return _wrap("source", SourceFunction, N, pieces)


@dataclass(frozen=True)
class NormSettings:
    """Norm exponents plus the sampling lattices used by the ratio experiments."""

    config: NormConfig
    grid_half_width: float = 2.5
    grid_nodes: int = 17
    grid_center: Optional[tuple] = None
    lattice_extents: Optional[tuple] = None
    lattice_nodes: Optional[tuple] = None
    times: Optional[tuple] = None


def parse_norms(raw, alpha: float, T: float) -> NormSettings:
    b = _block(raw or {}, "norms", [], ["alpha", "beta", "p", "quad", "grid", "lattice", "times"])
    if "alpha" in b and _number(b["alpha"], "norms.alpha") != alpha:
        raise ConfigError(f"norms.alpha: must equal operator.alpha = {alpha}")
    q = _block(b.get("quad", {}), "norms.quad", [],
               ["r_min", "r_max", "order", "per_decade", "max_width", "n_angles"])
    quad = _wrap("norms.quad", FracQuad, **q)
    cfg = _wrap("norms", NormConfig, alpha, _number(b.get("beta", 0.5), "norms.beta"),
                _number(b.get("p", 2.0), "norms.p"), quad)
    g = _block(b.get("grid", {}), "norms.grid", [], ["half_width", "nodes", "center"])
    lat = _block(b.get("lattice", {}), "norms.lattice", [], ["extents", "nodes"])
    if ("extents" in lat) != ("nodes" in lat):
        raise ConfigError("norms.lattice: give both extents and nodes")
    times = None
    if "times" in b:
        times = tuple(_vector(b["times"], "norms.times"))
        if min(times) <= 0.0 or max(times) > T:
            raise ConfigError(f"norms.times: must lie in (0, {T}]")
    return NormSettings(
        cfg,
        _number(g.get("half_width", 2.5), "norms.grid.half_width"),
        _number(g.get("nodes", 17), "norms.grid.nodes", int),
        None if "center" not in g else tuple(_vector(g["center"], "norms.grid.center")),
        None if "extents" not in lat else tuple(_vector(lat["extents"], "norms.lattice.extents")),
        None if "nodes" not in lat else tuple(int(n) for n in _vector(lat["nodes"], "norms.lattice.nodes")),
        times,
    )


def parse_mc(raw) -> MCParams:
    b = _block(raw, "mc", ["seed"], ["samples", "nsteps", "n_time", "block_size", "threads"])
    vals = {k: _number(v, f"mc.{k}", int) for k, v in b.items()}
    return _wrap("mc", MCParams, **vals)


def parse_probes(raw, N: int, T: float) -> list:
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise ConfigError("probes: expected a list of {t, x}")
    out = []
    for j, p in enumerate(raw):
        b = _block(p, f"probes[{j}]", ["t", "x"])
        t = _number(b["t"], f"probes[{j}].t")
        if not 0.0 <= t <= T:
            raise ConfigError(f"probes[{j}].t: must lie in [0, {T}]")
        out.append((t, _vector(b["x"], f"probes[{j}].x", N)))
    return out


@dataclass(frozen=True)
class Outputs:
    path: Optional[str] = None
    format: str = "csv"


def parse_outputs(raw) -> Outputs:
    b = _block(raw or {}, "outputs", [], ["path", "format"])
    fmt = b.get("format", "csv")
    if fmt != "csv":
        raise ConfigError(f"outputs.format: only 'csv' is supported, got {fmt!r}")
    return Outputs(b.get("path"), fmt)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Optional[str]
    operator: OperatorSpec
    schedule: PerturbationSchedule
    source: SourceFunction
    norms: NormSettings
    mc: MCParams
    probes: list
    outputs: Outputs
    settings: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def seed(self) -> int:
        return int(self.mc.seed)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["mc"]["seed"] = int(seed)
        return replace(self, mc=replace(self.mc, seed=int(seed)), raw=raw)

    def with_threads(self, threads: int) -> "ExperimentConfig":
        return replace(self, mc=_wrap("threads", replace, self.mc, threads=int(threads)))


TOP_KEYS = ["experiment", "operator", "schedule", "source", "norms", "mc", "probes",
            "outputs", "settings"]


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate a configuration tree (as loaded from YAML)."""
    b = _block(raw, "config", ["operator", "mc"], [k for k in TOP_KEYS if k not in ("operator", "mc")])
    spec = parse_operator(b["operator"])
    N, T = spec.N, spec.horizon_T
    exp = b.get("experiment")
    if exp is not None and not isinstance(exp, str):
        raise ConfigError("experiment: expected a name")
    settings = b.get("settings") or {}
    if not isinstance(settings, dict):
        raise ConfigError("settings: expected a mapping")
    return ExperimentConfig(
        experiment=exp,
        operator=spec,
        schedule=parse_schedule(b.get("schedule"), N, T),
        source=parse_source(b.get("source"), N, T),
        norms=parse_norms(b.get("norms"), spec.alpha, T),
        mc=parse_mc(b["mc"]),
        probes=parse_probes(b.get("probes"), N, T),
        outputs=parse_outputs(b.get("outputs")),
        settings=dict(settings),
        raw=copy.deepcopy(raw),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return parse_config(raw)

"""Experiment registry.

Each experiment takes a validated ``ExperimentConfig`` and returns report
rows plus named pass/fail checks.  Settings specific to an experiment live
under ``settings`` in the config; unknown settings are errors.

Every solver estimate produced here is also checked against the maximum
principle ``|u| <= T sup|f| + 3 se``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from ..levy import SpectralMeasure, levy_exponent, sample_stable_increment
from ..norms import HolderGrid, LatticeField, holder_seminorm_details, holder_separable_gaussian
from ..norms import holder_seminorm_aniso, lp_norm, sobolev_seminorm_aniso
from ..oracle import closed_form_field, gaussian_closed_form
from ..perturb import (PerturbationSchedule, build_jump_system, build_surrogate, epsilon_sweep,
                       sample_poisson_times, solve_perturbed_batch)
from ..semigroup import DuhamelField, ou_covariance
from ..sources import GaussianBump, TermSum
from ..structure import (ValidationError, check_kalman, dilation_apply, intrinsic_scaling,
                         is_dilation_invariant, parabolic_distance)
from .config import ConfigError, ExperimentConfig
from .report import ReportRow


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ExperimentResult:
    experiment: str
    rows: list
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


@dataclass(frozen=True)
class Experiment:
    name: str
    run: Callable
    defaults: dict


REGISTRY: dict = {}


def register(name: str, **defaults):
    def deco(fn):
        REGISTRY[name] = Experiment(name, fn, defaults)
        return fn
    return deco


def registered_names() -> list:
    return sorted(REGISTRY)


def resolve_settings(name: str, settings: dict) -> dict:
    exp = REGISTRY[name]
    for key in settings:
        if key not in exp.defaults:
            raise ConfigError(f"settings.{key}: unknown setting for {name} "
                              f"(allowed: {', '.join(sorted(exp.defaults))})")
    out = dict(exp.defaults)
    out.update(settings)
    return out


def run_experiment(config: ExperimentConfig, name: str = None) -> ExperimentResult:
    """Run the experiment ``name`` (default: the one named in the config)."""
    name = name or config.experiment
    if name is None:
        raise ConfigError("experiment: no experiment named in the config or on the command line")
    if name not in REGISTRY:
        raise ConfigError(f"experiment: unknown experiment {name!r}; "
                          f"registered: {', '.join(registered_names())}")
    settings = resolve_settings(name, config.settings)
    return REGISTRY[name].run(config, settings)


# ---------------------------------------------------------------------------
# shared pieces

def _bound(cfg: ExperimentConfig) -> float:
    return cfg.operator.horizon_T * cfg.source.sup_abs()


def _max_principle(values, ses, bound: float, label: str) -> Check:
    values, ses = np.abs(np.asarray(values, float)), np.asarray(ses, float)
    excess = values - (bound + 3.0 * ses)
    worst = float(excess.max()) if excess.size else -np.inf
    return Check(f"{label}: max principle", bool(worst <= 0.0),
                 f"{values.size} estimates, bound T*sup|f| = {bound:.6g}, "
                 f"worst margin {-worst:.3g}")


def _need_probes(cfg, name):
    if not cfg.probes:
        raise ConfigError(f"probes: {name} needs at least one probe")


def _need_source(cfg, name):
    if cfg.source.is_zero():
        raise ConfigError(f"source: {name} needs a non-zero source")


def _structure(cfg):
    st = check_kalman(cfg.operator)
    if not st.satisfied:
        raise ConfigError("operator: the Kalman rank condition fails")
    return st


def _solve_probes(cfg, st, schedule, epsilon, inner, mc=None):
    """Batched solves grouped by probe time; returns values and standard errors."""
    mc = mc or cfg.mc
    groups = {}
    for p, (t, _) in enumerate(cfg.probes):
        groups.setdefault(float(t), []).append(p)
    vals = np.zeros(len(cfg.probes))
    ses = np.zeros(len(cfg.probes))
    system = build_jump_system(cfg.operator, schedule, epsilon)
    for g, (t, members) in enumerate(groups.items()):
        X = np.array([cfg.probes[p][1] for p in members])
        est = solve_perturbed_batch(cfg.operator, st, schedule, cfg.source, epsilon, t, X, mc,
                                    inner, stream=g, system=system)
        vals[members], ses[members] = est.values, est.std_errors
    return vals, ses


def _probe_params(cfg, p):
    t, x = cfg.probes[p]
    return {"probe": p, "t": t, "x": list(map(float, x))}


def _family(cfg, settings, n):
    mats = settings["matrices"]
    N = cfg.operator.N
    if mats is None:
        if N != 2:
            raise ConfigError("settings.matrices: required when N != 2")
        mats = [np.diag([0.5, 0.0]), np.diag([0.0, 0.5])]
    mats = np.asarray(mats, dtype=float)
    if mats.ndim != 3 or mats.shape[1:] != (N, N):
        raise ConfigError(f"settings.matrices: expected a list of {N}x{N} matrices")
    if max(np.linalg.norm(m, 2) for m in mats) > 1.0 + 1e-12:
        raise ConfigError("settings.matrices: the family requires ||S|| <= 1")
    try:
        return PerturbationSchedule.alternating(mats, n, cfg.operator.horizon_T)
    except ValidationError as exc:
        raise ConfigError(f"settings.matrices: {exc}") from None


def _slope_ci(x, y, confidence):
    """OLS slope with a t-distribution confidence interval."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = len(x)
    X = np.column_stack([np.ones(n), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = n - 2
    s2 = resid @ resid / dof
    se = np.sqrt(s2 / np.sum((x - x.mean()) ** 2))
    q = stats.t.ppf(0.5 + confidence / 2.0, dof)
    return float(coef[1]), float(coef[1] - q * se), float(coef[1] + q * se)


def _variation(r):
    r = np.asarray(r, float)
    return float((r.max() - r.min()) / r.mean())


def _field_times(cfg, default):
    return tuple(cfg.norms.times) if cfg.norms.times is not None else default


# ---------------------------------------------------------------------------
# experiments

@register("max-principle", epsilon=0.05, inner="sample")
def max_principle(cfg: ExperimentConfig, settings) -> ExperimentResult:
    _need_probes(cfg, "max-principle")
    st = _structure(cfg)
    vals, ses = _solve_probes(cfg, st, cfg.schedule, settings["epsilon"], settings["inner"])
    bound = _bound(cfg)
    rows = []
    for p in range(len(vals)):
        ok = abs(vals[p]) <= bound + 3.0 * ses[p]
        params = dict(_probe_params(cfg, p), bound=bound, std_error=ses[p], signed=vals[p],
                      **{"pass": bool(ok)})
        rows.append(ReportRow.with_se("max-principle", params, abs(vals[p]), ses[p], cfg.seed))
    return ExperimentResult("max-principle", rows,
                            [_max_principle(vals, ses, bound, "max-principle")])


@register("oracle-compare", epsilon=0.05, inner="sample", sigma=3.0, rel_tol=0.03)
def oracle_compare(cfg: ExperimentConfig, settings) -> ExperimentResult:
    _need_probes(cfg, "oracle-compare")
    _need_source(cfg, "oracle-compare")
    st = _structure(cfg)
    vals, ses = _solve_probes(cfg, st, cfg.schedule, settings["epsilon"], settings["inner"])
    rows, worst_z, worst_rel = [], 0.0, 0.0
    for p, (t, x) in enumerate(cfg.probes):
        exact = float(gaussian_closed_form(cfg.operator, cfg.schedule, cfg.source, t, x))
        err = vals[p] - exact
        z = abs(err) / ses[p] if ses[p] > 0 else (0.0 if err == 0 else np.inf)
        rel = abs(err) / abs(exact) if exact != 0 else abs(err)
        ok = z <= settings["sigma"] and rel <= settings["rel_tol"]
        worst_z, worst_rel = max(worst_z, z), max(worst_rel, rel)
        params = dict(_probe_params(cfg, p), oracle=exact, z=z, rel_err=rel,
                      epsilon=settings["epsilon"], **{"pass": bool(ok)})
        rows.append(ReportRow.with_se("oracle-compare", params, vals[p], ses[p], cfg.seed))
    checks = [
        Check("oracle-compare: agreement",
              worst_z <= settings["sigma"] and worst_rel <= settings["rel_tol"],
              f"max |z| = {worst_z:.3g} (<= {settings['sigma']}), "
              f"max rel = {worst_rel:.3g} (<= {settings['rel_tol']})"),
        _max_principle(vals, ses, _bound(cfg), "oracle-compare"),
    ]
    return ExperimentResult("oracle-compare", rows, checks)


@register("epsilon-sweep", eps_list=[0.4, 0.2, 0.1, 0.05], inner="sample", noise_factor=2.0)
def epsilon_sweep_exp(cfg: ExperimentConfig, settings) -> ExperimentResult:
    _need_probes(cfg, "epsilon-sweep")
    st = _structure(cfg)
    try:
        tab = epsilon_sweep(cfg.operator, st, cfg.schedule, cfg.source, settings["eps_list"],
                            cfg.probes, cfg.mc, settings["inner"], settings["noise_factor"])
    except ValidationError as exc:
        raise ConfigError(f"settings: {exc}") from None
    rows = []
    for i, e in enumerate(tab.eps_list):
        for p in range(len(cfg.probes)):
            params = dict(_probe_params(cfg, p), kind="value", epsilon=e)
            rows.append(ReportRow.with_se("epsilon-sweep", params, tab.values[i, p],
                                          tab.std_errors[i, p], cfg.seed))
    for j, d in enumerate(tab.deltas):
        params = {"kind": "gap", "eps_from": tab.eps_list[j], "eps_to": tab.eps_list[j + 1],
                  "sigma": tab.delta_sigma[j]}
        rows.append(ReportRow.with_se("epsilon-sweep", params, d, tab.delta_sigma[j], cfg.seed))
    checks = [
        Check("epsilon-sweep: gaps decrease", tab.decreasing,
              "gaps " + ", ".join(f"{d:.3g}" for d in tab.deltas)
              + f" (noise sigma {tab.delta_sigma.max():.2g})"),
        _max_principle(tab.values.ravel(), tab.std_errors.ravel(), _bound(cfg), "epsilon-sweep"),
    ]
    return ExperimentResult("epsilon-sweep", rows, checks)


def _source_holder(cfg, st, beta, grid):
    """``sup_t [f(t)]_beta``; closed form for single separable Gaussian bumps."""
    best, method = 0.0, "closed-form"
    for _, _, terms in cfg.source.pieces:
        g = terms[0] if len(terms) == 1 else None
        if (isinstance(g, GaussianBump) and all(d == 1 for d in st.dims)
                and np.allclose(g.cov, np.diag(np.diag(g.cov)))):
            val = holder_separable_gaussian(g.amplitude, np.sqrt(np.diag(g.cov)), beta, st)
        else:
            method = "grid"
            val = holder_seminorm_aniso(TermSum(terms, cfg.operator.N) if len(terms) > 1 else terms[0],
                                        beta, st, grid)
        best = max(best, val)
    return best, method


def _surrogates(cfg, st, schedule, t, settings, stream):
    if settings["field"] == "oracle":
        n = len(schedule.values)
        return closed_form_field(cfg.operator, schedule, cfg.source, t,
                                 n_per_panel=max(2, int(np.ceil(96 / n))))
    return build_surrogate(cfg.operator, st, schedule, cfg.source, settings["epsilon"], t,
                           cfg.mc, settings["inner"], stream)


def _check_field(settings):
    if settings["field"] not in ("mc", "oracle"):
        raise ConfigError(f"settings.field: expected 'mc' or 'oracle', got {settings['field']!r}")


@register("schauder-ratio", switch_counts=[1, 4, 16, 64, 256], matrices=None, epsilon=0.05,
          inner="exact", field="mc", variation_tol=0.10, confidence=0.95, oracle_check=True,
          oracle_tol=0.03)
def schauder_ratio(cfg: ExperimentConfig, settings) -> ExperimentResult:
    """``sup_t [u(t)]_{alpha+beta} / sup_t [f(t)]_beta`` across an S-family of switch counts."""
    _need_source(cfg, "schauder-ratio")
    _check_field(settings)
    st = _structure(cfg)
    beta, gamma = cfg.norms.config.beta, cfg.norms.config.gamma
    T = cfg.operator.horizon_T
    center = cfg.norms.grid_center or np.zeros(cfg.operator.N)
    grid = HolderGrid.around(center, cfg.norms.grid_half_width, cfg.norms.grid_nodes, st)
    den, method = _source_holder(cfg, st, beta, grid)
    times = _field_times(cfg, (0.5 * T, T))
    bound = _bound(cfg)
    rows, ratios, errors, mp_vals, mp_ses, oracle_gaps = [], [], [], [], [], []
    pts = grid.points().reshape(-1, cfg.operator.N)
    for i, n in enumerate(settings["switch_counts"]):
        sched = _family(cfg, settings, int(n))
        best = None
        for j, t in enumerate(times):
            F = _surrogates(cfg, st, sched, t, settings, 1000 * i + j)
            d = holder_seminorm_details(F, gamma, st, grid)
            v, se = F.value_and_se(pts)
            mp_vals.append(v)
            mp_ses.append(se)
            if best is None or d.value > best[0].value:
                best = (d, t)
        d, t_star = best
        ratio, err = d.value / den, d.error / den
        ratios.append(ratio)
        errors.append(err)
        params = {"kind": "ratio", "switch_count": int(n), "numerator": d.value,
                  "denominator": den, "denominator_method": method, "t_argmax": t_star,
                  "error_bar": err, "field": settings["field"]}
        rows.append(ReportRow.with_se("schauder-ratio", params, ratio, err, cfg.seed))
        if settings["oracle_check"] and settings["field"] == "mc" and cfg.operator.alpha == 2.0:
            F = closed_form_field(cfg.operator, sched, cfg.source, t_star,
                                  n_per_panel=max(2, int(np.ceil(96 / len(sched.values)))))
            o = holder_seminorm_details(F, gamma, st, grid).value / den
            oracle_gaps.append(abs(ratio - o) - 3.0 * err - settings["oracle_tol"] * o)
            rows.append(ReportRow("schauder-ratio", {"kind": "oracle_ratio", "switch_count": int(n),
                                                     "t": t_star}, o, o, o, cfg.seed))
    x = np.log(np.asarray(settings["switch_counts"], dtype=float))
    slope, lo, hi = _slope_ci(x, ratios, settings["confidence"])
    var = _variation(ratios)
    rows.append(ReportRow("schauder-ratio", {"kind": "slope_vs_log_switches",
                                             "confidence": settings["confidence"],
                                             "contains_zero": bool(lo <= 0.0 <= hi)},
                          slope, lo, hi, cfg.seed))
    rows.append(ReportRow("schauder-ratio", {"kind": "variation", "tol": settings["variation_tol"],
                                             "pass": var <= settings["variation_tol"]},
                          var, var, var, cfg.seed))
    checks = [
        Check("schauder-ratio: variation", var <= settings["variation_tol"],
              f"(max - min) / mean = {var:.4f} (<= {settings['variation_tol']}); ratios "
              + ", ".join(f"{r:.4f}" for r in ratios)),
        Check("schauder-ratio: slope CI contains 0", lo <= 0.0 <= hi,
              f"slope {slope:.3g}, {settings['confidence']:.0%} CI [{lo:.3g}, {hi:.3g}]"),
        _max_principle(np.concatenate(mp_vals), np.concatenate(mp_ses), bound, "schauder-ratio"),
    ]
    if oracle_gaps:
        checks.append(Check("schauder-ratio: Monte Carlo vs closed form", max(oracle_gaps) <= 0.0,
                            f"worst excess over 3 sigma + {settings['oracle_tol']:.0%}: "
                            f"{max(oracle_gaps):.3g}"))
    return ExperimentResult("schauder-ratio", rows, checks)


def _subfield(F: DuhamelField, idx) -> DuhamelField:
    return DuhamelField(F.N, F.weights, F.flows, F.node_terms, F.shifts[idx])


@register("sobolev-ratio", switch_counts=[1, 4, 16, 64, 256], matrices=None, epsilon=0.05,
          inner="exact", field="mc", variation_tol=0.15, n_times=8, batches=4)
def sobolev_ratio(cfg: ExperimentConfig, settings) -> ExperimentResult:
    """``[u]_W / ||f||_{L^p}`` over ``(0, T) x lattice`` across an S-family."""
    _need_source(cfg, "sobolev-ratio")
    _check_field(settings)
    st = _structure(cfg)
    if not is_dilation_invariant(cfg.operator.A, st):
        raise ConfigError("operator.A: the Sobolev experiment needs a dilation-invariant drift")
    if cfg.norms.lattice_extents is None:
        raise ConfigError("norms.lattice: sobolev-ratio needs per-block extents and nodes")
    p = cfg.norms.config.p
    T = cfg.operator.horizon_T
    center = cfg.norms.grid_center or np.zeros(cfg.operator.N)
    ext = [float(e) for e in cfg.norms.lattice_extents]
    axes = HolderGrid.from_blocks(st, center, ext, cfg.norms.lattice_nodes).axes
    nt = int(settings["n_times"])
    times = T * np.arange(1, nt + 1) / nt
    tw = np.full(nt, T / nt)
    f_fields = [lambda X, s=s: cfg.source.value(s, X) for s in times]
    den = lp_norm(LatticeField.sample(f_fields, times, axes, tw), p)
    bound = _bound(cfg)
    B = int(settings["batches"])
    rows, ratios, mp_excess = [], [], []
    for i, n in enumerate(settings["switch_counts"]):
        sched = _family(cfg, settings, int(n))
        fields = [_surrogates(cfg, st, sched, t, settings, 1000 * i + j)
                  for j, t in enumerate(times)]
        num = sobolev_seminorm_aniso(LatticeField.sample(fields, times, axes, tw), p, st,
                                     cfg.norms.config.quad)
        err = 0.0
        if settings["field"] == "mc" and fields[0].samples >= 2 * B:
            parts = [np.array_split(np.arange(F.samples), B) for F in fields]
            subs = [LatticeField.sample([_subfield(F, part[b]) for F, part in zip(fields, parts)],
                                        times, axes, tw) for b in range(B)]
            batch = [sobolev_seminorm_aniso(L, p, st, cfg.norms.config.quad) for L in subs]
            err = float(np.std(batch, ddof=1) / np.sqrt(B))
            vals = np.stack([L.values for L in subs])
            pointwise_se = vals.std(axis=0, ddof=1) / np.sqrt(B)
            mp_excess.append(float((np.abs(vals.mean(axis=0)) - bound - 3 * pointwise_se).max()))
        ratio = num / den
        ratios.append(ratio)
        params = {"kind": "ratio", "switch_count": int(n), "numerator": num, "denominator": den,
                  "p": p, "error_bar": err / den, "field": settings["field"]}
        rows.append(ReportRow.with_se("sobolev-ratio", params, ratio, err / den, cfg.seed))
    var = _variation(ratios)
    rows.append(ReportRow("sobolev-ratio", {"kind": "variation", "tol": settings["variation_tol"],
                                            "pass": var <= settings["variation_tol"]},
                          var, var, var, cfg.seed))
    checks = [Check("sobolev-ratio: variation", var <= settings["variation_tol"],
                    f"(max - min) / mean = {var:.4f} (<= {settings['variation_tol']}); ratios "
                    + ", ".join(f"{r:.4f}" for r in ratios))]
    if mp_excess:
        worst = max(mp_excess)
        checks.append(Check("sobolev-ratio: max principle", worst <= 0.0,
                            f"lattice values, worst margin {-worst:.3g}"))
    return ExperimentResult("sobolev-ratio", rows, checks)


@register("dilation-check", factors=[0.5, 2.0, 3.0], n_random=20, tol=1e-12)
def dilation_check(cfg: ExperimentConfig, settings) -> ExperimentResult:
    """Group law of ``dilation_apply``; homogeneity of the distance and of the
    Gaussian covariance under the intrinsic scaling."""
    st = _structure(cfg)
    rng = np.random.default_rng([cfg.seed, 11])
    N, tol = cfg.operator.N, settings["tol"]
    invariant = is_dilation_invariant(cfg.operator.A, st)
    rows, checks = [], [Check("dilation-check: drift is dilation invariant", invariant,
                              f"A = {cfg.operator.A.tolist()}")]
    for lam in settings["factors"]:
        group = dist = cov = 0.0
        for _ in range(int(settings["n_random"])):
            t = rng.uniform(0.1, 2.0)
            x, y = rng.normal(size=N), rng.normal(size=N)
            mu = rng.uniform(0.5, 2.0)
            t1, x1 = dilation_apply(lam, *dilation_apply(mu, t, x, st), st)
            t2, x2 = dilation_apply(lam * mu, t, x, st)
            group = max(group, abs(t1 - t2) / abs(t2),
                        np.abs(x1 - x2).max() / max(1.0, np.abs(x2).max()))
            _, X = intrinsic_scaling(lam, 0.0, x, st)
            _, Y = intrinsic_scaling(lam, 0.0, y, st)
            d0 = parabolic_distance(x, y, st)
            dist = max(dist, abs(parabolic_distance(X, Y, st) - lam * d0) / (lam * d0))
        if invariant and cfg.operator.alpha == 2.0:
            s = 0.25 * cfg.operator.horizon_T
            D = np.diag(lam ** (1.0 / st.scaling_powers()))
            lhs = ou_covariance(cfg.operator, 0.0, lam ** 2 * s)
            rhs = D @ ou_covariance(cfg.operator, 0.0, s) @ D
            cov = float(np.abs(lhs - rhs).max() / np.abs(rhs).max())
        for kind, err, limit in (("group_law", group, tol), ("distance_homogeneity", dist, 1e-12),
                                 ("covariance_scaling", cov, 1e-10)):
            ok = err <= limit
            rows.append(ReportRow("dilation-check", {"kind": kind, "factor": lam, "limit": limit,
                                                     "pass": bool(ok)}, err, err, err, cfg.seed))
            checks.append(Check(f"dilation-check: {kind} at {lam}", ok, f"error {err:.3g}"))
    return ExperimentResult("dilation-check", rows, checks)


@register("cf-check", alphas=[0.5, 1.0, 1.5], lambdas=[-3.0, -2.0, -1.0, -0.5, 0.5, 1.0, 2.0, 3.0],
          dt=0.02, draws=100_000, rel_tol=0.01, sigma=3.0)
def cf_check(cfg: ExperimentConfig, settings) -> ExperimentResult:
    """Empirical characteristic function of stable increments vs ``exp(dt psi)``.

    Frequencies are ``lam * theta`` for each positive-half atom ``theta`` of
    the spectral measure (the operator's, else isotropic on the line).
    """
    mu = cfg.operator.spectral or SpectralMeasure.isotropic_1d()
    dirs, _ = mu.half()
    dt = float(settings["dt"])
    rows, worst_rel, worst_z = [], 0.0, 0.0
    for a_idx, alpha in enumerate(settings["alphas"]):
        rng = np.random.default_rng([cfg.seed, 21, a_idx])
        Z = sample_stable_increment(mu, alpha, dt, rng, size=int(settings["draws"]))
        for theta in dirs:
            for lam in settings["lambdas"]:
                k = lam * theta
                phase = Z @ k
                c, s = np.cos(phase), np.sin(phase)
                exact = float(np.exp(dt * levy_exponent(mu, alpha, k)))
                se = c.std(ddof=1) / np.sqrt(len(c))
                err = c.mean() - exact
                z = abs(err) / se
                rel = abs(err) / exact
                z_im = abs(s.mean()) / (s.std(ddof=1) / np.sqrt(len(s)))
                ok = rel <= settings["rel_tol"] and z <= settings["sigma"] \
                    and z_im <= settings["sigma"]
                worst_rel, worst_z = max(worst_rel, rel), max(worst_z, z, z_im)
                params = {"alpha": alpha, "lambda": list(map(float, k)), "exact": exact,
                          "rel_err": rel, "z": z, "z_imag": z_im, "pass": bool(ok)}
                rows.append(ReportRow.with_se("cf-check", params, c.mean(), se, cfg.seed))
    ok = worst_rel <= settings["rel_tol"] and worst_z <= settings["sigma"]
    return ExperimentResult("cf-check", rows, [
        Check("cf-check: characteristic function", ok,
              f"max rel {worst_rel:.3g} (<= {settings['rel_tol']}), max |z| {worst_z:.3g}")])


DEFAULT_G = [
    {"breakpoints": [0.0, 0.5, 1.0], "values": [1.0, -1.0]},
    {"breakpoints": [0.0, 0.2, 0.7, 1.0], "values": [2.0, 0.5, 3.0]},
    {"breakpoints": [0.0, 0.25, 0.5, 0.75, 1.0], "values": [0.0, 4.0, -2.0, 1.0]},
]


@register("poisson-identity", intensity=20.0, t=1.0, paths=10_000, g=DEFAULT_G, sigma=3.0)
def poisson_identity(cfg: ExperimentConfig, settings) -> ExperimentResult:
    """``E sum_n g(sigma_n) = lam int_0^t g`` for piecewise-constant ``g``."""
    lam, t = float(settings["intensity"]), float(settings["t"])
    rows, worst = [], 0.0
    for j, spec in enumerate(settings["g"]):
        bp = np.asarray(spec["breakpoints"], dtype=float)
        gv = np.asarray(spec["values"], dtype=float)
        if len(gv) != len(bp) - 1 or np.any(np.diff(bp) <= 0) or bp[0] > 0 or bp[-1] < t:
            raise ConfigError(f"settings.g[{j}]: need increasing breakpoints covering [0, {t}] "
                              "and one value per interval")
        rng = np.random.default_rng([cfg.seed, 31, j])
        sums = np.empty(int(settings["paths"]))
        for m in range(len(sums)):
            times = sample_poisson_times(lam, t, rng)
            idx = np.clip(np.searchsorted(bp, times, side="right") - 1, 0, len(gv) - 1)
            sums[m] = gv[idx].sum()
        lo = np.clip(bp[:-1], 0.0, t)
        hi = np.clip(bp[1:], 0.0, t)
        exact = lam * float(np.sum(gv * (hi - lo)))
        se = sums.std(ddof=1) / np.sqrt(len(sums))
        z = abs(sums.mean() - exact) / se
        worst = max(worst, z)
        params = {"g": j, "exact": exact, "z": z, "intensity": lam,
                  "pass": bool(z <= settings["sigma"])}
        rows.append(ReportRow.with_se("poisson-identity", params, sums.mean(), se, cfg.seed))
    return ExperimentResult("poisson-identity", rows, [
        Check("poisson-identity: expectation", worst <= settings["sigma"],
              f"max |z| = {worst:.3g} over {len(settings['g'])} integrands")])

"""Error functional, Monte Carlo convergence study and diagnostics."""

from __future__ import annotations

import concurrent.futures
import csv
import dataclasses
import io
import json
import math
from statistics import NormalDist
from typing import Callable

import numpy as np

from .config import StudyConfig, config_hash
from .errors import BlowUpError, ConfigurationError, CouplingError, StabilityError, StatisticsError
from .noise import sample_path
from .reference import ReferenceConfig, ReferenceTrajectory, run_reference
from .splitting import (SchemeHistory, SplitConfig, energy_defects, monitor_stopping, run_splitting,
                        trajectory_norms)

__all__ = [
    "ErrorReport",
    "error_e_n",
    "path_seed",
    "run_path",
    "convergence_study",
    "StudyResult",
    "TailRow",
    "probability_tail",
    "growth_function",
    "wilson_interval",
    "scheme_moments",
    "reference_moments",
    "moment_diagnostics",
    "fit_slope",
    "FLOOR",
    "MAX_EXCLUDED",
    "certify_hypotheses",
    "auto_thresholds",
]

FLOOR = 1e-6           # errors below this count as numerical zero
MAX_EXCLUDED = 0.10    # abort once more than this share of paths blew up


@dataclasses.dataclass(frozen=True)
class ErrorReport:
    n: int
    seed: int
    sup_v: float        # sup_k |v^n(t_k^+) - v(t_k)|
    sup_eta: float      # sup_k |eta^n(t_k^-) - v(t_k)|
    int_v: float        # (int_0^T ||v^n - v||^2)^(1/2)
    int_eta: float      # (int_0^T ||eta^n - v||^2)^(1/2)
    e_n: float
    omega_flag: bool = True
    monitor_N: float = 0.0   # n * max per-interval integral, the smallest N keeping tau out
    monitor_M: float = 0.0   # full sigma integral, the smallest M keeping sigma out

    @property
    def components(self) -> tuple:
        return (self.sup_v, self.sup_eta, self.int_v, self.int_eta)

    def with_flag(self, M: float, N: float) -> "ErrorReport":
        return dataclasses.replace(self, omega_flag=bool(self.monitor_N <= N and self.monitor_M <= M))


def _h_norm(diff, w):
    return np.sqrt((diff ** 2 * w).sum(axis=(-2, -1)))


def _v_sq(diff, w, lam):
    return (diff ** 2 * (w * lam)).sum(axis=(-2, -1))


def error_e_n(history: SchemeHistory, ref: ReferenceTrajectory, seed: int = -1,
              M: float = math.inf, N: float = math.inf) -> ErrorReport:
    """e_n(T) for one paired (scheme, reference) trajectory.

    Sup terms run over mesh points k = 0..n with the recorded one-sided
    limits (v^n(T^+) = eta^n(T^-)). Integral terms are left-endpoint sums on
    each substep's micro-grid with the reference read at the coinciding fine
    node.
    """
    if history.provenance != ref.provenance:
        raise CouplingError("scheme and reference were driven by different Brownian paths")
    cfg = history.cfg
    if not math.isclose(cfg.T, ref.T, rel_tol=1e-12):
        raise CouplingError("scheme and reference horizons differ")
    g = cfg.grid
    w, lam = g.weights, g.eigenvalues
    n = cfg.n

    ref_mesh = ref.at_nodes(n)
    sup_v = float(_h_norm(history.v_plus - ref_mesh, w).max())
    sup_eta = float(_h_norm(history.eta_minus - ref_mesh, w).max())

    def integral(traj, J):
        r = ref.at_nodes(n * J)[:-1].reshape((n, J) + g.shape)
        return math.sqrt(float(_v_sq(traj[:, :J] - r, w, lam).sum()) * cfg.mesh / J)

    int_v = integral(history.v_traj, cfg.det_steps)
    int_eta = integral(history.eta_traj, cfg.stoch_steps)
    mon = monitor_stopping(history, N, M, reference=ref)
    return ErrorReport(
        n=n, seed=seed, sup_v=sup_v, sup_eta=sup_eta, int_v=int_v, int_eta=int_eta,
        e_n=sup_v + sup_eta + int_v + int_eta, omega_flag=mon.omega_flag,
        monitor_N=n * mon.max_interval_integral, monitor_M=mon.sigma_integral,
    )


# ---------------------------------------------------------------- moments

GATED_MOMENTS = ("sup_eta_h2", "int_v_v2", "sup_q_h2", "int_r_v2")


def scheme_moments(history: SchemeHistory) -> dict:
    """Path quantities bounded uniformly in n; sups include eta^n(0) = v0."""
    vn, en = history.v_norms, history.eta_norms
    dt = history.cfg.mesh / history.cfg.det_steps
    v0 = trajectory_norms(history.cfg.v0.coeffs, history.cfg.grid)
    sup_h = max(float(en["h"].max()), float(v0["h"]))
    sup_q = max(float(en["dz_h"].max()), float(v0["dz_h"]))
    return {
        "sup_eta_h2": sup_h ** 2,
        "sup_eta_h4": sup_h ** 4,
        "sup_q_h2": sup_q ** 2,
        "int_v_v2": float(history.dissipation_v.sum()),
        "int_r_v2": float(history.dissipation_r.sum()),
        "int_v_h2v2": float((vn["h"][:, :-1] ** 2 * vn["v"][:, :-1] ** 2).sum() * dt),
    }


def reference_moments(ref: ReferenceTrajectory) -> dict:
    nm = ref.norms
    dt = ref.T / ref.cfg.n_ref
    return {
        "sup_v_h2": float((nm["h"] ** 2).max()),
        "sup_v_h4": float((nm["h"] ** 4).max()),
        "sup_r_h2": float((nm["dz_h"] ** 2).max()),
        "int_v_v2": float((nm["v"][:-1] ** 2).sum() * dt),
        "int_r_v2": float((nm["dz_v"][:-1] ** 2).sum() * dt),
        "int_v_h2v2": float((nm["h"][:-1] ** 2 * nm["v"][:-1] ** 2).sum() * dt),
    }


def moment_diagnostics(ref_moments: list, scheme_moments_by_n: dict, n_min: int = 8,
                       max_ratio: float = 2.0, gated=GATED_MOMENTS) -> dict:
    """Sample means of a-priori-bound quantities and their spread across n.

    A quantity is uniform when max/min of its sample mean over n >= n_min
    stays below ``max_ratio`` (all-zero means count as uniform). ``pass``
    covers the ``gated`` keys; the rest are reported only.
    """
    out = {"reference": {}, "scheme": {}, "ratios": {}, "pass": True}
    if ref_moments:
        for key in ref_moments[0]:
            out["reference"][key] = float(np.mean([m[key] for m in ref_moments]))
    ns = sorted(n for n in scheme_moments_by_n if n >= n_min)
    if not ns:
        return out
    keys = scheme_moments_by_n[ns[0]][0].keys() if scheme_moments_by_n[ns[0]] else []
    for key in keys:
        means = {n: float(np.mean([m[key] for m in scheme_moments_by_n[n]])) for n in ns}
        out["scheme"][key] = means
        lo, hi = min(means.values()), max(means.values())
        ratio = 1.0 if hi == 0.0 else (math.inf if lo <= 0.0 else hi / lo)
        out["ratios"][key] = ratio
        if key in gated and not (np.isfinite(hi) and ratio < max_ratio):
            out["pass"] = False
    return out


# ---------------------------------------------------------------- tails

def growth_function(spec) -> Callable[[float], float]:
    """l(n) by name: ``log`` (log(1+n)), ``sqrt-log``, ``power:a`` (n^a, 0 < a < 1/2), ``identity``.

    Callables are accepted if they are positive and increase without bound
    on n = 2^k, which is checked numerically up to 2^40.
    """
    if callable(spec):
        fn = spec
    elif spec == "log":
        fn = lambda n: math.log1p(n)
    elif spec == "sqrt-log":
        fn = lambda n: math.sqrt(math.log1p(n))
    elif spec == "identity":
        fn = lambda n: float(n)
    elif isinstance(spec, str) and spec.startswith("power:"):
        try:
            a = float(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigurationError(f"bad growth spec {spec!r}") from None
        if not 0.0 < a < 0.5:
            raise ConfigurationError("power growth needs 0 < a < 1/2")
        fn = lambda n, a=a: float(n) ** a
    else:
        raise ConfigurationError(f"unknown growth function {spec!r}")
    vals = [fn(2.0 ** k) for k in range(1, 41)]
    if not all(v > 0 for v in vals) or any(b <= a for a, b in zip(vals, vals[1:])):
        raise ConfigurationError("l(n) must be positive and increase to infinity")
    return fn


def wilson_interval(k: int, total: int, level: float = 0.95) -> tuple:
    if total <= 0:
        raise StatisticsError("Wilson interval needs at least one sample")
    z = NormalDist().inv_cdf(0.5 + level / 2)
    p = k / total
    denom = 1 + z * z / total
    centre = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == total else min(1.0, centre + half)
    return lo, hi


@dataclasses.dataclass(frozen=True)
class TailRow:
    n: int
    threshold: float
    exceed: int
    total: int
    p_hat: float
    ci_low: float
    ci_high: float


MIN_TAIL_SAMPLES = 8


def probability_tail(reports_by_n: dict, l_fn="log", n_min: int = 1) -> dict:
    """Empirical P(e_n >= l(n)/sqrt(n)) with Wilson 95% intervals.

    ``nonincreasing`` is True when every later estimate is either below the
    earlier one or the two intervals overlap.
    """
    fn = growth_function(l_fn)
    ns = sorted(n for n in reports_by_n if n >= n_min)
    if len(ns) < 2:
        raise ConfigurationError("tail estimates need at least two values of n")
    rows = []
    for n in ns:
        es = [r.e_n for r in reports_by_n[n]]
        if len(es) < MIN_TAIL_SAMPLES:
            raise StatisticsError(f"only {len(es)} samples at n={n}; need {MIN_TAIL_SAMPLES}")
        thr = fn(n) / math.sqrt(n)
        k = sum(e >= thr for e in es)
        lo, hi = wilson_interval(k, len(es))
        rows.append(TailRow(n, thr, k, len(es), k / len(es), lo, hi))
    ok = all(b.p_hat <= a.p_hat or b.ci_low <= a.ci_high for a, b in zip(rows, rows[1:]))
    return {"rows": rows, "nonincreasing": ok, "l_fn": l_fn if isinstance(l_fn, str) else repr(l_fn)}


# ---------------------------------------------------------------- study

def fit_slope(ns, means) -> tuple:
    """Least-squares fit of log mean = intercept - slope * log n; returns (slope, intercept, stderr)."""
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
    dof = len(x) - 2
    if dof > 0:
        resid = y - A @ coef
        s2 = float(resid @ resid) / dof
        se = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    else:
        se = math.nan
    return float(-coef[0]), float(coef[1]), se


def path_seed(seed: int, index: int) -> int:
    """Per-path key derived from the study seed; independent of worker layout."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1, np.uint64)[0] >> 1)


@dataclasses.dataclass
class PathOutcome:
    index: int
    seed: int
    reports: dict = None          # n -> ErrorReport
    scheme_moments: dict = None   # n -> dict
    ref_moments: dict = None
    energy: dict = None           # worst energy defects over all n
    ref_refinement: float = math.nan
    failure: str = None


def _configs(study: StudyConfig, grid=None, noise=None, v0=None):
    grid = grid or study.grid()
    noise = noise or study.noise(grid)
    v0 = v0 if v0 is not None else study.v0(grid)
    ref_cfg = ReferenceConfig(study.T, study.n_ref, grid, noise, v0, micro_steps=study.ref_micro_steps)
    ref_cfg.check_divides([n * study.micro_steps for n in study.n_list])
    scheme = {n: SplitConfig(study.T, n, grid, noise, v0, eps=study.eps,
                             det_steps=study.micro_steps, stoch_steps=study.micro_steps)
              for n in study.n_list}
    return ref_cfg, scheme


def run_path(study: StudyConfig, index: int, refine_check: bool = False, _cache=None) -> PathOutcome:
    """Reference plus one scheme run per n, all on path ``index``."""
    seed = path_seed(study.seed, index)
    ref_cfg, schemes = _cache or _configs(study)
    out = PathOutcome(index, seed)
    path = sample_path(ref_cfg.noise, seed, study.n_fine, study.T)
    try:
        ref = run_reference(ref_cfg, path)
        if refine_check and ref_cfg.micro_steps % 2 == 0:
            # |v_ref(T) - v_coarse(T)| with half the micro-steps bounds the reference's own error
            coarse = run_reference(dataclasses.replace(ref_cfg, micro_steps=ref_cfg.micro_steps // 2), path)
            diff = coarse.states[-1] - ref.states[-1]
            out.ref_refinement = float(np.sqrt((diff ** 2 * ref_cfg.grid.weights).sum()))
        reports, moments, energy = {}, {}, {"v": -math.inf, "r": -math.inf}
        for n, cfg in schemes.items():
            hist = run_splitting(cfg, path)
            reports[n] = error_e_n(hist, ref, seed=seed)
            moments[n] = scheme_moments(hist)
            d = energy_defects(hist)
            energy = {k: max(energy[k], d[k]) for k in energy}
    except BlowUpError as exc:
        out.failure = str(exc)
        return out
    out.reports, out.scheme_moments, out.energy = reports, moments, energy
    out.ref_moments = reference_moments(ref)
    return out


def _run_path_job(args):
    study, index, refine = args
    return run_path(study, index, refine)


@dataclasses.dataclass
class StudyResult:
    config: StudyConfig
    rows: list                  # dicts: n, mean_e, std_e, mean_e_conditioned, omega_fraction, count
    slope: float
    intercept: float
    slope_se: float
    status: str                 # "ok" or "noise-free floor"
    M: float
    N: float
    tails: dict
    moments: dict
    energy: dict
    excluded: list
    reports: dict               # n -> list[ErrorReport], path order
    ref_refinement: list = dataclasses.field(default_factory=list)

    @property
    def n_list(self):
        return [r["n"] for r in self.rows]

    CSV_COLUMNS = ("n", "mean_e", "std_e", "mean_e_conditioned", "omega_fraction")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r["n"]] + [repr(float(r[c])) for c in self.CSV_COLUMNS[1:]])
        return buf.getvalue()

    def summary(self) -> dict:
        tails = [dataclasses.asdict(t) for t in self.tails["rows"]] if self.tails else []
        return {
            "config_hash": config_hash(self.config),
            "seed": self.config.seed,
            "config": self.config.as_dict(),
            "status": self.status,
            "slope": self.slope,
            "intercept": self.intercept,
            "slope_stderr": self.slope_se,
            "M": self.M,
            "N": self.N,
            "per_n": self.rows,
            "tails": tails,
            "tails_nonincreasing": self.tails.get("nonincreasing") if self.tails else None,
            "moments": self.moments,
            "energy_defects": self.energy,
            "excluded_paths": self.excluded,
            "reference_refinement": self.ref_refinement,
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.summary()), indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def auto_thresholds(reports_small_n: list) -> tuple:
    """M and N as 4x the 95th percentile of the monitored integrals at the smallest n."""
    M = 4.0 * float(np.percentile([r.monitor_M for r in reports_small_n], 95))
    N = 4.0 * float(np.percentile([r.monitor_N for r in reports_small_n], 95))
    tiny = np.finfo(float).tiny
    return max(M, tiny), max(N, tiny)


def convergence_study(study: StudyConfig, workers: int = 1, refine_paths: int = 0,
                      progress: Callable | None = None) -> StudyResult:
    """Paired-path Monte Carlo study of E[e_n] over ``study.n_list``.

    Each path drives one reference solve and one scheme run per n. Paths that
    blow up are excluded from every n; more than 10% exclusions abort with
    :class:`StabilityError`. The first ``refine_paths`` paths also re-solve the
    reference with half its micro-steps; the change in v(T) bounds the
    reference's own error.
    """
    if study.paths < 8:
        raise ConfigurationError("a study needs at least 8 paths")
    cache = _configs(study)
    noise = cache[0].noise
    jobs = [(study, i, i < refine_paths) for i in range(study.paths)]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_path_job, jobs))
    else:
        outcomes = []
        for i, refine, in ((j[1], j[2]) for j in jobs):
            outcomes.append(run_path(study, i, refine, _cache=cache))
            if progress:
                progress(i + 1, study.paths)
    outcomes.sort(key=lambda o: o.index)

    excluded = [{"path": o.index, "seed": o.seed, "reason": o.failure} for o in outcomes if o.failure]
    if len(excluded) > MAX_EXCLUDED * study.paths:
        raise StabilityError(f"{len(excluded)} of {study.paths} paths blew up; first: {excluded[0]['reason']}")
    good = [o for o in outcomes if not o.failure]

    n_list = list(study.n_list)
    reports = {n: [o.reports[n] for o in good] for n in n_list}
    M, N = study.M, study.N
    if M is None or N is None:
        aM, aN = auto_thresholds(reports[n_list[0]])
        M = aM if M is None else M
        N = aN if N is None else N
    reports = {n: [r.with_flag(M, N) for r in rs] for n, rs in reports.items()}

    rows = []
    for n in n_list:
        es = np.array([r.e_n for r in reports[n]])
        flags = np.array([r.omega_flag for r in reports[n]])
        cond = float(es[flags].mean()) if flags.any() else math.nan
        rows.append({
            "n": n,
            "mean_e": float(es.mean()),
            "std_e": float(es.std(ddof=1)) if len(es) > 1 else 0.0,
            "mean_e_conditioned": cond,
            "omega_fraction": float(flags.mean()),
            "count": int(len(es)),
        })

    means = [r["mean_e"] for r in rows]
    if noise.is_zero or max(means) <= FLOOR:
        status, slope, intercept, se = "noise-free floor", math.nan, math.nan, math.nan
    else:
        status = "ok"
        slope, intercept, se = fit_slope(n_list, means)

    tails = {}
    if len(n_list) >= 2 and len(good) >= MIN_TAIL_SAMPLES:
        tails = probability_tail(reports, study.l_fn, n_min=8 if max(n_list) > 8 else 1)

    moments = moment_diagnostics([o.ref_moments for o in good],
                                 {n: [o.scheme_moments[n] for o in good] for n in n_list})
    energy = {"v": max((o.energy["v"] for o in good), default=-math.inf),
              "r": max((o.energy["r"] for o in good), default=-math.inf)}
    return StudyResult(
        config=study, rows=rows, slope=slope, intercept=intercept, slope_se=se, status=status,
        M=M, N=N, tails=tails, moments=moments, energy=energy, excluded=excluded, reports=reports,
        ref_refinement=[o.ref_refinement for o in good if not math.isnan(o.ref_refinement)],
    )


# ---------------------------------------------------------------- hypotheses

K2_LIMIT = 2.0 / 147.0
K4_LIMIT = 2.0


def certify_hypotheses(model, samples: int = 200, seed: int = 0, slack: float = 0.10) -> dict:
    """Compare estimated growth/Lipschitz constants with the declared ones.

    A constant passes when the estimate is at most ``(1 + slack)`` times the
    declared value (zero declared values allow an absolute 1e-12). The
    convergence theorem additionally needs K2 < 2/147, K4 < 2 and L2 = R2 = 0.
    """
    from .noise import estimate_constants

    rep = estimate_constants(model, samples=samples, seed=seed)
    est, dec = rep["estimated"], rep["declared"]
    rows = {}
    for name in sorted(dec):
        limit = dec[name] * (1.0 + slack) + 1e-12
        rows[name] = {"estimated": est[name], "declared": dec[name], "ok": bool(est[name] <= limit)}
    conditions = {
        "K2 < 2/147": dec["K2"] < K2_LIMIT,
        "K4 < 2": dec["K4"] < K4_LIMIT,
        "L2 = 0": dec["L2"] == 0.0,
        "R2 = 0": dec["R2"] == 0.0,
    }
    passed = all(r["ok"] for r in rows.values()) and all(conditions.values())
    return {"kind": model.kind, "samples": samples, "constants": rows, "conditions": conditions, "pass": passed}

"""Acceptance criteria, one test each, at their stated tolerances.

Each test records a one-line verdict that is printed in the terminal summary.
The two default studies (additive and diagonal-multiplicative) run once per
session and feed criteria 3 to 6.
"""

import math
import time

import numpy as np
import pytest

from pesplit.checks import run_checks
from pesplit.config import StudyConfig
from pesplit.experiment import certify_hypotheses, convergence_study, run_path
from pesplit.noise import KINDS

from conftest import ACCEPTANCE_LINES

FAMILIES = ("additive", "diagonal-multiplicative")
SLOPE_BAND = (0.35, 0.70)

pytestmark = pytest.mark.slow


def record(number, passed, text):
    line = f"{'PASS' if passed else 'FAIL'}  criterion {number}: {text}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


@pytest.fixture(scope="module")
def studies():
    out = {}
    for kind in FAMILIES:
        start = time.perf_counter()
        res = convergence_study(StudyConfig(kind=kind), refine_paths=2)
        out[kind] = (res, time.perf_counter() - start)
    return out


def test_criterion_1_invariant_suite():
    start = time.perf_counter()
    results = run_checks(StudyConfig(), triples=100)
    elapsed = time.perf_counter() - start
    failed = [r.name for r in results if not r.passed]
    worst = {r.name: r.value for r in results}
    ok = not failed and elapsed < 30.0
    record(1, ok, f"{len(results)} invariants, failed={failed or 'none'}, "
                  f"cancellation={worst['cancellation b(u,v,v)=0']:.1e}, "
                  f"divergence={worst['divergence dx v + dz Phi']:.1e}, {elapsed:.1f}s (< 30s)")
    assert ok


def test_criterion_2_deterministic_degeneracy():
    study = StudyConfig(sigma=(0.0,) * 16, eps=0.0, paths=8)
    start = time.perf_counter()
    out = run_path(study, 0)
    elapsed = time.perf_counter() - start
    errors = {n: out.reports[n].e_n for n in study.n_list}
    worst_n = max(errors, key=errors.get)
    rep = out.reports[worst_n]
    ok = max(errors.values()) <= 1e-6 and elapsed < 60.0
    record(2, ok, "max e_n={:.2e} at n={} (tol 1e-6; sup_v={:.1e} sup_eta={:.1e} int_v={:.1e} int_eta={:.1e}), "
                  "{:.1f}s".format(errors[worst_n], worst_n, rep.sup_v, rep.sup_eta, rep.int_v, rep.int_eta, elapsed))
    assert ok, errors


def test_criterion_3_rate(studies):
    parts, ok = [], True
    for kind, (res, elapsed) in studies.items():
        inside = res.status == "ok" and SLOPE_BAND[0] <= res.slope <= SLOPE_BAND[1]
        ok &= inside and elapsed < 15 * 60
        parts.append(f"{kind} slope={res.slope:.3f}±{res.slope_se:.3f} ({elapsed:.0f}s)")
    record(3, ok, "; ".join(parts) + f"; band {list(SLOPE_BAND)}")
    assert ok


def test_criterion_4_tail_decay(studies):
    parts, ok = [], True
    for kind, (res, _) in studies.items():
        rows = res.tails["rows"]
        assert [r.n for r in rows] == [8, 16, 32, 64]
        assert res.tails["l_fn"] == "log"
        ok &= bool(res.tails["nonincreasing"])
        parts.append(f"{kind} P=" + ",".join(f"{r.p_hat:.2f}" for r in rows))
    record(4, ok, "; ".join(parts) + " (nonincreasing within Wilson 95% overlap)")
    assert ok


def test_criterion_5_energy(studies):
    worst = max(max(res.energy.values()) for res, _ in studies.values())
    ok = worst <= 1e-8
    record(5, ok, f"worst relative energy defect {worst:.2e} over all paths, n and both families (tol 1e-8)")
    assert ok


def test_criterion_6_moments(studies):
    parts, ok = [], True
    for kind, (res, _) in studies.items():
        mom = res.moments
        ratios = {k: mom["ratios"][k] for k in ("sup_eta_h2", "int_v_v2", "sup_q_h2", "int_r_v2")}
        ok &= mom["pass"] and all(r < 2.0 for r in ratios.values())
        parts.append(f"{kind} max ratio={max(ratios.values()):.3f}")
    record(6, ok, "; ".join(parts) + " over n in 8..64 (< 2)")
    assert ok


def test_criterion_7_hypotheses():
    study = StudyConfig()
    grid = study.grid()
    reports = [certify_hypotheses(study.replace(kind=kind).noise(grid)) for kind in KINDS]
    ok = all(r["pass"] for r in reports)
    worst = max(row["estimated"] / row["declared"] for r in reports for row in r["constants"].values()
                if row["declared"] > 0)
    record(7, ok, f"{len(reports)} families, worst estimated/declared={worst:.3f} (<= 1.10), "
                  "K2 < 2/147 and L2 = R2 = 0 for all")
    assert ok
    for r in reports:
        assert r["conditions"]["K2 < 2/147"] and r["conditions"]["L2 = 0"] and r["conditions"]["R2 = 0"]


def test_reference_is_resolved(studies):
    # not a numbered criterion: the reference's own error must sit well below the measured e_n
    for kind, (res, _) in studies.items():
        assert res.ref_refinement
        assert max(res.ref_refinement) < 0.05 * res.rows[-1]["mean_e"]
        assert not res.excluded and math.isfinite(res.slope)
        assert np.all(np.diff([r["mean_e"] for r in res.rows]) < 0)

"""Acceptance criteria 1-11, one test each, each reporting a PASS/FAIL line."""
import json
import time

import numpy as np
import pytest

from phasediff.bounds import lu_wang_coeffs, lu_wang_regret_check, two_copy_c_tilde
from phasediff.cli import _settings, cmd_regions, experiment_point_checks, resolve, run_experiments
from phasediff.encoding import ParamPoint, two_copy_equatorial
from phasediff.estimation import EncodingMode
from phasediff.information import (
    bell_merit_analytic,
    classical_fim,
    equatorial_family,
    figure_of_merit,
    qfim,
    qfim_analytic,
)
from phasediff.linalg import Povm, random_isometry, random_unitary
from phasediff.measurement import bell_walk_spec, bell_povm, bell_probs_many, walk_to_povm
from phasediff.optimizer import analyze_povm, load_reference_povm, objective, optimize_povm

ONE = equatorial_family(1)
TWO = equatorial_family(2)


def qfim_closed(delta):
    return np.diag([np.exp(-2 * delta**2), 4 * delta**2 / np.expm1(2 * delta**2)])


def reference_slds(phi, delta):
    """Single- and two-copy SLD matrices transcribed entry by entry."""
    a = np.exp(-delta**2 - 1j * phi)
    b = np.exp(-delta**2 + 1j * phi)
    Lp = np.array([[0, -1j * a], [1j * b, 0]])
    k = 1 / np.expm1(2 * delta**2)
    u = np.exp(delta**2 - 1j * phi)
    v = np.exp(delta**2 + 1j * phi)
    Ld = k * np.array([[2 * delta, -2 * delta * u], [-2 * delta * v, 2 * delta]])
    Lp2 = np.array([
        [0, -1j * a, -1j * a, 0],
        [1j * b, 0, 0, -1j * a],
        [1j * b, 0, 0, -1j * a],
        [0, 1j * b, 1j * b, 0],
    ])
    Ld2 = 2 * delta * k * np.array([
        [2, -u, -u, 0],
        [-v, 2, 0, -u],
        [-v, 0, 2, -u],
        [0, -v, -v, 2],
    ])
    return Lp, Ld, Lp2, Ld2


@pytest.fixture(scope="module")
def experiment_cfg():
    return resolve("experiment", {}, None, {})


@pytest.fixture(scope="module")
def analytic_records(experiment_cfg):
    t0 = time.perf_counter()
    recs = run_experiments(_settings(experiment_cfg), experiment_cfg)
    return recs, time.perf_counter() - t0


def test_criterion_01_bell_probabilities(criterion):
    g = np.random.default_rng(1)
    phi = g.uniform(0, 2 * np.pi, 1000)
    delta = g.uniform(0, 2, 1000)
    t0 = time.perf_counter()
    got = bell_probs_many(phi, delta)
    elapsed = time.perf_counter() - t0
    B = bell_povm()
    dev = max(np.max(np.abs(got[i] - B.probabilities(two_copy_equatorial(phi[i], delta[i]))))
              for i in range(1000))
    criterion(1, dev < 1e-12 and elapsed < 1.0, f"max deviation {dev:.2e}, {elapsed:.3f} s")


def test_criterion_02_qfim(criterion):
    g = np.random.default_rng(2)
    t0 = time.perf_counter()
    dev = 0.0
    for _ in range(100):
        p = (g.uniform(0, 2 * np.pi), g.uniform(0.05, 2.0))
        q1 = qfim(ONE, p).qfim
        q2 = qfim(TWO, p).qfim
        dev = max(dev, np.max(np.abs(q1 - qfim_closed(p[1]))), np.max(np.abs(q2 - 2 * qfim_closed(p[1]))))
    elapsed = time.perf_counter() - t0
    criterion(2, dev < 1e-6 and elapsed < 5.0, f"max deviation {dev:.2e}, {elapsed:.2f} s")


def test_criterion_03_sld_fixtures(criterion):
    dev = 0.0
    for p in [(0.3, 0.5), (1.2, 0.8), (2.7, 0.25), (4.0, 1.1), (5.9, 0.4)]:
        want = reference_slds(*p)
        got = qfim(ONE, p).slds + qfim(TWO, p).slds
        dev = max(dev, max(np.max(np.abs(a - b)) for a, b in zip(got, want)))
    criterion(3, dev < 1e-8, f"max entry deviation {dev:.2e}")


def test_criterion_04_merit_anchors(criterion):
    vals = {}
    for p in [(np.pi / 4, 0.1), (np.pi / 4, 1e-3)]:
        num = figure_of_merit(classical_fim(TWO, bell_povm(), p), qfim(TWO, p).qfim)
        vals[p] = (bell_merit_analytic(p), num)
    a1, n1 = vals[(np.pi / 4, 0.1)]
    a2, n2 = vals[(np.pi / 4, 1e-3)]
    ok = abs(a1 - 1.475) <= 5e-3 and abs(n1 - 1.475) <= 5e-3 and abs(a2 - 1.5) <= 1e-3 and abs(n2 - 1.5) <= 1e-3
    criterion(4, ok, f"(π/4, 0.1): {a1:.5f}/{n1:.5f}  (π/4, 1e-3): {a2:.6f}/{n2:.6f}")


def test_criterion_05_lu_wang_coefficients(criterion):
    dev = 0.0
    for delta in (0.1, 0.3, 1.0):
        for phi in (0.0, 0.7, np.pi / 4, 2.5):
            i1 = qfim(ONE, (phi, delta))
            c1 = lu_wang_coeffs(i1.rho, *i1.slds, i1.qfim)
            i2 = qfim(TWO, (phi, delta))
            c2 = lu_wang_coeffs(i2.rho, *i2.slds, i2.qfim)
            dev = max(dev, abs(c1.c), abs(c1.c_tilde - 1),
                      abs(c2.c_tilde - np.sqrt(1 + np.exp(-2 * delta**2)) / 2),
                      abs(c2.c_tilde - two_copy_c_tilde(delta)))
    criterion(5, dev < 1e-8, f"max coefficient deviation {dev:.2e}")


def random_povm(g):
    kind = g.integers(3)
    if kind == 0:
        u = random_unitary(4, g)
        return Povm.from_vectors([u[:, i] for i in range(4)], tol=1e-9)
    k = int(g.integers(4, 9))
    if kind == 1:
        v = random_isometry(k, 4, g)
        return Povm.from_vectors([v[i].conj() for i in range(k)], tol=1e-9)
    v = random_isometry(2 * k, 4, g)
    blocks = v.reshape(k, 2, 4)
    return Povm(tuple(b.conj().T @ b for b in blocks), tol=1e-9)


def test_criterion_06_ceiling(criterion):
    g = np.random.default_rng(6)
    t0 = time.perf_counter()
    worst2 = 0.0
    for delta in np.linspace(0.05, 1.0, 8):
        for phi in (0.0, np.pi / 8, np.pi / 4, 1.3):
            worst2 = max(worst2, objective(bell_povm(), (phi, delta)))
    for _ in range(500):
        p = (g.uniform(0, 2 * np.pi), g.uniform(0.05, 1.0))
        worst2 = max(worst2, objective(random_povm(g), p))
    opt = []
    for p in [(np.pi / 4, 0.05), (0.3, 0.3), (0.0, 1.0)]:
        v = optimize_povm(p, restarts=4, seed=6).final_objective
        opt.append(v)
        worst2 = max(worst2, objective(optimize_povm(p, restarts=1, seed=7).final_povm, p), v)
    worst1 = 0.0
    for _ in range(500):
        p = (g.uniform(0, 2 * np.pi), g.uniform(0.05, 1.0))
        u = random_unitary(2, g)
        povm = Povm.from_vectors([u[:, 0], u[:, 1]])
        worst1 = max(worst1, figure_of_merit(classical_fim(ONE, povm, p), qfim_analytic(p, 1)))
    elapsed = time.perf_counter() - t0
    ok = worst2 <= 1.5 + 1e-6 and worst1 <= 1 + 1e-6 and elapsed < 120
    criterion(6, ok, f"two-copy max {worst2:.6f}, single-copy max {worst1:.6f}, "
                     f"optimizer {[round(v, 5) for v in opt]}, {elapsed:.1f} s")


def test_criterion_07_walk(criterion):
    t0 = time.perf_counter()
    res = walk_to_povm(bell_walk_spec())
    elapsed = time.perf_counter() - t0
    complete = np.max(np.abs(sum(res.povm) - np.eye(4)))
    ok = (res.bell_permutation is not None and res.residual_norm < 1e-10
          and res.bell_deviation < 1e-10 and complete < 1e-10 and elapsed < 1.0)
    criterion(7, ok, f"permutation {res.bell_permutation}, residual {res.residual_norm:.1e}, "
                     f"deviation {res.bell_deviation:.1e}, {elapsed:.3f} s")


def test_criterion_08_experiment(criterion, analytic_records):
    recs, elapsed = analytic_records
    z = [(r.merit - bell_merit_analytic(r.setting)) / r.merit_error for r in recs]
    anchor = next(r for r in recs if np.isclose(r.setting.phi, np.pi / 4) and r.setting.delta == 0.1)
    anchor_ok = abs(anchor.merit - 1.475) < 3 * anchor.merit_error
    ok = len(recs) == 10 and max(map(abs, z)) < 3 and anchor_ok and elapsed < 600
    criterion(8, ok, f"max |z| {max(map(abs, z)):.2f}, (π/4, 0.1) merit {anchor.merit:.4f} "
                     f"± {anchor.merit_error:.4f}, {elapsed:.1f} s")


def test_criterion_09_regions(criterion, tmp_path):
    cfg = resolve("regions", {}, None, {"experiment": True, "out_dir": str(tmp_path)})
    cmd_regions(cfg)
    out = json.loads((tmp_path / "regions.json").read_text())
    summary = []
    ok = True
    for d in out:
        theory = d["theory_points"]
        exp = d["experiment_points"]
        t_ok = all(t["lu_wang_satisfied"] and t["region_ii"] for t in theory)
        e_ok = len(exp) == 25 and all(p["lu_wang_satisfied"] and p["region_ii"] for p in exp)
        # re-derive the checks from the stored ratios rather than trusting the flags
        for p in exp:
            chk = experiment_point_checks(p["gamma_phi"], p["gamma_delta"], p["gamma_phi_error"],
                                          p["gamma_delta_error"], d["c_tilde"])
            e_ok = e_ok and chk["lu_wang_satisfied"] and chk["region_ii"]
        for t in theory:
            e_ok = e_ok and lu_wang_regret_check((t["gamma_phi"], t["gamma_delta"]), d["c_tilde"]).satisfied
        ok = ok and t_ok and e_ok
        summary.append(f"Δ={d['delta']}: {len(exp)} experiment + {len(theory)} theory "
                       f"{'inside' if t_ok and e_ok else 'OUTSIDE'}")
    criterion(9, ok and len(out) == 2, "; ".join(summary))


def test_criterion_10_optimal_povm(criterion):
    t0 = time.perf_counter()
    tr = optimize_povm((0.0, 1.0), restarts=20, seed=0)
    elapsed = time.perf_counter() - t0
    rep = analyze_povm(tr.final_povm)
    ref = analyze_povm(load_reference_povm(), tol=1e-3)
    value_ok = 1.35 <= tr.final_objective <= 1.365
    structure_ok = rep.rank_one and not rep.projective and rep.all_overlaps_nonzero
    criterion(10, value_ok and structure_ok and elapsed < 300,
              f"objective {tr.final_objective:.5f} ({elapsed:.1f} s), ranks {rep.ranks}, "
              f"projective {rep.projective}, all overlaps nonzero {rep.all_overlaps_nonzero}; "
              f"reference POVM: ranks {ref.ranks}, projective {ref.projective}, "
              f"all overlaps nonzero {ref.all_overlaps_nonzero}")


def test_criterion_11_finite_sample(criterion, experiment_cfg, analytic_records):
    recs, _ = analytic_records
    mode = EncodingMode("finite_sample", samples=200)
    fin = run_experiments(_settings(experiment_cfg), experiment_cfg, mode=mode, stream=1)
    z = [(a.merit - b.merit) / np.hypot(a.merit_error, b.merit_error) for a, b in zip(recs, fin)]
    criterion(11, max(map(abs, z)) < 3, f"max |z| {max(map(abs, z)):.2f} over {len(z)} settings")

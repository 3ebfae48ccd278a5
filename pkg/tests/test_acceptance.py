"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[PASS]`` or ``[FAIL]`` line (collected again in
the terminal summary) before asserting. Run with ``pytest
tests/test_acceptance.py -v -s`` to see the lines inline.
"""

import time

import numpy as np
import pytest

from conftest import random_index1_problem, record_acceptance
from semitamed import linalg, scheme
from semitamed.cli import main
from semitamed.model import builtin_paper_example, projector_bundle_at
from semitamed.wiener import coarsen, coarsen_increments, generate

EXAMPLE_A = np.array([[1.0, 0, 1], [0, 0, 0], [1, 0, 0]])
EXAMPLE_A_PINV = np.array([[0.0, 0, 1], [0, 0, 0], [1, 0, -1]])


def report(number, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    print(line)
    record_acceptance(line)
    assert ok, line


def test_criterion_1_strong_order(tmp_path, capsys):
    out = tmp_path / "demo.csv"
    start = time.perf_counter()
    code = main(["demo-paper", "--out", str(out)])
    elapsed = time.perf_counter() - start
    capsys.readouterr()
    footer = out.read_text().splitlines()[-1]
    slope = float(footer.split()[1].split("=")[1])
    ok = code == 0 and 0.4 <= slope <= 0.6 and elapsed < 300
    report(1, ok, f"demo slope {slope:.4f} in [0.4, 0.6], runtime {elapsed:.1f}s < 300s")


def test_criterion_2_scheme_equivalence():
    problems = [builtin_paper_example()] + [random_index1_problem(s) for s in (11, 12, 13)]
    worst = 0.0
    for p in problems:
        for N in (2**4, 2**8):
            for seed in range(10):
                w = generate(seed, 0, p.m, N, p.T)
                a = scheme.simulate(p, "direct-tamed", w, diagnostics=False).states
                b = scheme.simulate(p, "dual-tamed", w, diagnostics=False).states
                diff = np.linalg.norm(a - b, axis=1)
                size = np.linalg.norm(a, axis=1)
                worst = max(worst, float(np.max(diff / np.maximum(size, 1e-300))))
    report(2, worst <= 1e-7, f"direct vs dual max relative deviation {worst:.2e} <= 1e-7 "
                             f"(4 problems, N in {{16, 256}}, 10 seeds)")


def test_criterion_3_linear_algebra():
    rng = np.random.default_rng(2024)
    worst_penrose = worst_proj = 0.0
    for _ in range(100):
        rows, cols = (int(x) for x in rng.integers(2, 9, size=2))
        rank = int(rng.integers(0, min(rows, cols) + 1))
        M = rng.standard_normal((rows, rank)) @ rng.standard_normal((rank, cols))
        X = linalg.pseudo_inverse(M)
        scale, xscale = max(np.linalg.norm(M), 1e-300), max(np.linalg.norm(X), 1e-300)
        worst_penrose = max(worst_penrose,
                            np.linalg.norm(M @ X @ M - M) / scale,
                            np.linalg.norm(X @ M @ X - X) / xscale,
                            np.linalg.norm((M @ X).T - M @ X) / max(np.linalg.norm(M @ X), 1.0),
                            np.linalg.norm((X @ M).T - X @ M) / max(np.linalg.norm(X @ M), 1.0))
        if rows == cols:
            P, Q, R = linalg.projectors(M, X)
            worst_proj = max(worst_proj, np.abs(R @ M).max() / max(1.0, np.abs(M).max()),
                             np.abs(P + Q - np.eye(rows)).max(),
                             *(np.abs(E @ E - E).max() for E in (P, Q, R)))
    example_dev = np.abs(linalg.pseudo_inverse(EXAMPLE_A) - EXAMPLE_A_PINV).max()
    P, Q, R = linalg.projectors(EXAMPLE_A, linalg.pseudo_inverse(EXAMPLE_A))
    worst_proj = max(worst_proj, np.abs(R @ EXAMPLE_A).max(), np.abs(P + Q - np.eye(3)).max(),
                     *(np.abs(E @ E - E).max() for E in (P, Q, R)))
    ok = worst_penrose <= 1e-10 and example_dev <= 1e-12 and worst_proj <= 1e-12
    report(3, ok, f"Penrose residual {worst_penrose:.1e} <= 1e-10, example pseudo-inverse "
                  f"deviation {example_dev:.1e} <= 1e-12, projector identities {worst_proj:.1e} <= 1e-12")


def test_criterion_4_example_constants():
    p = builtin_paper_example()
    M1 = scheme.assemble_M1(p, 0.0)
    worst_entry = worst_norm = 0.0
    for h in (1e-3, 1e-1, 1.0):
        target = np.array([[1, 0, -h], [0, 1, 0], [0, 0, 1 + h]])
        worst_entry = max(worst_entry, np.abs(np.eye(3) + h * M1 - target).max())
        inv = np.linalg.inv(np.eye(3) + h * M1)
        worst_norm = max(worst_norm, abs(linalg.mat_norm_1(inv) - 1.0))
    stab = scheme.check_stability(p, 0.1, [0.0, 1.0])
    ok = worst_entry <= 1e-12 and worst_norm <= 1e-12 and stab.ok
    report(4, ok, f"I + hM1 entries off by {worst_entry:.1e}, |(I + hM1)^-1|_1 - 1 = "
                  f"{worst_norm:.1e} for h in {{1e-3, 0.1, 1}}")


def test_criterion_5_constraint_residual():
    p = builtin_paper_example()
    R = projector_bundle_at(p, 0.0).R
    B = p.B_at(0.0)
    worst = 0.0
    for seed in range(20):
        w = generate(seed, 0, p.m, 2**8, p.T)
        X = scheme.simulate(p, "direct-tamed", w, diagnostics=False).states
        h = w.h
        F = p.drift(0.0, X[:-1])
        phi = F / (1 + h * np.linalg.norm(F, axis=1, keepdims=True))
        res = np.linalg.norm(X[1:] @ (R @ B).T + phi @ R.T, axis=1)
        worst = max(worst, float(np.max(res / (1 + np.linalg.norm(X[1:], axis=1)))))
    report(5, worst <= 1e-9, f"scaled constraint residual {worst:.1e} <= 1e-9 (20 seeds, N = 256)")


def test_criterion_6_moment_bound():
    # one set of 64 Brownian paths, seen at every resolution
    p = builtin_paper_example()
    fine = np.stack([generate(99, k, p.m, 2**12, p.T).increments for k in range(64)])
    moments, finite = [], True
    for N in (2**6, 2**8, 2**10, 2**12):
        inc = coarsen_increments(fine, 2**12 // N)
        final = scheme.integrate(p, "direct-tamed", inc, record_every=N).states[:, -1]
        finite &= bool(np.all(np.isfinite(final)))
        moments.append(float(np.mean(np.sum(final**2, axis=1))))
    ratio = max(moments) / min(moments)
    report(6, finite and ratio < 2, f"E|X_N|^2 across N = {', '.join(f'{m:.3e}' for m in moments)}; "
                                    f"max/min {ratio:.3f} < 2, all finite: {finite}")


def test_criterion_7_taming_bound():
    rng = np.random.default_rng(7)
    worst = -np.inf
    for _ in range(10_000):
        d = int(rng.integers(1, 8))
        f = rng.standard_normal(d) * 10.0 ** rng.uniform(-150, 150)
        h = 10.0 ** rng.uniform(-8, 1)
        bound = min(1.0, h * np.hypot.reduce(f))
        worst = max(worst, np.hypot.reduce(scheme.tame(f, h)) - bound * (1 + 1e-15))
    report(7, worst <= 0.0, f"10^4 pairs, max excess over min(1, h|f|) = {max(worst, 0.0):.1e}")


def test_criterion_8_wiener_coupling():
    rng = np.random.default_rng(8)
    exact = True
    for k in range(100):
        logN = int(rng.integers(2, 12))
        w = generate(int(rng.integers(0, 2**62)), k, int(rng.integers(1, 4)), 2**logN,
                     float(rng.uniform(0.1, 5.0)))
        exact &= np.array_equal(coarsen(coarsen(w, 2), 2).increments, coarsen(w, 4).increments)
        exact &= all(np.array_equal(coarsen(w, 2**j).W_T, w.W_T) for j in range(logN + 1))
    report(8, exact, "coarsening exact on 100 random grids (W(T) invariant, 2 then 2 equals 4)")


@pytest.mark.parametrize("command", ["simulate", "converge"])
def test_criterion_9_determinism(tmp_path, capsys, command):
    args = {
        "simulate": ["simulate", "--model", "paper-example", "--steps", "256", "--seed", "42"],
        "converge": ["converge", "--model", "paper-example", "--nref", "1024", "--nlist", "32,64,128",
                     "--paths", "16", "--seed", "5", "--workers", "3"],
    }[command]
    outputs = []
    for name in ("a.csv", "b.csv"):
        main(args + ["--out", str(tmp_path / name)])
        outputs.append((tmp_path / name).read_bytes())
    capsys.readouterr()
    report(9, outputs[0] == outputs[1], f"{command}: repeated CLI runs give byte-identical CSV")

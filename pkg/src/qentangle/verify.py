"""Executable property suites, one per proven statement, run by ``qentangle verify``.

Each suite takes a seed and returns ``(passed, cases, detail)``. They are
smaller versions of the test-suite properties so a full run takes seconds.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable

import numpy as np

from .descriptive import gate_census, qca, sqcd, trivial_upper_bound
from .distinguish import (
    advantage,
    build_reversal_distinguisher,
    build_swap_test_distinguisher,
    conjugate_distinguisher,
    embed_prefix,
    indistinguishability_check,
    worst_case_advantage,
)
from .qcircuit import (
    constructor_library,
    decode_prefix,
    encode_prefix,
    ghz_circuit,
    output_density,
    prefix_length,
    random_circuit,
)
from .qstate import (
    QubitPermutation,
    Qustring,
    apply_permutation,
    bell,
    ghz,
    pairwise,
    random_density,
    random_state,
    tensor_all,
    trace_distance,
)
from .separability import entropy_gap_check, finest_factorization, sdis, sdis_oracle


def _ghz_constants(seed: int) -> tuple:
    worst = 0.0
    for n in range(2, 6):
        worst = max(worst, abs(sdis(ghz(n), 2, seed=seed).value - sdis_oracle(ghz(n), 2, method="schmidt")))
    return worst < 1e-4, 4, f"max |sdis - oracle| = {worst:.2e}"


def _structure_recovery(seed: int) -> tuple:
    ok = True
    for n in range(2, 5):
        rep = finest_factorization(pairwise(2 * n))
        ok &= rep.sind == n and trace_distance(rep.reconstruct(), pairwise(2 * n)) < 1e-7
    return ok, 3, "sind(psi_2n) = n and exact reconstruction"


def _permutation_invariance(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(3, 5))
        phi, sigma = random_state(n, rng), QubitPermutation.random(n, rng)
        a = sdis(phi, 2, seed=seed).value
        b = sdis(apply_permutation(sigma, phi), 2, seed=seed).value
        worst = max(worst, abs(a - b))
    return worst < 1e-6, 10, f"max difference {worst:.2e}"


def _close_indistinguishable(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    circuits = [random_circuit(rng, 5, 20, inputs=4) for _ in range(50)]
    rep = indistinguishability_check(ghz(4), 2, circuits, seed=seed)
    return rep.holds, len(circuits), f"max advantage {rep.max_advantage:.5f} <= cap {rep.cap:.5f}"


def _data_processing(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    violations = 0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        c = random_circuit(rng, n + int(rng.integers(0, 2)), int(rng.integers(0, 21)), inputs=n)
        a, b = random_density(n, rng), random_density(n, rng)
        violations += advantage(c, a, b) > trace_distance(a, b) + 1e-9
    return violations == 0, 100, f"{violations} violations"


def _entropy_gap(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    checked = bad = 0
    for i in range(20):
        k = 2 + i % 3
        factors = [random_state(m, rng) for m in ([2, 2], [1, 1, 2], [1, 1, 1, 1])[k - 2]]
        noise = random_state(4, rng).amplitudes * 0.05
        phi = Qustring.from_vector(tensor_all(factors).amplitudes + noise, normalize=True)
        res = entropy_gap_check(phi, k, seed=seed)
        if res.status == "checked":
            checked += 1
            bad += not res.holds
    return bad == 0 and checked > 0, checked, f"{bad} violations"


def _reversal_law(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    d = build_reversal_distinguisher(ghz_circuit(3))
    worst = 0.0
    for _ in range(50):
        phi = random_state(3, rng)
        f2 = abs(np.vdot(ghz(3).amplitudes, phi.amplitudes)) ** 2
        worst = max(worst, abs(d.acceptance(phi) - f2))
    eps = worst_case_advantage(embed_prefix(d), ghz(3), seed=seed).epsilon_star
    return worst < 1e-9 and abs(eps - 0.5) < 1e-3, 51, f"law error {worst:.1e}, eps* = {eps:.6f}"


def _swap_law(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(1, 3))
        approx = random_circuit(rng, n + 1, 8, inputs=n)
        d = build_swap_test_distinguisher(approx, n)
        rho = output_density(approx, n)
        psi = random_state(n, rng)
        expect = 0.5 + 0.5 * float(np.real(np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)))
        worst = max(worst, abs(d.acceptance(psi) - expect))
    return worst < 1e-9, 50, f"max error {worst:.1e}"


def _permutation_closure(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(5):
        sigma = QubitPermutation.random(4, rng)
        d = build_reversal_distinguisher(constructor_library("pairwise", 4).circuit)
        a = worst_case_advantage(d, pairwise(4), seed=seed).epsilon_star
        b = worst_case_advantage(conjugate_distinguisher(d, sigma), apply_permutation(sigma, pairwise(4)), seed=seed)
        worst = max(worst, abs(a - b.epsilon_star))
    return worst < 1e-9, 5, f"max eps* difference {worst:.1e}"


def _sqcd_lower(seed: int) -> tuple:
    est = sqcd(bell(), 2, 3, seed=seed)
    lower = -math.log2(sdis(bell(), 2).value)
    return est.value > lower + 1e-9, 1, f"sQCD {est.value:.3f} > {lower:.3f}"


def _qca_trivial(seed: int) -> tuple:
    rng = np.random.default_rng(seed)
    ok = True
    for _ in range(10):
        t = random_state(2, rng)
        ok &= qca(t, 2).value <= trivial_upper_bound(t).value + 1e-9 <= 2 * 2 + 14 + 1e-9
    ok &= gate_census(2) == 10
    return ok, 10, "qca <= basis-circuit bound <= 2n + 14"


def _prefix_codec(seed: int) -> tuple:
    cases = 0
    ok = True
    for n in range(1, 5):
        for perm in itertools.permutations(range(1, n + 1)):
            for k in range(1, n + 1):
                for cut in itertools.combinations(range(1, n), k - 1):
                    bounds = (0,) + cut + (n,)
                    m = tuple(b - a for a, b in zip(bounds, bounds[1:]))
                    enc = encode_prefix(QubitPermutation(perm), m)
                    ok &= decode_prefix(enc.bits) == enc and len(enc.bits) == prefix_length(n, k)
                    cases += 1
    return ok, cases, "round trip and length formula"


def _monotone_k(seed: int) -> tuple:
    d3 = build_reversal_distinguisher(ghz_circuit(3), 3)
    d2 = build_reversal_distinguisher(ghz_circuit(3), 2)
    e2 = worst_case_advantage(d2, ghz(3), seed=seed).epsilon_star
    e3 = worst_case_advantage(d3, ghz(3), seed=seed).epsilon_star
    return e3 >= e2 - 1e-9, 2, f"eps*(k=2) = {e2:.6f}, eps*(k=3) = {e3:.6f}"


SUITES: dict[str, Callable[[int], tuple]] = {
    "ghz-distance-constants": _ghz_constants,
    "structure-recovery": _structure_recovery,
    "sdis-permutation-invariance": _permutation_invariance,
    "entropy-gap": _entropy_gap,
    "close-implies-indistinguishable": _close_indistinguishable,
    "data-processing-cap": _data_processing,
    "distinguishability-monotone-in-k": _monotone_k,
    "permutation-closure": _permutation_closure,
    "reversal-acceptance-law": _reversal_law,
    "swap-test-law": _swap_law,
    "prefix-codec": _prefix_codec,
    "qca-trivial-bound": _qca_trivial,
    "sqcd-lower-bound": _sqcd_lower,
}


def run_suites(names, seed: int) -> list:
    rows = []
    for name in names:
        passed, cases, detail = SUITES[name](seed)
        rows.append({"suite": name, "passed": bool(passed), "cases": int(cases), "detail": detail})
    return rows

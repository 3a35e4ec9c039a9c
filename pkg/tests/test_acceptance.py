"""One test per acceptance criterion; a PASS/FAIL line each is printed in the summary."""

import itertools
import math

import numpy as np

import oracles
from qentangle.descriptive import CircuitEnumeration, load_constants, qca, sqcd, trivial_upper_bound
from qentangle.distinguish import (
    advantage,
    build_reversal_distinguisher,
    build_swap_test_distinguisher,
    conjugate_distinguisher,
    embed_prefix,
    swap_test_bound,
    worst_case_advantage,
)
from qentangle.errors import NotDefinedError
from qentangle.qcircuit import (
    SMALL_COIN_WORD,
    QuantumCircuit,
    acceptance_probability,
    decode_prefix,
    encode_prefix,
    ghz_circuit,
    output_density,
    perturbed_ghz_approximator,
    prefix_length,
    random_circuit,
    simulate,
)
from qentangle.qstate import (
    QubitPermutation,
    Qustring,
    apply_permutation,
    bell,
    ghz,
    is_isotopic,
    metrics,
    pairwise,
    random_density,
    random_state,
    tensor_all,
    trace_distance,
)
from qentangle.separability import entropy_gap_check, finest_factorization, sdis, sdis_oracle

SEED = 20240601


def test_criterion_1_ghz_distance_constants(criterion):
    worst_oracle = 0.0
    min_sdis = min_bures = min_l2 = math.inf
    for n in range(2, 9):
        res = sdis(ghz(n), 2)
        worst_oracle = max(worst_oracle, abs(res.value - sdis_oracle(ghz(n), 2, method="schmidt")))
        worst_oracle = max(worst_oracle, abs(res.value - oracles.bipartition_sdis(oracles.ghz_vec(n), n)))
        min_sdis = min(min_sdis, res.value)
        for prod in (res.nearest, Qustring.zeros(n)):
            m = metrics(ghz(n), prod)
            min_bures, min_l2 = min(min_bures, m.bures), min(min_l2, m.l2)
    ok = (
        min_sdis >= 0.5
        and abs(min_sdis - 1 / math.sqrt(2)) <= 1e-4
        and worst_oracle <= 1e-4
        and min_bures >= 2 - math.sqrt(2) - 1e-6
        and min_l2 >= math.sqrt(2 - math.sqrt(2)) - 1e-6
    )
    criterion(1, ok, f"min sdis {min_sdis:.6f}, |sdis-oracle| {worst_oracle:.1e}, min Bures {min_bures:.6f}, min L2 {min_l2:.6f}")


def test_criterion_2_structure_recovery(criterion):
    ok, worst = True, 0.0
    for n in range(2, 6):
        psi = pairwise(2 * n)
        rep = finest_factorization(psi)
        bells = tensor_all([bell()] * n)
        mapped = apply_permutation(rep.finest_partition.sigma, psi)
        err = trace_distance(rep.reconstruct(), psi)
        worst = max(worst, err)
        ok &= rep.sind == n and mapped.equals_up_to_phase(bells) and err < 1e-7
        if 2 * n <= 8:
            sigma = is_isotopic(psi, bells)
            ok &= sigma is not None and apply_permutation(sigma, psi).equals_up_to_phase(bells)
    criterion(2, ok, f"sind(psi_2n) = n for n = 2..5, max reconstruction distance {worst:.1e}")


def test_criterion_3_data_processing(criterion):
    rng = np.random.default_rng(SEED)
    violations, total = 0, 1000
    for i in range(total):
        n = 1 + i % 3
        c = random_circuit(rng, n + int(rng.integers(0, 2)), int(rng.integers(0, 21)), inputs=n)
        c = c.with_output(int(rng.integers(1, c.width + 1)))
        if i % 2:
            a, b = random_state(n, rng), random_state(n, rng)
        else:
            a, b = random_density(n, rng), random_density(n, rng)
        violations += advantage(c, a, b) > trace_distance(a, b) + 1e-9
    criterion(3, violations == 0, f"{total} instances, {violations} violations")


def test_criterion_4_reversal_distinguisher(criterion):
    rng = np.random.default_rng(SEED)
    eps, law = [], 0.0
    for n in range(2, 7):
        d = build_reversal_distinguisher(ghz_circuit(n))
        eps.append(worst_case_advantage(embed_prefix(d), ghz(n)).epsilon_star)
        for _ in range(20):
            phi = random_state(n, rng)
            f2 = abs(np.vdot(oracles.ghz_vec(n), phi.amplitudes)) ** 2
            law = max(law, abs(d.acceptance(phi) - f2))
    ok = all(abs(e - 0.5) <= 1e-3 for e in eps) and min(eps) > 0.25 and law <= 1e-9
    criterion(4, ok, f"eps* for n=2..6: {[round(e, 6) for e in eps]}, F^2 law error {law:.1e}")


def test_criterion_5_swap_test(criterion):
    rng = np.random.default_rng(SEED)
    worst, cases = 0.0, 500
    for i in range(cases):
        n = 1 + i % 2
        approx = random_circuit(rng, n + int(rng.integers(0, 2)), int(rng.integers(0, 10)), inputs=n)
        rho = output_density(approx, n)
        psi = random_state(n, rng)
        expect = 0.5 + 0.5 * float(np.real(np.vdot(psi.amplitudes, rho.matrix @ psi.amplitudes)))
        worst = max(worst, abs(build_swap_test_distinguisher(approx, n).acceptance(psi) - expect))
    # the coin gives trace distance sin(pi/8)^4 ~ 0.021 <= 0.05, so it is a 0.05-approximator
    eps = 0.05
    ends = []
    for n in (2, 3):
        approx = perturbed_ghz_approximator(n, SMALL_COIN_WORD)
        dist = trace_distance(output_density(approx, n), ghz(n))
        delta = sdis(ghz(n), 2).value
        adv = worst_case_advantage(embed_prefix(build_swap_test_distinguisher(approx, n)), ghz(n)).epsilon_star
        ends.append((n, dist, adv, swap_test_bound(delta, eps)))
    ok = worst <= 1e-9 and all(d <= eps and a >= b - 1e-9 for _, d, a, b in ends)
    detail = ", ".join(f"n={n}: dist {d:.4f}, adv {a:.4f} >= eps' {b:.4f}" for n, d, a, b in ends)
    criterion(5, ok, f"{cases} law cases, max error {worst:.1e}; {detail}")


def test_criterion_6_entropy_gap(criterion):
    rng = np.random.default_rng(SEED)
    layouts = {2: [2, 2], 3: [1, 1, 2], 4: [1, 1, 1, 1]}
    checked = violations = attempts = 0
    while checked < 200:
        k = 2 + attempts % 3
        attempts += 1
        sizes = layouts[k]
        base = tensor_all([random_state(m, rng) for m in sizes])
        base = apply_permutation(QubitPermutation.random(4, rng), base)
        noise = random_state(4, rng).amplitudes * rng.uniform(0.0, 0.4)
        phi = Qustring.from_vector(base.amplitudes + noise, normalize=True)
        res = entropy_gap_check(phi, k, restarts=8)
        if res.status != "checked":
            continue
        checked += 1
        violations += not res.holds
    criterion(6, violations == 0, f"{checked} states with sdis <= 1/e ({attempts} drawn), {violations} violations")


def test_criterion_7_descriptive_bounds(criterion):
    rng = np.random.default_rng(SEED)
    c = load_constants()["qca_two_qubit_c"]
    batch = [bell()] + [random_state(2, rng) for _ in range(5)]
    for _ in range(4):
        a, theta = rng.uniform(0.3, 0.95), rng.uniform(0, 2 * math.pi)
        batch.append(Qustring.from_vector([a, 0, 0, math.sqrt(1 - a * a) * np.exp(1j * theta)]))
    qca_ok = all(qca(t, 3).value <= trivial_upper_bound(t).value + 1e-9 <= 2 * 2 + c + 1e-9 for t in batch)
    lower = []
    for t in batch:
        # no circuit within the bound has positive advantage: the bounded sQCD is +inf
        try:
            lower.append(sqcd(t, 2, 3, seed=SEED).value + math.log2(sdis(t, 2).value))
        except NotDefinedError:
            lower.append(math.inf)
    finite = sum(math.isfinite(v) for v in lower)
    ks = {}
    for k in (2, 3):
        extra = [build_reversal_distinguisher(ghz_circuit(3), k)]
        ks[k] = sqcd(ghz(3), k, 8, budget=30000, seed=SEED, extra=extra).value
    lower.append(ks[2] + math.log2(sdis(ghz(3), 2).value))
    total, _ = oracles.census_recount(2, 3)
    enum = CircuitEnumeration(2, 3)
    count = sum(1 for _ in enum)
    ok = qca_ok and finite >= 2 and min(lower) > 1e-9 and ks[3] <= ks[2] + 1e-9 and enum.exhaustive and count == total
    criterion(
        7,
        ok,
        f"qca <= 2n+{c} on {len(batch)} targets: {qca_ok}; sQCD finite on {finite}, min sQCD + log sdis {min(lower):.3f}; "
        f"sQCD(GHZ3) k=2 {ks[2]:.1f}, k=3 {ks[3]:.1f}; census {count} == recount {total}",
    )


def test_criterion_8_permutation_invariance(criterion):
    rng = np.random.default_rng(SEED)
    worst_sdis = worst_eps = 0.0
    nonzero = 0
    for i in range(100):
        n = 3 + i % 2
        c = random_circuit(rng, n, 20)
        target = simulate(c, Qustring.zeros(n))
        sigma = QubitPermutation.random(n, rng)
        moved = apply_permutation(sigma, target)
        k = 2 + i % (n - 1)
        worst_sdis = max(worst_sdis, abs(sdis(target, k, restarts=8).value - sdis(moved, k, restarts=8).value))
        d = build_reversal_distinguisher(c, k)
        e1 = worst_case_advantage(d, target).epsilon_star
        e2 = worst_case_advantage(conjugate_distinguisher(d, sigma), moved).epsilon_star
        worst_eps = max(worst_eps, abs(e1 - e2))
        nonzero += e1 > 1e-6
    ok = worst_sdis <= 1e-6 and worst_eps <= 1e-9
    criterion(8, ok, f"100 pairs ({nonzero} with eps* > 0): max sdis diff {worst_sdis:.1e}, max eps* diff {worst_eps:.1e}")


def test_criterion_9_prefix_codec(criterion):
    cases, bad = 0, 0
    for n in range(1, 7):
        for perm in itertools.permutations(range(1, n + 1)):
            sigma = QubitPermutation(perm)
            for k in range(1, n + 1):
                for cut in itertools.combinations(range(1, n), k - 1):
                    bounds = (0,) + cut + (n,)
                    m = tuple(b - a for a, b in zip(bounds, bounds[1:]))
                    enc = encode_prefix(sigma, m)
                    back = decode_prefix(enc.bits)
                    good = (
                        back.sigma == sigma
                        and back.sectioning == m
                        and enc.bits == oracles.unary_prefix(perm, m)
                        and 2 * len(enc.bits) == n * n + 5 * n + 2 * k + 4
                        and len(enc.bits) == prefix_length(n, k)
                    )
                    bad += not good
                    cases += 1
    criterion(9, bad == 0, f"{cases} (sigma, m) pairs for n <= 6, {bad} failures")

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qentangle.qcircuit import (
    ENSEMBLES,
    H_EIGENSTATE_WORD,
    SMALL_COIN_WORD,
    Gate,
    QuantumCircuit,
    acceptance_operator,
    acceptance_probability,
    circuit_from_json,
    circuit_to_json,
    constructor_library,
    decode_prefix,
    deserialize,
    elias_gamma,
    encode_prefix,
    encoding_length,
    gate,
    ghz_circuit,
    normalize_t_powers,
    output_density,
    perturbed_ghz_approximator,
    permutation_network,
    prefix_length,
    random_circuit,
    reverse_circuit,
    serialize,
    simulate,
    unitary,
    word_gates,
)
from qentangle.qstate import (
    DensityOperator,
    QubitPermutation,
    Qustring,
    apply_permutation,
    bell,
    ghz,
    pairwise,
    random_density,
    random_state,
    tensor_product,
    trace_distance,
)

seeds = st.integers(0, 2**32 - 1)


def _as_pairs(c):
    return [(g.kind, g.targets) for g in c.gates]


def test_gate_validation():
    with pytest.raises(ValueError):
        Gate("Y", (1,))
    with pytest.raises(ValueError):
        Gate("CNOT", (1, 1))
    with pytest.raises(ValueError):
        Gate("CNOT", (1,))
    with pytest.raises(ValueError):
        QuantumCircuit(2, (gate("X", 3),))
    with pytest.raises(ValueError):
        QuantumCircuit(2, (), output_qubit=3)
    assert gate("CSWAP", 1, 3, 2).targets == (1, 2, 3)


def test_simulate_examples(rng):
    phi = random_state(2, rng)
    out = simulate(QuantumCircuit(2, (), ancillas=1), phi)
    assert np.allclose(out.amplitudes, tensor_product(phi, Qustring.zeros(1)).amplitudes)
    out = simulate(QuantumCircuit(2, (gate("H", 1), gate("CNOT", 1, 2))), Qustring.zeros(2))
    assert np.allclose(out.amplitudes, bell().amplitudes)
    out = simulate(QuantumCircuit(2, (gate("X", 2), gate("X", 2))), phi)
    assert np.allclose(out.amplitudes, phi.amplitudes)
    with pytest.raises(ValueError):
        simulate(QuantumCircuit(3), phi)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_unitary_matches_dense_oracle(seed):
    rng = np.random.default_rng(seed)
    w = int(rng.integers(1, 5))
    c = random_circuit(rng, w, int(rng.integers(0, 15)))
    assert np.allclose(unitary(c), oracles.circuit_matrix(_as_pairs(c), w), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_hybrid_simulation_with_ancillas_and_prefix(seed):
    rng = np.random.default_rng(seed)
    lp, n, anc = int(rng.integers(0, 3)), int(rng.integers(1, 3)), int(rng.integers(0, 2))
    prefix = "".join(rng.choice(["0", "1"], size=lp))
    c = random_circuit(rng, lp + n + anc, int(rng.integers(0, 15)), inputs=lp + n)
    c = c.with_output(int(rng.integers(1, c.width + 1)))
    phi = random_state(n, rng)
    full = np.kron(np.kron(Qustring.basis(prefix).amplitudes if lp else [1], phi.amplitudes), Qustring.zeros(anc).amplitudes if anc else [1])
    ref = oracles.circuit_matrix(_as_pairs(c), c.width) @ full
    got = simulate(c, phi, prefix=prefix)
    assert np.allclose(got.amplitudes, ref, atol=1e-12)
    assert abs(np.linalg.norm(got.amplitudes) - 1) < 1e-9
    mask = [(i >> (c.width - c.output_qubit)) & 1 for i in range(2**c.width)]
    p_ref = float(np.sum(np.abs(ref) ** 2 * np.array(mask)))
    assert acceptance_probability(c, phi, prefix=prefix) == pytest.approx(p_ref, abs=1e-12)
    m = acceptance_operator(c, prefix=prefix)
    assert np.real(np.vdot(phi.amplitudes, m @ phi.amplitudes)) == pytest.approx(p_ref, abs=1e-12)


def test_acceptance_examples(rng):
    assert acceptance_probability(QuantumCircuit(1, (gate("X", 1),)), Qustring.zeros(1)) == pytest.approx(1)
    assert acceptance_probability(QuantumCircuit(1, (gate("H", 1),)), Qustring.zeros(1)) == pytest.approx(0.5)
    for _ in range(20):
        c = random_circuit(rng, 3, 10, inputs=2)
        r1, r2 = random_density(2, rng), random_density(2, rng)
        mix = DensityOperator((r1.matrix + r2.matrix) / 2)
        p = acceptance_probability(c, mix)
        assert p == pytest.approx((acceptance_probability(c, r1) + acceptance_probability(c, r2)) / 2, abs=1e-12)
    with pytest.raises(ValueError):
        acceptance_probability(QuantumCircuit(3), random_density(2, rng))


def test_acceptance_unchanged_by_late_gates_elsewhere(rng):
    for _ in range(20):
        c = random_circuit(rng, 3, 8)
        phi = random_state(3, rng)
        tail = [g for g in random_circuit(rng, 3, 6).gates if 1 not in g.targets]
        assert acceptance_probability(c.append(*tail), phi) == pytest.approx(acceptance_probability(c, phi), abs=1e-12)


def test_prefix_examples(rng):
    enc = encode_prefix(QubitPermutation.identity(4), (2, 2))
    assert len(enc.bits) == 22 == prefix_length(4, 2)
    enc = encode_prefix(QubitPermutation.identity(2), (1, 1))
    assert enc.bits == "10110" + "0" + "1010" + "0"
    assert len(enc.bits) == 11
    for _ in range(100):
        n = int(rng.integers(1, 7))
        sigma = QubitPermutation.random(n, rng)
        cuts = sorted(rng.choice(np.arange(1, n), size=int(rng.integers(0, n)), replace=False).tolist()) if n > 1 else []
        bounds = [0] + cuts + [n]
        m = tuple(b - a for a, b in zip(bounds, bounds[1:]))
        enc = encode_prefix(sigma, m)
        assert enc.bits == oracles.unary_prefix(sigma.mapping, m)
        back = decode_prefix(enc.bits)
        assert (back.sigma, back.sectioning) == (sigma, m)
    with pytest.raises(ValueError):
        encode_prefix(QubitPermutation.identity(3), (1, 1))
    for bad in ("", "1", "10", "1010", "10010", "1a0"):
        with pytest.raises(ValueError):
            decode_prefix(bad)


def test_constructor_library_examples():
    c = constructor_library("ghz", 2)
    assert c.circuit.size == 2 and c.target.equals_up_to_phase(bell())
    for name, n, param in (("ghz", 5, None), ("pairwise", 4, None), ("pairwise", 6, None), ("phase", 3, 1), ("phase", 3, 0), ("basis", 2, "01")):
        built = constructor_library(name, n, param)
        assert built.circuit.ancillas == 0
        out = simulate(built.circuit, Qustring.zeros(n))
        assert np.allclose(out.amplitudes, built.target.amplitudes, atol=1e-9)
    assert np.allclose(constructor_library("pairwise", 4).target.amplitudes, pairwise(4).amplitudes)
    b = constructor_library("basis", 2, "01")
    assert b.circuit.size == 1 and b.target.equals_up_to_phase(Qustring.basis("01"))
    assert constructor_library("phase", 2, 1).target.amplitudes[-1].real < 0
    for args in (("pairwise", 3), ("nope", 2), ("basis", 3, "01"), ("ghz", 0)):
        with pytest.raises(ValueError):
            constructor_library(*args)


def test_constructor_sizes_linear():
    for n in range(2, 9):
        assert constructor_library("ghz", n).circuit.size == n
        assert constructor_library("pairwise", 2 * n).circuit.size <= 2 * n + 3 * 2 * n


def test_reverse_examples(rng):
    for n in range(2, 6):
        out = simulate(reverse_circuit(ghz_circuit(n)), ghz(n))
        assert out.equals_up_to_phase(Qustring.zeros(n))
    assert reverse_circuit(QuantumCircuit(2)).gates == ()
    for _ in range(30):
        c = random_circuit(rng, 3, 12, inputs=2)
        phi = random_state(2, rng)
        mid = simulate(c, phi)
        back = Qustring.from_vector(unitary(reverse_circuit(c)) @ mid.amplitudes)
        assert back.equals_up_to_phase(tensor_product(phi, Qustring.zeros(1)))
        u = unitary(c)
        assert np.allclose(unitary(reverse_circuit(c)) @ u, np.eye(2**c.width), atol=1e-9)
        assert normalize_t_powers(reverse_circuit(reverse_circuit(c))) == normalize_t_powers(c)


def test_permutation_network_examples(rng):
    assert permutation_network(QubitPermutation.identity(4)).gates == ()
    net = permutation_network(QubitPermutation((2, 1)))
    assert simulate(net, Qustring.basis("01")).equals_up_to_phase(Qustring.basis("10"))
    for _ in range(30):
        n = int(rng.integers(1, 6))
        sigma, phi = QubitPermutation.random(n, rng), random_state(n, rng)
        net = permutation_network(sigma)
        assert net.size <= 3 * n and all(g.kind == "CNOT" for g in net.gates)
        assert np.allclose(simulate(net, phi).amplitudes, apply_permutation(sigma, phi).amplitudes, atol=1e-9)


def test_gate_words():
    v = simulate(QuantumCircuit(1, tuple(word_gates(H_EIGENSTATE_WORD, 1))), Qustring.zeros(1)).amplitudes
    assert np.real(np.vdot(v, oracles.H @ v)) == pytest.approx(1, abs=1e-12)
    coin = QuantumCircuit(1, tuple(word_gates(SMALL_COIN_WORD, 1)))
    assert acceptance_probability(coin, Qustring.zeros(1)) == pytest.approx(math.sin(math.pi / 8) ** 4, abs=1e-12)


def test_perturbed_approximator_distance(frozen):
    for n in range(2, 5):
        rho = output_density(perturbed_ghz_approximator(n), n)
        assert trace_distance(rho, ghz(n).density()) == pytest.approx(frozen["coin_probability"], abs=1e-12)


def test_ensembles():
    for name, spec in ENSEMBLES.items():
        for n in range(1, 4):
            state = spec(n)
            assert state.n == spec.size_factor(n)
            if spec.constructor is not None:
                assert simulate(spec.constructor(n), Qustring.zeros(state.n)).equals_up_to_phase(state)
        assert all(spec.size_factor(n + 1) > spec.size_factor(n) for n in range(1, 6))


def test_encoding_golden(frozen):
    assert serialize(ghz_circuit(2)) == frozen["ghz2_serialization"]
    assert encoding_length(ghz_circuit(2)) == 17
    assert serialize(QuantumCircuit(1)) == frozen["empty1_serialization"]
    assert encoding_length(QuantumCircuit(1)) == 4
    # header: gamma(2) gamma(1) gamma(1) gamma(3), then H[1], CNOT[1,2]
    expect = oracles.elias_gamma(2) + "1" + "1" + oracles.elias_gamma(3) + "010" + "0" + "100" + "0" + "1"
    assert serialize(ghz_circuit(2)) == expect


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_codec_roundtrip_and_monotone(seed):
    rng = np.random.default_rng(seed)
    w = int(rng.integers(1, 6))
    c = random_circuit(rng, w, int(rng.integers(0, 12)), inputs=int(rng.integers(1, w + 1)))
    bits = serialize(c)
    assert len(bits) == encoding_length(c) >= c.size
    assert deserialize(bits) == c
    assert circuit_from_json(circuit_to_json(c)) == c
    longer = c.append(random_circuit(rng, w, 1).gates[0])
    assert encoding_length(longer) > encoding_length(c)


def test_codec_errors():
    with pytest.raises(ValueError):
        deserialize(serialize(ghz_circuit(2)) + "0")
    with pytest.raises(ValueError):
        elias_gamma(0)
    with pytest.raises(ValueError):
        circuit_from_json({"gates": []})
    with pytest.raises(ValueError):
        circuit_from_json({"inputs": 2, "gates": [{"g": "CNOT", "t": [1, 3]}]})


def test_prefix_codec_exhaustive_small():
    count = 0
    for n in range(1, 5):
        for perm in itertools.permutations(range(1, n + 1)):
            for k in range(1, n + 1):
                for cut in itertools.combinations(range(1, n), k - 1):
                    bounds = (0,) + cut + (n,)
                    m = tuple(b - a for a, b in zip(bounds, bounds[1:]))
                    enc = encode_prefix(QubitPermutation(perm), m)
                    assert len(enc.bits) == prefix_length(n, k) == (n * n + 5 * n) // 2 + k + 2
                    assert decode_prefix(enc.bits) == enc
                    count += 1
    assert count > 0

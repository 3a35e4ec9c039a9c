"""Distinguishers against k-separable states and certification of their advantage.

Three constructions are provided: circuit reversal of an exact constructor
(accepts with probability ``F^2``), the controlled-SWAP test fed by an
approximator, and a prefix-dispatch circuit that routes each encoded
``(sigma, sectioning)`` pair to its own sub-circuit.

Advantages are exact: for a fixed prefix the acceptance probability is the
quadratic form ``<phi|M|phi>`` with ``M`` read off the simulator, and the
worst case over product states is bracketed by maximizing and minimizing that
form with alternating block updates.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import CapabilityError, MissingPairError
from .qcircuit import (
    H_EIGENSTATE_WORD,
    Gate,
    PrefixEncoding,
    QuantumCircuit,
    acceptance_operator,
    acceptance_probability,
    encode_prefix,
    gate,
    permutation_network,
    prefix_length,
    reverse_circuit,
    word_gates,
)
from .qstate import (
    QubitPermutation,
    Qustring,
    State,
    permutation_operator,
    trace_distance,
)
from .separability import (
    DEFAULT_SEED,
    BlockPartition,
    _als_form_max,
    _random_unit,
    _top_block_vectors,
    sdis,
    set_partitions,
    unblock,
)

ADVANTAGE_LIMIT = 8
DEFAULT_SAMPLES = 3
ADVANTAGE_TOL = 1e-13


def _pair_key(pair) -> tuple:
    """Normalize a ``(sigma, sectioning)`` designation to a hashable key."""
    if isinstance(pair, PrefixEncoding):
        return pair.sigma.mapping, pair.sectioning
    if isinstance(pair, BlockPartition):
        return pair.sigma.mapping, pair.sectioning
    sigma, sectioning = pair
    if isinstance(sigma, QubitPermutation):
        sigma = sigma.mapping
    return tuple(int(s) for s in sigma), tuple(int(m) for m in sectioning)


@dataclass(frozen=True)
class DistinguisherSpec:
    """A distinguisher circuit with its payload length ``n`` and parameter ``k``.

    With ``accepts_prefix`` the first ``prefix_length(n, k)`` inputs carry the
    unary pair code and the payload follows. ``pairs`` lists the covered pairs
    for dispatch circuits; ``None`` means every pair is accepted.
    """

    circuit: QuantumCircuit
    n: int
    k: int | None = None
    accepts_prefix: bool = False
    pairs: frozenset | None = None

    def __post_init__(self):
        expected = self.n + (prefix_length(self.n, self.k) if self.accepts_prefix else 0)
        if self.circuit.inputs != expected:
            raise ValueError(f"circuit has {self.circuit.inputs} inputs, expected {expected}")

    @property
    def prefix_len(self) -> int:
        return prefix_length(self.n, self.k) if self.accepts_prefix else 0

    @property
    def size(self) -> int:
        return self.circuit.size

    def covers(self, pair) -> bool:
        return self.pairs is None or _pair_key(pair) in self.pairs

    def prefix_for(self, pair) -> str | None:
        if not self.accepts_prefix:
            return None
        key = _pair_key(pair)
        if not self.covers(key):
            raise MissingPairError(f"pair sigma={key[0]} m={key[1]} not covered by this distinguisher")
        return encode_prefix(QubitPermutation(key[0]), key[1]).bits

    def operator(self, pair=None) -> np.ndarray:
        """Acceptance operator on the payload for ``pair`` (ignored without a prefix)."""
        return acceptance_operator(self.circuit, self.prefix_for(pair) if pair is not None else None)

    def acceptance(self, state: State, pair=None) -> float:
        if self.accepts_prefix and pair is None:
            raise ValueError("a prefix-accepting distinguisher needs a (sigma, sectioning) pair")
        return acceptance_probability(self.circuit, state, self.prefix_for(pair) if pair is not None else None)


def advantage(circuit: QuantumCircuit, a: State, b: State, prefix=None) -> float:
    return abs(acceptance_probability(circuit, a, prefix) - acceptance_probability(circuit, b, prefix))


# --- constructions ----------------------------------------------------------------------


def and_ladder(controls: list, scratch: list) -> list:
    """AND of ``controls`` into ``scratch[-1]`` using CSWAPs onto fresh ancillas.

    ``CSWAP(a; b, s)`` with ``s = 0`` leaves ``s = a AND b``. The operands are
    consumed (``b`` is zeroed when ``a`` is set), so callers feed copies when
    the inputs must survive. Needs ``len(controls) - 1`` scratch qubits.
    """
    if len(controls) == 1:
        return [gate("CNOT", controls[0], scratch[0])]
    gates, acc = [], controls[0]
    for q, s in zip(controls[1:], scratch):
        gates.append(gate("CSWAP", acc, q, s))
        acc = s
    return gates


def build_reversal_distinguisher(constructor: QuantumCircuit, k: int | None = 2) -> DistinguisherSpec:
    """Inverse constructor followed by an all-zeros test on the payload.

    Accepts ``phi`` with probability ``|<target|phi>|^2``.
    """
    if constructor.ancillas:
        raise ValueError("reversal needs an ancilla-free constructor")
    n = constructor.inputs
    scratch = list(range(n + 1, n + max(1, n - 1) + 1))
    gates = list(reverse_circuit(constructor).gates)
    gates += [gate("X", q) for q in range(1, n + 1)]
    gates += and_ladder(list(range(1, n + 1)), scratch)
    circuit = QuantumCircuit(n, tuple(gates), len(scratch), scratch[-1])
    return DistinguisherSpec(circuit, n, k)


def build_swap_test_distinguisher(approximator: QuantumCircuit, n: int, k: int | None = 2) -> DistinguisherSpec:
    """Controlled-SWAP test between the payload and the approximator's first ``n`` qubits.

    Layout: payload ``1..n``, approximator register, then the control qubit.
    The control is flipped at the end so acceptance is ``1/2 + Tr(rho psi)/2``.
    """
    if approximator.inputs != n:
        raise ValueError(f"approximator prepares {approximator.inputs} qubits, payload has {n}")
    width = approximator.width
    ctrl = n + width + 1
    gates = [g.shifted(n) for g in approximator.gates]
    gates.append(gate("H", ctrl))
    gates += [gate("CSWAP", ctrl, i, n + i) for i in range(1, n + 1)]
    gates += [gate("H", ctrl), gate("X", ctrl)]
    return DistinguisherSpec(QuantumCircuit(n, tuple(gates), width + 1, ctrl), n, k)


def embed_prefix(d: DistinguisherSpec, k: int | None = None) -> DistinguisherSpec:
    """Prefix-accepting form of a payload-only distinguisher that ignores the prefix."""
    if d.accepts_prefix:
        return d
    k = d.k if k is None else k
    lp = prefix_length(d.n, k)
    c = d.circuit
    circuit = QuantumCircuit(c.inputs + lp, tuple(g.shifted(lp) for g in c.gates), c.ancillas, c.output_qubit + lp)
    return DistinguisherSpec(circuit, d.n, k, accepts_prefix=True)


def conjugate_distinguisher(d: DistinguisherSpec, sigma: QubitPermutation) -> DistinguisherSpec:
    """Distinguisher for ``sigma(target)``: undo ``sigma`` on the payload, then run ``d``."""
    if d.accepts_prefix:
        raise ValueError("conjugate the payload-only distinguisher, then embed")
    pre = permutation_network(sigma.inverse()).gates
    c = d.circuit
    return DistinguisherSpec(QuantumCircuit(c.inputs, pre + c.gates, c.ancillas, c.output_qubit), d.n, d.k)


def _controlled(g: Gate, f: int, s: int, w: int) -> list:
    """Gates applying ``g`` only when flag ``f`` is 1.

    ``s`` is a clean scratch qubit and ``w`` holds the +1 eigenstate of H.
    """
    kind, t = g.kind, g.targets
    if kind == "I":
        return []
    if kind == "X":
        return [gate("CNOT", f, t[0])]
    if kind == "T":
        return [gate("CSWAP", f, t[0], s), gate("T", s), gate("CSWAP", f, t[0], s)]
    if kind == "H":
        return [gate("CSWAP", f, t[0], w), gate("H", w), gate("CSWAP", f, t[0], w)]
    inner = gate("CNOT", s, t[1]) if kind == "CNOT" else gate("CSWAP", s, t[1], t[2])
    return [gate("CSWAP", f, t[0], s), inner, gate("CSWAP", f, t[0], s)]


def combine_distinguishers(per_pair: Mapping) -> DistinguisherSpec:
    """Single prefix-accepting circuit dispatching on the encoded pair.

    For each covered pair a flag is set iff the prefix equals that pair's code
    (bit copies, X on the expected zeros, CSWAP AND-ladder). The pair's
    sub-circuit then runs with every gate controlled by the flag, and its
    output bit is ANDed with the flag into the shared output. Sub-circuits
    share one ancilla pool: with the flag off their gates are the identity.
    """
    if not per_pair:
        raise ValueError("empty distinguisher map")
    items = sorted((_pair_key(p), d) for p, d in per_pair.items())
    ns = {d.n for _, d in items}
    ks = {len(key[1]) for key, _ in items}
    if len(ns) != 1 or len(ks) != 1:
        raise ValueError("all sub-distinguishers must share payload length and k")
    if any(d.accepts_prefix for _, d in items):
        raise ValueError("sub-distinguishers must be payload-only")
    n, k = ns.pop(), ks.pop()
    for key, _ in items:
        if sorted(key[0]) != list(range(1, n + 1)):
            raise ValueError(f"pair {key} is not a permutation of 1..{n}")
    lp = prefix_length(n, k)
    inputs = lp + n
    out, s, w = inputs + 1, inputs + 2, inputs + 3
    pool_size = max(d.circuit.ancillas for _, d in items)
    pool_start = w + 1
    nxt = pool_start + pool_size

    gates = word_gates(H_EIGENSTATE_WORD, w)
    for key, d in items:
        bits = encode_prefix(QubitPermutation(key[0]), key[1]).bits
        copies = list(range(nxt, nxt + lp))
        ladder = list(range(nxt + lp, nxt + 2 * lp - 1)) or [nxt + lp]
        nxt = ladder[-1] + 1
        for i, b in enumerate(bits):
            gates.append(gate("CNOT", i + 1, copies[i]))
            if b == "0":
                gates.append(gate("X", copies[i]))
        gates += and_ladder(copies, ladder)
        flag = ladder[-1]

        sub = d.circuit
        relabel = {q: lp + q for q in range(1, n + 1)}
        relabel.update({n + j: pool_start + j - 1 for j in range(1, sub.ancillas + 1)})
        for g in sub.gates:
            gates += _controlled(g.relabeled(relabel), flag, s, w)
        o = relabel[sub.output_qubit]
        gates += [gate("CSWAP", flag, o, s), gate("CNOT", s, out), gate("CSWAP", flag, o, s)]

    circuit = QuantumCircuit(inputs, tuple(gates), nxt - inputs - 1, out)
    return DistinguisherSpec(circuit, n, k, accepts_prefix=True, pairs=frozenset(key for key, _ in items))


# --- certification ----------------------------------------------------------------------


@dataclass(frozen=True)
class PairAdvantage:
    partition: BlockPartition
    p_target: float
    low: float
    high: float
    epsilon: float
    witness: Qustring
    converged: bool


@dataclass(frozen=True)
class AdvantageReport:
    p_target: float
    worst_pair: tuple
    epsilon_star: float
    optimizer_audit: dict
    pairs: tuple = field(default=(), repr=False)

    def to_json(self) -> dict:
        from .qstate import state_to_json

        part, phi = self.worst_pair
        return {
            "p_target": self.p_target,
            "epsilon_star": self.epsilon_star,
            "worst_pair": {
                "sigma": list(part.sigma.mapping),
                "sectioning": list(part.sectioning),
                "phi": state_to_json(phi),
            },
            "optimizer_audit": self.optimizer_audit,
        }


def _form_extremes(mp: np.ndarray, part: BlockPartition, restarts: int, seed) -> tuple:
    """Max and min of ``<x|M'|x>`` over product ``x`` laid out block by block."""
    dims = tuple(2**m for m in part.sectioning)
    mt = mp.reshape(dims + dims)
    layout = BlockPartition.from_pair(QubitPermutation.identity(part.n), part.sectioning)
    rng = np.random.default_rng(seed)
    results = []
    for sign in (1.0, -1.0):
        lam, vec = np.linalg.eigh(sign * mp)
        starts = [_top_block_vectors(vec[:, -1], layout)]
        starts += [[_random_unit(d, rng) for d in dims] for _ in range(restarts)]
        best = None
        for init in starts:
            res = _als_form_max(sign * mt, list(init), ADVANTAGE_TOL, rng)
            if best is None or res.value > best.value + 1e-15:
                best = res
        results.append(best)
    hi, lo = results
    return -lo.value, lo, hi.value, hi


def _certify_pair(mp_full: np.ndarray, target: Qustring, part: BlockPartition, restarts: int, seed) -> PairAdvantage:
    p_t = float(np.real(np.vdot(target.amplitudes, mp_full @ target.amplitudes)))
    perm = permutation_operator(part.sigma)
    mp = perm @ mp_full @ perm.conj().T
    mp = (mp + mp.conj().T) / 2
    low, lo_s, high, hi_s = _form_extremes(mp, part, restarts, seed)
    if low - 1e-12 <= p_t <= high + 1e-12:
        eps = 0.0
    else:
        eps = min(abs(p_t - low), abs(p_t - high))
    sweep = lo_s if abs(p_t - low) <= abs(p_t - high) else hi_s
    x = unblock(sweep.vecs, BlockPartition.from_pair(QubitPermutation.identity(part.n), part.sectioning))
    witness = Qustring.from_vector(perm.conj().T @ x, normalize=True)
    return PairAdvantage(part, p_t, low, high, eps, witness, lo_s.converged and hi_s.converged)


def _pairs_to_check(d: DistinguisherSpec, k: int, samples: int, seed) -> list:
    if d.pairs is not None:
        return [BlockPartition.from_pair(QubitPermutation(s), m) for s, m in sorted(d.pairs)]
    rng = np.random.default_rng(seed)
    out = []
    for part in set_partitions(d.n, k):
        out.append(part)
        if d.accepts_prefix:
            out += [part.random_achieving(rng) for _ in range(samples)]
    return out


def _prefix_touched(d: DistinguisherSpec) -> bool:
    lp = d.prefix_len
    return any(min(g.targets) <= lp for g in d.circuit.gates) or d.circuit.output_qubit <= lp


def worst_case_advantage(
    d: DistinguisherSpec,
    target: Qustring,
    restarts: int = 8,
    k: int | None = None,
    samples: int = DEFAULT_SAMPLES,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
) -> AdvantageReport:
    """Smallest ``|p(target) - p(phi)|`` over k-separable ``phi`` and checked pairs.

    Pairs are the canonical ``sigma`` of every k-block partition plus
    ``samples`` random achieving orders per partition (or exactly the covered
    pairs of a dispatch circuit). For each pair the achievable acceptance
    probabilities of product states form an interval, bracketed by the
    optimizer; the pair's advantage is the distance from ``p(target)`` to it.
    """
    k = d.k if k is None else k
    if k is None or not 2 <= k <= d.n:
        raise ValueError(f"k={k} outside 2..{d.n}")
    if d.n > ADVANTAGE_LIMIT:
        raise CapabilityError(f"advantage certification limited to n <= {ADVANTAGE_LIMIT}, got {d.n}")
    if target.n != d.n:
        raise ValueError(f"target has {target.n} qubits, distinguisher payload {d.n}")
    if d.accepts_prefix and d.k != k:
        raise ValueError(f"prefix encodes k={d.k}, asked to certify k={k}")
    parts = _pairs_to_check(d, k, samples, seed)
    shared = None if (d.accepts_prefix and _prefix_touched(d)) else d.operator(None if not d.accepts_prefix else parts[0])

    def run(item):
        idx, part = item
        m = shared if shared is not None else d.operator(part)
        return _certify_pair(m, target, part, restarts, (seed, idx))

    items = list(enumerate(parts))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, items))
    else:
        results = [run(it) for it in items]

    pool_ = [r for r in results if r.converged] or results
    worst = min(range(len(pool_)), key=lambda i: (pool_[i].epsilon, i))
    w = pool_[worst]
    audit = {
        "restarts": restarts,
        "pairs_checked": len(results),
        "samples_per_partition": samples if d.accepts_prefix and d.pairs is None else 0,
        "all_converged": all(r.converged for r in results),
        "nonconverged": sum(not r.converged for r in results),
    }
    return AdvantageReport(w.p_target, (w.partition, w.witness), float(min(max(w.epsilon, 0.0), 1.0)), audit, tuple(results))


# --- information-theoretic checks -------------------------------------------------------


@dataclass(frozen=True)
class IndistinguishabilityReport:
    cap: float
    nearest: Qustring
    advantages: tuple
    violations: int

    @property
    def max_advantage(self) -> float:
        return max(self.advantages, default=0.0)

    @property
    def holds(self) -> bool:
        return self.violations == 0


def indistinguishability_check(
    target: Qustring, k: int, circuits: Iterable[QuantumCircuit], tol: float = 1e-9, **sdis_kw
) -> IndistinguishabilityReport:
    """Advantage of each circuit between ``target`` and its nearest k-separable state.

    None may exceed ``sdis_k(target)``: trace distance caps every measurement.
    """
    res = sdis(target, k, **sdis_kw)
    advs = []
    for c in circuits:
        if c.inputs != target.n:
            raise ValueError(f"circuit expects {c.inputs} inputs, target has {target.n}")
        advs.append(advantage(c, target, res.nearest))
    cap = max(res.value, trace_distance(target, res.nearest))
    violations = sum(a > cap + tol for a in advs)
    return IndistinguishabilityReport(res.value, res.nearest, tuple(advs), violations)


@dataclass(frozen=True)
class PovmWitness:
    operator: np.ndarray
    gap: float
    sdis: float


def povm_witness(target: Qustring, k: int, **sdis_kw) -> PovmWitness:
    """``W = I - |xi><xi|`` and its gap ``min_phi <phi|W|phi> = sdis_k^2``."""
    res = sdis(target, k, **sdis_kw)
    op = np.eye(target.dim, dtype=complex) - np.outer(target.amplitudes, target.amplitudes.conj())
    gap = float(np.real(np.vdot(res.nearest.amplitudes, op @ res.nearest.amplitudes)))
    if gap < res.value**2 - 1e-6:
        raise AssertionError(f"witness gap {gap} below sdis^2 {res.value**2}")
    return PovmWitness(op, gap, res.value)


def hoeffding_samples(eps: float, delta: float) -> int:
    """Shots so that the empirical frequency is within ``eps`` with prob ``1 - delta``."""
    return math.ceil(math.log(2 / delta) / (2 * eps * eps))


def estimate_acceptance(
    circuit: QuantumCircuit, state: State, rng: np.random.Generator, eps: float = 0.01, delta: float = 1e-3, prefix=None
) -> tuple:
    """Monte-Carlo cross-check: ``(estimate, shots)`` drawn from the exact distribution."""
    shots = hoeffding_samples(eps, delta)
    p = acceptance_probability(circuit, state, prefix)
    return rng.binomial(shots, p) / shots, shots


def swap_test_bound(delta: float, eps: float) -> float:
    """Advantage guaranteed by the swap test: ``((delta - eps)^2 - eps) / 2``."""
    return ((delta - eps) ** 2 - eps) / 2

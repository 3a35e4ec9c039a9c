"""Resource-bounded descriptive complexities by exhaustive circuit search.

The description length ``C(D)`` is surrogated by the canonical encoding
length of the circuit (``qcircuit.encoding_length``); conditions are ignored.
Everything here is toy scale: at most 3 qubits in the enumerated circuits.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterator, Sequence

import numpy as np

from .distinguish import (
    DistinguisherSpec,
    _certify_pair,
    build_reversal_distinguisher,
    build_swap_test_distinguisher,
    embed_prefix,
    worst_case_advantage,
)
from .errors import CapabilityError, NotDefinedError
from .qcircuit import (
    SMALL_COIN_WORD,
    EnsembleSpec,
    Gate,
    QuantumCircuit,
    circuit_to_json,
    encoding_length,
    gate_record_length,
    header_length,
    output_density,
    perturbed_ghz_approximator,
    prefix_length,
    unitary,
)
from .qstate import QubitPermutation, Qustring, fidelity, trace_distance
from .separability import (
    DEFAULT_SEED,
    BlockPartition,
    _random_unit,
    best_product_overlap,
    is_k_separable,
    sdis,
    set_partitions,
    unblock,
)

MAX_QUBITS = 3
MAX_SIZE = 5
DEFAULT_BUDGET = 250_000
PRODUCT_SAMPLES = 48
_ZERO = 1e-12


# --- enumeration ------------------------------------------------------------------------


def gate_classes(width: int) -> list:
    """Gates on ``width`` qubits grouped by arity (record length)."""
    singles = [Gate(k, (q,)) for q in range(1, width + 1) for k in ("I", "X", "H", "T")]
    cnots = [Gate("CNOT", p) for p in itertools.permutations(range(1, width + 1), 2)]
    cswaps = [
        Gate("CSWAP", (c, a, b))
        for c in range(1, width + 1)
        for a, b in itertools.combinations([q for q in range(1, width + 1) if q != c], 2)
    ]
    return [singles, cnots, cswaps]


def gate_census(width: int) -> int:
    """Number of distinct single-gate placements: ``4q + q(q-1) + q*C(q-1, 2)``."""
    return 4 * width + width * (width - 1) + width * math.comb(width - 1, 2)


def _patterns(counts: list) -> Iterator[tuple]:
    """Distinct orderings of a class multiset, lexicographic."""
    total = sum(counts)
    if total == 0:
        yield ()
        return
    for ci, c in enumerate(counts):
        if c:
            counts[ci] -= 1
            for rest in _patterns(counts):
                yield (ci,) + rest
            counts[ci] += 1


class CircuitEnumeration:
    """Iterable of ``(encoding_length, circuit)`` in nondecreasing length.

    Circuits act on ``qubits`` wires of which the first ``inputs`` are inputs.
    ``offset`` prices each circuit as if embedded after ``offset`` extra
    prefix inputs (the embedded encoding is what gets reported). Iteration
    stops after ``budget`` circuits; ``truncated`` then reports it.
    """

    def __init__(
        self,
        qubits: int,
        max_size: int,
        inputs: int | None = None,
        outputs: Sequence[int] = (1,),
        offset: int = 0,
        budget: int | None = DEFAULT_BUDGET,
    ):
        if qubits < 1 or qubits > MAX_QUBITS:
            raise CapabilityError(f"enumeration limited to 1..{MAX_QUBITS} qubits, got {qubits}")
        if max_size < 0:
            raise ValueError("max_size must be >= 0")
        if max_size > MAX_SIZE:
            raise CapabilityError(f"enumeration limited to {MAX_SIZE} gates, got {max_size}")
        self.qubits, self.max_size, self.offset, self.budget = qubits, max_size, offset, budget
        self.inputs = qubits if inputs is None else inputs
        self.ancillas = qubits - self.inputs
        self.outputs = tuple(outputs)
        self.classes = gate_classes(qubits)
        self.count = 0
        self.truncated = False
        self.truncated_at = None

    def _combos(self) -> list:
        width = self.qubits + self.offset
        rec = [gate_record_length(k, width) for k in ("I", "CNOT", "CSWAP")]
        out = []
        for o in self.outputs:
            for s in range(self.max_size + 1):
                head = header_length(self.inputs + self.offset, self.ancillas, o + self.offset, s)
                for a in range(s + 1):
                    for b in range(s - a + 1):
                        counts = (a, b, s - a - b)
                        if any(c and not self.classes[i] for i, c in enumerate(counts)):
                            continue
                        body = sum(c * r for c, r in zip(counts, rec))
                        out.append((head + body, s, o, counts))
        return sorted(out, key=lambda t: (t[0], t[1], t[2], [-c for c in t[3]]))

    def groups(self) -> Iterator[tuple]:
        """``(enc, output, prefix_gates, last_class)`` batches; ``last_class`` is None for size 0.

        The batch stands for every circuit ``prefix + (g,)`` with ``g`` in the
        class. Budget accounting is per circuit.
        """
        for enc, s, o, counts in self._combos():
            for pattern in _patterns(list(counts)):
                heads = itertools.product(*(self.classes[ci] for ci in pattern[:-1]))
                last = pattern[-1] if pattern else None
                for head in heads:
                    size = len(self.classes[last]) if last is not None else 1
                    if self.budget is not None and self.count + size > self.budget:
                        self.truncated, self.truncated_at = True, enc
                        return
                    self.count += size
                    yield enc, o, head, last

    def __iter__(self) -> Iterator[tuple]:
        for enc, o, head, last in self.groups():
            tails = [()] if last is None else [(g,) for g in self.classes[last]]
            for tail in tails:
                yield enc, QuantumCircuit(self.inputs, head + tail, self.ancillas, o)

    @property
    def exhaustive(self) -> bool:
        return not self.truncated


def enumerate_circuits(qubits: int, max_size: int, budget: int | None = DEFAULT_BUDGET) -> Iterator[QuantumCircuit]:
    """Every ancilla-free circuit on ``qubits`` wires with at most ``max_size`` gates."""
    for _, c in CircuitEnumeration(qubits, max_size, budget=budget):
        yield c


class _UnitaryCache:
    """Dense unitaries of gate sequences, memoized on their proper prefixes."""

    def __init__(self, width: int, max_size: int):
        self.width = width
        self.keep = max_size - 1
        self.gate_u = {}
        self.stacks = {}
        self.memo = {(): np.eye(2**width, dtype=complex)}

    def _g(self, g: Gate) -> np.ndarray:
        u = self.gate_u.get(g)
        if u is None:
            u = self.gate_u[g] = unitary(QuantumCircuit(self.width, (g,)))
        return u

    def batch(self, head: tuple, gates: list) -> np.ndarray:
        """Unitaries of ``head + (g,)`` for every ``g`` in ``gates``, stacked."""
        key = id(gates)
        stack = self.stacks.get(key)
        if stack is None:
            stack = self.stacks[key] = np.stack([self._g(g) for g in gates])
        return stack @ self(head)

    def __call__(self, gates: tuple) -> np.ndarray:
        u = self.memo.get(gates)
        if u is not None:
            return u
        u = self._g(gates[-1]) @ self(gates[:-1])
        if len(gates) <= self.keep:
            self.memo[gates] = u
        return u


# --- estimates --------------------------------------------------------------------------


@dataclass(frozen=True)
class ComplexityEstimate:
    kind: str
    value: float
    witness: QuantumCircuit
    fidelity_or_advantage: float
    size_bound: int
    k: int | None = None
    exhaustive: bool = True
    examined: int = 0
    notes: tuple = field(default=(), compare=False)

    @property
    def encoding_bits(self) -> int:
        return encoding_length(self.witness)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "value_bits": self.value,
            "witness_circuit": circuit_to_json(self.witness),
            "metric": self.fidelity_or_advantage,
            "exhaustive": self.exhaustive,
            "size_bound": self.size_bound,
            "k": self.k,
        }


def qca(
    target: Qustring,
    size_bound: int,
    budget: int | None = DEFAULT_BUDGET,
    min_fidelity_sq: float = 0.0,
    aux: Qustring | None = None,
) -> ComplexityEstimate:
    """Minimum of ``encoding_length(D) - log2 F(target, rho_D)^2`` over small circuits.

    ``rho_D`` is the state of the first ``n`` qubits after ``D`` runs on
    ``|aux>|0...0>`` (``aux`` empty by default). Circuits use ``max(n, len(aux))``
    or one more wire, capped at 3. ``min_fidelity_sq`` restricts the search to
    circuits meeting that fidelity (``1 - 1e-9`` asks for exact constructors).
    """
    if size_bound < 0:
        raise ValueError("size_bound must be >= 0")
    n = target.n
    n_in = n if aux is None else max(n, aux.n)
    widths = [q for q in (n_in, n_in + 1) if q <= MAX_QUBITS]
    if not widths:
        raise CapabilityError(f"qca enumerates at most {MAX_QUBITS} qubits, target needs {n_in}")
    best = None
    examined, exhaustive = 0, True
    for q in widths:
        inputs = n if aux is None else aux.n
        start = np.zeros(2**q, dtype=complex)
        if aux is None:
            start[0] = 1.0
        else:
            start = np.kron(aux.amplitudes, np.eye(2 ** (q - aux.n))[0])
        cache = _UnitaryCache(q, size_bound)
        en = CircuitEnumeration(q, min(size_bound, MAX_SIZE), inputs=inputs, budget=budget)
        for enc, o, head, last in en.groups():
            if best is not None and enc >= best[0]:
                break
            gates = [None] if last is None else en.classes[last]
            examined += len(gates)
            u = cache(head)[None] if last is None else cache.batch(head, gates)
            v = (u @ start).reshape(len(gates), target.dim, -1)
            f2 = np.sum(np.abs(np.einsum("i,bij->bj", target.amplitudes.conj(), v)) ** 2, axis=1)
            for i in np.flatnonzero((f2 > _ZERO) & (f2 >= min_fidelity_sq)):
                value = enc - math.log2(min(f2[i], 1.0))
                if best is None or value < best[0] - 1e-12:
                    tail = () if last is None else (gates[i],)
                    best = (value, QuantumCircuit(inputs, head + tail, q - inputs, o), float(min(f2[i], 1.0)))
        exhaustive &= en.exhaustive and size_bound <= MAX_SIZE
    if best is None:
        raise NotDefinedError("no enumerated circuit reaches the requested fidelity")
    value, c, f2 = best
    return ComplexityEstimate("QCA", value, c, math.sqrt(f2), size_bound, None, exhaustive, examined)


def qca_given(target: Qustring, aux: Qustring, size_bound: int, **kw) -> ComplexityEstimate:
    return qca(target, size_bound, aux=aux, **kw)


def trivial_upper_bound(target: Qustring) -> ComplexityEstimate:
    """Basis-state circuit for the ``x`` maximizing ``|<target|x>|`` (first on ties)."""
    n = target.n
    idx = int(np.argmax(np.round(np.abs(target.amplitudes) ** 2, 12)))
    bits = format(idx, f"0{n}b")
    c = QuantumCircuit(n, tuple(Gate("X", (i + 1,)) for i, b in enumerate(bits) if b == "1"))
    f2 = float(abs(target.amplitudes[idx]) ** 2)
    return ComplexityEstimate("QCA", encoding_length(c) - math.log2(f2), c, math.sqrt(f2), c.size, None, False, 1)


def basis_overhead_constant(n: int) -> int:
    """``c`` with ``trivial_upper_bound <= 2n + c`` for every ``n``-qubit target.

    The worst basis circuit is ``X`` on every qubit; ``-log2 F^2 <= n``.
    """
    worst = QuantumCircuit(n, tuple(Gate("X", (i,)) for i in range(1, n + 1)))
    return encoding_length(worst) + n - 2 * n


# --- sQCD -------------------------------------------------------------------------------


def _product_samples(n: int, parts: list, per_part: int, seed) -> np.ndarray:
    """Random product states for each partition plus all basis states, shape ``(P, 2^n, S)``."""
    rng = np.random.default_rng(seed)
    basis = np.eye(2**n, dtype=complex)
    out = []
    for part in parts:
        layout = BlockPartition.from_pair(QubitPermutation.identity(n), part.sectioning)
        inv = list(np.argsort([q - 1 for q in part.sigma.mapping]))
        cols = []
        for _ in range(per_part):
            x = unblock([_random_unit(2**m, rng) for m in part.sectioning], layout)
            cols.append(x.reshape((2,) * n).transpose(inv).reshape(-1))
        out.append(np.concatenate([np.stack(cols, axis=1), basis], axis=1))
    return np.stack(out)


def _sample_gap(p_t: np.ndarray, p_s: np.ndarray) -> np.ndarray:
    """Upper bound on the advantage from sampled product states, per circuit.

    ``p_s`` has shape ``(B, P, S)``. Product states of one partition form a
    connected set, so samples on both sides of ``p_t`` certify zero advantage.
    """
    d = p_s - p_t[:, None, None]
    straddle = (d.min(axis=2) <= 0) & (d.max(axis=2) >= 0)
    gap = np.where(straddle, 0.0, np.abs(d).min(axis=2))
    return gap.min(axis=1)


def _sqcd_search(
    target: Qustring,
    k: int,
    parts: list,
    cap: float,
    size_bound: int,
    budget: int | None,
    restarts: int,
    seed,
    kind: str,
    extra: Sequence = (),
) -> ComplexityEstimate:
    n = target.n
    if n > MAX_QUBITS:
        raise CapabilityError(f"sqcd enumerates at most {MAX_QUBITS} qubits, target has {n}")
    lp = prefix_length(n, k)
    samples = _product_samples(n, parts, PRODUCT_SAMPLES, seed)
    certified = {}
    best = None
    examined, exhaustive = 0, True
    log_cap = math.log2(cap)
    for q in [w for w in (n, n + 1) if w <= MAX_QUBITS]:
        cache = _UnitaryCache(q, size_bound)
        cols = [x << (q - n) for x in range(2**n)]
        en = CircuitEnumeration(q, min(size_bound, MAX_SIZE), inputs=n, outputs=range(1, q + 1), offset=lp, budget=budget)
        masks = {o: ((np.arange(2**q) >> (q - o)) & 1).astype(bool) for o in range(1, q + 1)}
        for enc, o, head, last in en.groups():
            if best is not None and enc - log_cap >= best[0]:
                break
            gates = [None] if last is None else en.classes[last]
            examined += len(gates)
            u = cache(head)[None] if last is None else cache.batch(head, gates)
            pa = u[:, masks[o]][:, :, cols]
            p_t = np.sum(np.abs(pa @ target.amplitudes) ** 2, axis=1)
            p_s = np.sum(np.abs(np.einsum("brd,pds->bprs", pa, samples)) ** 2, axis=2)
            gap = _sample_gap(p_t, p_s)
            need = 2.0 ** (enc - best[0]) if best is not None else _ZERO
            for i in np.flatnonzero(gap > need):
                m = pa[i].conj().T @ pa[i]
                key = np.round(m, 10).tobytes()
                eps = certified.get(key)
                if eps is None:
                    eps = min(_certify_pair(m, target, part, restarts, (seed, j)).epsilon for j, part in enumerate(parts))
                    certified[key] = eps
                if eps <= _ZERO:
                    continue
                value = enc - math.log2(eps)
                if best is None or value < best[0] - 1e-12:
                    tail = () if last is None else (gates[i],)
                    best = (value, QuantumCircuit(n, head + tail, q - n, o), eps)
        exhaustive &= en.exhaustive and size_bound <= MAX_SIZE
    for c in extra:
        c = c.circuit if isinstance(c, DistinguisherSpec) else c
        if c.inputs != n or c.size > size_bound:
            continue
        m = DistinguisherSpec(c, n, k).operator()
        eps = min(_certify_pair(m, target, part, restarts, (seed, j)).epsilon for j, part in enumerate(parts))
        enc = encoding_length(embed_prefix(DistinguisherSpec(c, n, k), k).circuit)
        if eps > _ZERO and (best is None or enc - math.log2(eps) < best[0] - 1e-12):
            best = (enc - math.log2(eps), c, eps)
    if best is None:
        raise NotDefinedError(f"no circuit within {size_bound} gates distinguishes the target")
    value, c, eps = best
    witness = embed_prefix(DistinguisherSpec(c, n, k), k).circuit
    return ComplexityEstimate(kind, value, witness, eps, size_bound, k, exhaustive, examined)


def sqcd(
    target: Qustring,
    k: int,
    size_bound: int,
    budget: int | None = DEFAULT_BUDGET,
    restarts: int = 8,
    seed: int = DEFAULT_SEED,
    extra: Sequence = (),
) -> ComplexityEstimate:
    """Minimum of ``encoding_length(D) - log2 eps*(D)`` over prefix-accepting ``D``.

    Candidates are payload circuits (at most one ancilla, any output wire)
    placed after the prefix inputs, so their advantage is the same for every
    ``(sigma, sectioning)``; it is certified against all k-block partitions.
    ``extra`` adds hand-built payload distinguishers (any width) to the pool;
    they count only when within ``size_bound``.
    """
    if is_k_separable(target, k):
        raise NotDefinedError(f"sQCD undefined: target is {k}-separable (zero advantage)")
    cap = sdis(target, k).value
    parts = list(set_partitions(target.n, k))
    return _sqcd_search(target, k, parts, cap, size_bound, budget, restarts, seed, "sQCD", extra)


def sqcd_pair(
    target: Qustring,
    sigma: QubitPermutation,
    sectioning: Sequence[int],
    size_bound: int,
    budget: int | None = DEFAULT_BUDGET,
    restarts: int = 8,
    seed: int = DEFAULT_SEED,
    extra: Sequence = (),
) -> ComplexityEstimate:
    """Like :func:`sqcd` but the advantage is required for one pair only."""
    part = BlockPartition.from_pair(sigma, sectioning)
    ov = best_product_overlap(target, part).overlap
    cap = math.sqrt(max(0.0, 1.0 - ov**2))
    if cap <= 1e-9:
        raise NotDefinedError("target is product across the given pair")
    return _sqcd_search(target, part.k, [part], cap, size_bound, budget, restarts, seed, "sQCD-pair", extra)


# --- bound audit ------------------------------------------------------------------------


def load_constants() -> dict:
    text = resources.files("qentangle").joinpath("data/constants.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class AuditRow:
    n: int
    k: int
    check: str
    status: str
    lhs: float
    rhs: float
    needed_c: float | None

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _sqcd_upper(d: DistinguisherSpec, target: Qustring, restarts: int, seed: int) -> tuple:
    emb = embed_prefix(d)
    eps = worst_case_advantage(emb, target, restarts=restarts, seed=seed).epsilon_star
    return encoding_length(emb.circuit) - math.log2(eps), eps


def bound_audit(
    ensemble: EnsembleSpec,
    k: int,
    sizes: Sequence[int],
    size_bound: int = 3,
    coin_word: Sequence[str] = SMALL_COIN_WORD,
    constants: dict | None = None,
    restarts: int = 8,
    seed: int = DEFAULT_SEED,
) -> list:
    """Check the complexity upper bounds on each ``n`` in ``sizes``.

    (i) approximator value ``<= c - log2(1 - eps)``; (ii) sQCD from the
    reversal distinguisher ``<= QCA - 2 log2 sdis + c``; (iii) sQCD from the
    swap test on the approximator ``<= QCA - log2 sdis - log2((sdis - 2 sqrt eps)
    / (1 - eps^2)) + c`` when ``sdis > 2 sqrt eps``; and monotonicity of the
    reversal-based sQCD in ``k``. sQCD is represented by the certified upper
    value of the explicit distinguisher. ``needed_c`` is the smallest constant
    making each inequality hold; a check passes when it is at most the frozen
    one. The approximator is the GHZ constructor perturbed by ``coin_word``.
    """
    frozen = (constants or load_constants())["bound_audit"]
    rows = []
    for n in sizes:
        target = ensemble(n)
        m = target.n
        if ensemble.constructor is None:
            raise ValueError(f"ensemble {ensemble.name} has no constructor")
        con = ensemble.constructor(n)
        sd = sdis(target, k).value
        qca_val = qca(target, size_bound).value

        approx = perturbed_ghz_approximator(m, coin_word) if ensemble.name == "ghz" else con
        rho = output_density(approx, m)
        eps = trace_distance(rho, target)
        val_i = encoding_length(approx) - math.log2(fidelity(rho, target) ** 2)
        need = val_i + math.log2(1 - eps)
        rows.append(_row(n, k, "approximability", val_i, frozen["approximability"] - math.log2(1 - eps), need, frozen["approximability"]))

        rev = build_reversal_distinguisher(con, k)
        up_ii, _ = _sqcd_upper(rev, target, restarts, seed)
        need = up_ii - qca_val + 2 * math.log2(sd)
        rows.append(_row(n, k, "constructible", up_ii, qca_val - 2 * math.log2(sd) + frozen["constructible"], need, frozen["constructible"]))

        if sd > 2 * math.sqrt(eps) and approx is not con:
            up_iii, _ = _sqcd_upper(build_swap_test_distinguisher(approx, m, k), target, restarts, seed)
            extra = -math.log2(sd) - math.log2((sd - 2 * math.sqrt(eps)) / (1 - eps**2))
            need = up_iii - qca_val - extra
            rows.append(_row(n, k, "approximable", up_iii, qca_val + extra + frozen["approximable"], need, frozen["approximable"]))
        else:
            rows.append(AuditRow(n, k, "approximable", "skipped", float("nan"), float("nan"), None))

        if k + 1 <= m:
            up_next, _ = _sqcd_upper(build_reversal_distinguisher(con, k + 1), target, restarts, seed)
            ok = up_next <= up_ii + 1e-9
            rows.append(AuditRow(n, k, "k-monotonicity", "pass" if ok else "fail", up_next, up_ii, None))
    return rows


def _row(n, k, check, lhs, rhs, need, c_frozen) -> AuditRow:
    return AuditRow(n, k, check, "pass" if need <= c_frozen + 1e-9 else "fail", lhs, rhs, need)

"""Gate-level circuits over a fixed universal set, simulation, and circuit codecs.

Gate set: ``I, X, H, T`` (one target), ``CNOT`` (control, target) and
``CSWAP`` (control, a, b). Qubits are 1-based; the first ``inputs`` qubits
carry the input, the remaining ``ancillas`` start in ``|0>``.

Simulation is hybrid: qubits that are still in a computational-basis state
(prefix bits, fresh ancillas) are tracked as classical bits and only enter the
amplitude tensor once a gate could put them in superposition. This keeps the
long unary prefixes of prefix-accepting distinguishers cheap.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .qstate import (
    DensityOperator,
    QubitPermutation,
    Qustring,
    ghz,
    pairwise,
    w_state,
)

GATE_SET_ID = "I-X-H-T-CNOT-CSWAP/1"
ENCODING_VERSION = "qenc-1"

ARITY = {"I": 1, "X": 1, "H": 1, "T": 1, "CNOT": 2, "CSWAP": 3}
TAGS = {"I": "000", "X": "001", "H": "010", "T": "011", "CNOT": "100", "CSWAP": "101"}
_TAG_KIND = {v: k for k, v in TAGS.items()}

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_T_PHASE = np.exp(1j * np.pi / 4)
_T = np.diag([1, _T_PHASE])

# H,T word (applied left to right) taking |0> to the +1 eigenvector of H, up to phase.
H_EIGENSTATE_WORD = ("H", "T", "H", "T", "T")
# H,T word giving a coin with Prob[1] = sin(pi/8)^4 ~ 0.0214.
SMALL_COIN_WORD = ("H", "T", "H", "T", "H", "T", "H", "T", "H")


@dataclass(frozen=True)
class Gate:
    kind: str
    targets: tuple

    def __post_init__(self):
        if self.kind not in ARITY:
            raise ValueError(f"unknown gate {self.kind!r}")
        targets = tuple(int(t) for t in self.targets)
        if len(targets) != ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {ARITY[self.kind]} targets, got {targets}")
        if len(set(targets)) != len(targets) or min(targets) < 1:
            raise ValueError(f"invalid targets {targets}")
        if self.kind == "CSWAP" and targets[1] > targets[2]:
            # swapping a<->b equals swapping b<->a
            targets = (targets[0], targets[2], targets[1])
        object.__setattr__(self, "targets", targets)

    def shifted(self, offset: int) -> "Gate":
        return Gate(self.kind, tuple(t + offset for t in self.targets))

    def relabeled(self, mapping: dict) -> "Gate":
        return Gate(self.kind, tuple(mapping.get(t, t) for t in self.targets))

    def __str__(self):
        return f"{self.kind}{list(self.targets)}"


def gate(kind: str, *targets: int) -> Gate:
    return Gate(kind, targets)


@dataclass(frozen=True)
class QuantumCircuit:
    inputs: int
    gates: tuple = ()
    ancillas: int = 0
    output_qubit: int = 1

    def __post_init__(self):
        gates = tuple(self.gates)
        if self.inputs < 1 or self.ancillas < 0:
            raise ValueError("a circuit needs >= 1 input and >= 0 ancillas")
        w = self.inputs + self.ancillas
        for g in gates:
            if max(g.targets) > w:
                raise ValueError(f"gate {g} outside the {w}-qubit circuit")
        if not 1 <= self.output_qubit <= w:
            raise ValueError(f"output qubit {self.output_qubit} outside 1..{w}")
        object.__setattr__(self, "gates", gates)

    @property
    def width(self) -> int:
        return self.inputs + self.ancillas

    @property
    def size(self) -> int:
        return len(self.gates)

    def append(self, *gates: Gate) -> "QuantumCircuit":
        return QuantumCircuit(self.inputs, self.gates + tuple(gates), self.ancillas, self.output_qubit)

    def with_output(self, q: int) -> "QuantumCircuit":
        return QuantumCircuit(self.inputs, self.gates, self.ancillas, q)

    def __repr__(self):
        body = " ".join(str(g) for g in self.gates)
        return f"QuantumCircuit(in={self.inputs}, anc={self.ancillas}, out={self.output_qubit}: {body})"


def compose(first: QuantumCircuit, second: QuantumCircuit) -> QuantumCircuit:
    """Run ``first`` then ``second`` on the wider of the two registers; output from ``second``."""
    if first.inputs != second.inputs:
        raise ValueError("composed circuits must share their input count")
    anc = max(first.ancillas, second.ancillas)
    return QuantumCircuit(first.inputs, first.gates + second.gates, anc, second.output_qubit)


# --- hybrid simulation ----------------------------------------------------------------


class _Hybrid:
    """Batch of states; some qubits classical (shared bit), the rest in ``amp``.

    ``amp`` has shape ``(B,) + (2,)*len(qubits)``; axis ``1+i`` is qubit ``qubits[i]``.
    Qubit labels here are 0-based.
    """

    def __init__(self, amp: np.ndarray, qubits: list, classical: dict):
        self.amp = amp
        self.qubits = qubits
        self.classical = classical

    def axis(self, q: int) -> int:
        return 1 + self.qubits.index(q)

    def promote(self, q: int) -> None:
        bit = self.classical.pop(q)
        zero = np.zeros_like(self.amp)
        pair = [self.amp, zero] if bit == 0 else [zero, self.amp]
        self.amp = np.stack(pair, axis=-1)
        self.qubits.append(q)

    def _idx(self, fixed: dict) -> tuple:
        idx = [slice(None)] * self.amp.ndim
        for ax, v in fixed.items():
            idx[ax] = v
        return tuple(idx)

    def x(self, q):
        if q in self.classical:
            self.classical[q] ^= 1
        else:
            self.amp = np.flip(self.amp, axis=self.axis(q))

    def t(self, q, power=1):
        phase = _T_PHASE**power
        if q in self.classical:
            if self.classical[q]:
                self.amp = self.amp * phase
        else:
            amp = self.amp.copy()
            sl = self._idx({self.axis(q): 1})
            amp[sl] *= phase
            self.amp = amp

    def h(self, q):
        if q in self.classical:
            self.promote(q)
        ax = self.axis(q)
        self.amp = np.moveaxis(np.tensordot(_H, self.amp, axes=([1], [ax])), 0, ax)

    def cnot(self, c, t):
        if c in self.classical:
            if self.classical[c]:
                self.x(t)
            return
        if t in self.classical:
            self.promote(t)
        ac, at = self.axis(c), self.axis(t)
        sl = self._idx({ac: 1})
        amp = self.amp.copy()
        amp[sl] = np.flip(self.amp[sl], axis=at if at < ac else at - 1)
        self.amp = amp

    def cswap(self, c, a, b):
        if c in self.classical:
            if not self.classical[c]:
                return
            ca, cb = a in self.classical, b in self.classical
            if ca and cb:
                self.classical[a], self.classical[b] = self.classical[b], self.classical[a]
            elif ca:
                self.classical[b] = self.classical.pop(a)
                self.qubits[self.qubits.index(b)] = a
            elif cb:
                self.classical[a] = self.classical.pop(b)
                self.qubits[self.qubits.index(a)] = b
            else:
                ia, ib = self.qubits.index(a), self.qubits.index(b)
                self.qubits[ia], self.qubits[ib] = b, a
            return
        if a in self.classical and b in self.classical and self.classical[a] == self.classical[b]:
            return
        for q in (a, b):
            if q in self.classical:
                self.promote(q)
        ac, aa, ab = self.axis(c), self.axis(a), self.axis(b)
        sl = self._idx({ac: 1})
        aa, ab = (aa if aa < ac else aa - 1), (ab if ab < ac else ab - 1)
        amp = self.amp.copy()
        amp[sl] = np.swapaxes(self.amp[sl], aa, ab)
        self.amp = amp

    def apply(self, g: Gate) -> None:
        t = [q - 1 for q in g.targets]
        if g.kind == "I":
            return
        if g.kind == "X":
            self.x(t[0])
        elif g.kind == "H":
            self.h(t[0])
        elif g.kind == "T":
            self.t(t[0])
        elif g.kind == "CNOT":
            self.cnot(t[0], t[1])
        else:
            self.cswap(t[0], t[1], t[2])

    def prob_one(self, q: int) -> np.ndarray:
        if q in self.classical:
            return np.full(self.amp.shape[0], float(self.classical[q]))
        sl = self._idx({self.axis(q): 1})
        p = np.abs(self.amp[sl]) ** 2
        return p.reshape(p.shape[0], -1).sum(axis=1)

    def projected_rows(self, q: int) -> np.ndarray | None:
        """Batch rows of the final state restricted to ``q = 1`` (None if q is classical)."""
        if q in self.classical:
            return None
        sl = self._idx({self.axis(q): 1})
        s = self.amp[sl]
        return s.reshape(s.shape[0], -1)

    def full(self, width: int) -> np.ndarray:
        for q in sorted(self.classical):
            self.promote(q)
        order = [self.qubits.index(q) + 1 for q in range(width)]
        amp = np.transpose(self.amp, [0] + order)
        return amp.reshape(amp.shape[0], -1)


def _prefix_bits(prefix) -> str:
    if prefix is None:
        return ""
    if isinstance(prefix, PrefixEncoding):
        return prefix.bits
    bits = str(prefix)
    if set(bits) - {"0", "1"}:
        raise ValueError(f"prefix must be a 0/1 string, got {bits!r}")
    return bits


def _run(c: QuantumCircuit, payload: np.ndarray, prefix: str) -> _Hybrid:
    """Simulate on ``|prefix>|payload_b>|0..0>`` for every row ``payload_b`` of the batch."""
    lp = len(prefix)
    n_payload = c.inputs - lp
    if n_payload < 0:
        raise ValueError(f"prefix of length {lp} exceeds the {c.inputs} circuit inputs")
    payload = np.asarray(payload, dtype=complex)
    if payload.shape[1] != 2**n_payload:
        raise ValueError(
            f"input length mismatch: circuit expects {n_payload} payload qubits, "
            f"got {payload.shape[1].bit_length() - 1}"
        )
    amp = payload.reshape((payload.shape[0],) + (2,) * n_payload)
    classical = {q: int(b) for q, b in enumerate(prefix)}
    classical.update({q: 0 for q in range(c.inputs, c.width)})
    sim = _Hybrid(amp, list(range(lp, c.inputs)), classical)
    for g in c.gates:
        sim.apply(g)
    return sim


def simulate(c: QuantumCircuit, state: Qustring, prefix=None) -> Qustring:
    """Final pure state on all ``inputs + ancillas`` qubits."""
    bits = _prefix_bits(prefix)
    sim = _run(c, state.amplitudes[None, :], bits)
    return Qustring.from_vector(sim.full(c.width)[0], normalize=True)


def acceptance_operator(c: QuantumCircuit, prefix=None) -> np.ndarray:
    """Matrix ``M`` on the payload space with ``Prob[output = 1] = <phi|M|phi>``."""
    bits = _prefix_bits(prefix)
    d = 2 ** (c.inputs - len(bits))
    sim = _run(c, np.eye(d, dtype=complex), bits)
    q = c.output_qubit - 1
    rows = sim.projected_rows(q)
    if rows is None:
        return np.eye(d, dtype=complex) * sim.classical[q]
    m = rows.conj() @ rows.T
    return (m + m.conj().T) / 2


def acceptance_probability(c: QuantumCircuit, state, prefix=None) -> float:
    """Exact probability that measuring the output qubit yields 1."""
    bits = _prefix_bits(prefix)
    if isinstance(state, DensityOperator):
        if state.n != c.inputs - len(bits):
            raise ValueError(f"input length mismatch: {state.n} vs {c.inputs - len(bits)}")
        m = acceptance_operator(c, bits)
        p = float(np.real(np.trace(m @ state.matrix)))
    else:
        sim = _run(c, state.amplitudes[None, :], bits)
        p = float(sim.prob_one(c.output_qubit - 1)[0])
    return min(max(p, 0.0), 1.0)


def output_density(c: QuantumCircuit, n_out: int, state: Qustring | None = None) -> DensityOperator:
    """Reduced state of the first ``n_out`` qubits after running ``c``.

    With ``state=None`` every input is ``|0>``; all later qubits are traced out.
    """
    state = state if state is not None else Qustring.zeros(c.inputs)
    vec = simulate(c, state).amplitudes.reshape(2**n_out, -1)
    return DensityOperator(vec @ vec.conj().T)


def unitary(c: QuantumCircuit) -> np.ndarray:
    """Dense unitary on all ``width`` qubits (ancillas treated as inputs)."""
    d = 2**c.width
    full = QuantumCircuit(c.width, c.gates, 0, c.output_qubit)
    sim = _run(full, np.eye(d, dtype=complex), "")
    return sim.full(c.width).T


# --- prefix codec -----------------------------------------------------------------------


def prefix_length(n: int, k: int) -> int:
    return (n * n + 5 * n) // 2 + k + 2


@dataclass(frozen=True)
class PrefixEncoding:
    n: int
    k: int
    sigma: QubitPermutation
    sectioning: tuple
    bits: str


def encode_prefix(sigma: QubitPermutation, sectioning: Sequence[int]) -> PrefixEncoding:
    """Unary code ``1^s(1) 0 ... 1^s(n) 0 0 1^m1 0 ... 1^mk 0 0``."""
    sectioning = tuple(int(m) for m in sectioning)
    if sum(sectioning) != sigma.n or any(m < 1 for m in sectioning):
        raise ValueError(f"sectioning {sectioning} inconsistent with n={sigma.n}")
    bits = "".join("1" * s + "0" for s in sigma.mapping) + "0"
    bits += "".join("1" * m + "0" for m in sectioning) + "0"
    return PrefixEncoding(sigma.n, len(sectioning), sigma, sectioning, bits)


def decode_prefix(bits: str) -> PrefixEncoding:
    runs, count = [], 0
    for b in bits:
        if b == "1":
            count += 1
        elif b == "0":
            runs.append(count)
            count = 0
        else:
            raise ValueError(f"invalid bit {b!r}")
    if count:
        raise ValueError("prefix does not end with 0")
    try:
        cut = runs.index(0)
    except ValueError:
        raise ValueError("missing section separator") from None
    sigma_part, rest = runs[:cut], runs[cut + 1 :]
    if not rest or rest[-1] != 0 or 0 in rest[:-1]:
        raise ValueError("malformed sectioning part")
    enc = encode_prefix(QubitPermutation(tuple(sigma_part)), rest[:-1])
    if enc.bits != bits:
        raise ValueError("non-canonical prefix")
    return enc


# --- circuit builders -------------------------------------------------------------------


def reverse_circuit(c: QuantumCircuit) -> QuantumCircuit:
    """Inverse circuit; ``T`` becomes ``T^7`` so the gate set is unchanged."""
    gates = []
    for g in reversed(c.gates):
        gates.extend([g] * 7 if g.kind == "T" else [g])
    return QuantumCircuit(c.inputs, tuple(gates), c.ancillas, c.output_qubit)


def normalize_t_powers(c: QuantumCircuit) -> QuantumCircuit:
    """Reduce every run of identical adjacent ``T`` gates modulo 8."""
    gates = []
    for g, run in itertools.groupby(c.gates):
        run = list(run)
        gates.extend(run[: len(run) % 8] if g.kind == "T" else run)
    return QuantumCircuit(c.inputs, tuple(gates), c.ancillas, c.output_qubit)


def swap_gates(a: int, b: int) -> list:
    return [gate("CNOT", a, b), gate("CNOT", b, a), gate("CNOT", a, b)]


def permutation_network(sigma: QubitPermutation, offset: int = 0) -> QuantumCircuit:
    """SWAP network (3 CNOTs per swap, at most n-1 swaps) realizing ``sigma``."""
    cur = list(range(1, sigma.n + 1))
    gates = []
    for j in range(1, sigma.n + 1):
        p = cur.index(sigma(j)) + 1
        if p != j:
            gates += swap_gates(j + offset, p + offset)
            cur[j - 1], cur[p - 1] = cur[p - 1], cur[j - 1]
    return QuantumCircuit(sigma.n + offset, tuple(gates))


def word_gates(word: Iterable[str], q: int) -> list:
    return [gate(k, q) for k in word]


def ghz_circuit(n: int) -> QuantumCircuit:
    gates = [gate("H", 1)] + [gate("CNOT", 1, i) for i in range(2, n + 1)]
    return QuantumCircuit(n, tuple(gates))


@dataclass(frozen=True)
class Constructed:
    circuit: QuantumCircuit
    target: Qustring


def constructor_library(name: str, n: int, param=None) -> Constructed:
    """Ancilla-free constructors ``C |0^n> = target``.

    ``ghz``: H then n-1 CNOTs. ``pairwise``: Bell pairs on adjacent qubits then
    a swap network (n must be even). ``phase``: GHZ with relative sign
    ``(-1)^f`` for the integer ``param = f``, the sign made by ``T^4`` on the
    leading qubit. ``basis``: X gates spelling the bit string ``param`` (``n``
    must equal its length).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if name == "ghz":
        return Constructed(ghz_circuit(n), ghz(n))
    if name == "pairwise":
        if n % 2:
            raise ValueError(f"pairwise needs an even length, got {n}")
        m = n // 2
        gates = []
        for i in range(m):
            gates += [gate("H", 2 * i + 1), gate("CNOT", 2 * i + 1, 2 * i + 2)]
        interleave = QubitPermutation(tuple(q for i in range(1, m + 1) for q in (i, m + i)))
        gates += permutation_network(interleave.inverse()).gates
        return Constructed(QuantumCircuit(n, tuple(gates)), pairwise(n))
    if name == "phase":
        f = int(param or 0)
        gates = [gate("H", 1)] + ([gate("T", 1)] * 4 if f % 2 else [])
        gates += [gate("CNOT", 1, i) for i in range(2, n + 1)]
        vec = np.zeros(2**n, dtype=complex)
        vec[0], vec[-1] = 1 / np.sqrt(2), (-1) ** f / np.sqrt(2)
        return Constructed(QuantumCircuit(n, tuple(gates)), Qustring(vec))
    if name == "basis":
        bits = str(param if param is not None else "0" * n)
        if len(bits) != n:
            raise ValueError(f"basis string {bits!r} does not have length {n}")
        gates = tuple(gate("X", i + 1) for i, b in enumerate(bits) if b == "1")
        return Constructed(QuantumCircuit(n, gates), Qustring.basis(bits))
    raise ValueError(f"unknown constructor {name!r}")


def perturbed_ghz_approximator(n: int, coin_word: Sequence[str] = SMALL_COIN_WORD) -> QuantumCircuit:
    """GHZ constructor whose first qubit is flipped by a biased ancilla coin.

    The ancilla-traced output is ``(1-p) GHZ + p tau`` with ``tau`` orthogonal
    to GHZ and ``p = |<1|W|0>|^2`` for the coin word ``W`` (about 0.0214 by
    default), so its trace distance to GHZ is ``p``.
    """
    coin = n + 1
    gates = word_gates(coin_word, coin) + list(ghz_circuit(n).gates) + [gate("CNOT", coin, 1)]
    return QuantumCircuit(n, tuple(gates), ancillas=1)


@dataclass(frozen=True)
class EnsembleSpec:
    name: str
    size_factor: Callable[[int], int]
    generator: Callable[[int], Qustring]
    constructor: Callable[[int], QuantumCircuit] | None = field(default=None, compare=False)

    def __call__(self, n: int) -> Qustring:
        state = self.generator(n)
        if state.n != self.size_factor(n):
            raise ValueError(f"ensemble {self.name} produced length {state.n} != {self.size_factor(n)}")
        return state


ENSEMBLES = {
    "ghz": EnsembleSpec("ghz", lambda n: n, ghz, ghz_circuit),
    "pairwise": EnsembleSpec(
        "pairwise",
        lambda n: 2 * n,
        lambda n: pairwise(2 * n),
        lambda n: constructor_library("pairwise", 2 * n).circuit,
    ),
    "w": EnsembleSpec("w", lambda n: n, w_state),
    "basis": EnsembleSpec(
        "basis",
        lambda n: n,
        lambda n: Qustring.basis("1" * n),
        lambda n: constructor_library("basis", n, "1" * n).circuit,
    ),
}


def random_circuit(
    rng: np.random.Generator, width: int, size: int, inputs: int | None = None, output_qubit: int = 1
) -> QuantumCircuit:
    kinds = ["I", "X", "H", "T"] + (["CNOT"] if width >= 2 else []) + (["CSWAP"] if width >= 3 else [])
    gates = []
    for _ in range(size):
        kind = kinds[rng.integers(len(kinds))]
        qs = rng.choice(width, size=ARITY[kind], replace=False) + 1
        gates.append(Gate(kind, tuple(int(q) for q in qs)))
    inputs = width if inputs is None else inputs
    return QuantumCircuit(inputs, tuple(gates), width - inputs, output_qubit)


# --- canonical encoding -----------------------------------------------------------------


def elias_gamma(x: int) -> str:
    if x < 1:
        raise ValueError("Elias gamma needs x >= 1")
    b = bin(x)[2:]
    return "0" * (len(b) - 1) + b


def _read_gamma(bits: str, pos: int) -> tuple:
    zeros = 0
    while bits[pos + zeros] == "0":
        zeros += 1
    end = pos + 2 * zeros + 1
    return int(bits[pos + zeros : end], 2), end


def target_width(width: int) -> int:
    return max(1, (width - 1).bit_length())


def serialize(c: QuantumCircuit) -> str:
    """Self-delimiting bit string for ``c``.

    ``gamma(inputs) gamma(ancillas+1) gamma(output) gamma(size+1)`` followed by
    one record per gate: a 3-bit tag and each target as a fixed-width 0-based
    index (width ``max(1, bitlen(inputs+ancillas-1))``).
    """
    w = target_width(c.width)
    out = [elias_gamma(c.inputs), elias_gamma(c.ancillas + 1), elias_gamma(c.output_qubit), elias_gamma(c.size + 1)]
    for g in c.gates:
        out.append(TAGS[g.kind])
        out.extend(format(t - 1, f"0{w}b") for t in g.targets)
    return "".join(out)


def deserialize(bits: str) -> QuantumCircuit:
    inputs, pos = _read_gamma(bits, 0)
    anc, pos = _read_gamma(bits, pos)
    out, pos = _read_gamma(bits, pos)
    size, pos = _read_gamma(bits, pos)
    w = target_width(inputs + anc - 1)
    gates = []
    for _ in range(size - 1):
        kind = _TAG_KIND[bits[pos : pos + 3]]
        pos += 3
        targets = []
        for _ in range(ARITY[kind]):
            targets.append(int(bits[pos : pos + w], 2) + 1)
            pos += w
        gates.append(Gate(kind, tuple(targets)))
    if pos != len(bits):
        raise ValueError("trailing bits after circuit encoding")
    return QuantumCircuit(inputs, tuple(gates), anc - 1, out)


def gate_record_length(kind: str, width: int) -> int:
    return 3 + ARITY[kind] * target_width(width)


def header_length(inputs: int, ancillas: int, output_qubit: int, size: int) -> int:
    return sum(len(elias_gamma(x)) for x in (inputs, ancillas + 1, output_qubit, size + 1))


def encoding_length(c: QuantumCircuit) -> int:
    """Length in bits of :func:`serialize`; always at least the gate count."""
    body = sum(gate_record_length(g.kind, c.width) for g in c.gates)
    return header_length(c.inputs, c.ancillas, c.output_qubit, c.size) + body


# --- circuit JSON -----------------------------------------------------------------------


def circuit_to_json(c: QuantumCircuit) -> dict:
    return {
        "inputs": c.inputs,
        "ancillas": c.ancillas,
        "output": c.output_qubit,
        "gates": [{"g": g.kind, "t": list(g.targets)} for g in c.gates],
    }


def circuit_from_json(obj: dict | str) -> QuantumCircuit:
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        gates = tuple(Gate(str(g["g"]), tuple(g["t"])) for g in obj.get("gates", []))
        return QuantumCircuit(int(obj["inputs"]), gates, int(obj.get("ancillas", 0)), int(obj.get("output", 1)))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed circuit JSON: {exc}") from exc

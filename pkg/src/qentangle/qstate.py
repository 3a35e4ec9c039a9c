"""Pure states, density operators and the distance/entropy functionals on them.

Conventions used throughout the package:

* qubits are numbered ``1..n`` in every public signature;
* qubit 1 is the most significant bit of a basis index, so amplitude ``k`` of an
  n-qubit vector belongs to the basis string ``format(k, f"0{n}b")``;
* all logarithms are base 2.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import CapabilityError

NORM_TOL = 1e-9
EIG_TOL = 1e-9
JSON_NORM_TOL = 1e-6
ISOTOPY_LIMIT = 8
ISOTOPY_TOL = 1e-8


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Qustring:
    """A normalized pure state of ``n`` qubits."""

    amplitudes: np.ndarray
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        size = amps.size
        if size < 2 or size & (size - 1):
            raise ValueError(f"amplitude vector length {size} is not 2**n with n >= 1")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm={norm:.12g})")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def n(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @classmethod
    def from_vector(cls, vec, normalize: bool = False) -> "Qustring":
        vec = np.asarray(vec, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(vec)
            if norm == 0:
                raise ValueError("cannot normalize the zero vector")
            vec = vec / norm
        return cls(vec)

    @classmethod
    def basis(cls, bits: str) -> "Qustring":
        vec = np.zeros(2 ** len(bits), dtype=complex)
        vec[int(bits, 2)] = 1.0
        return cls(vec)

    @classmethod
    def zeros(cls, n: int) -> "Qustring":
        return cls.basis("0" * n)

    def tensor(self) -> np.ndarray:
        """Amplitudes as an ``(2,)*n`` array; axis ``i`` is qubit ``i+1``."""
        return self.amplitudes.reshape((2,) * self.n)

    def density(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def overlap(self, other: "Qustring") -> complex:
        """``<self|other>``."""
        if other.n != self.n:
            raise ValueError(f"length mismatch: {self.n} vs {other.n}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def equals_up_to_phase(self, other: "Qustring", tol: float = ISOTOPY_TOL) -> bool:
        if other.n != self.n:
            return False
        return _phase_aligned_error(self.amplitudes, other.amplitudes) <= tol

    def __repr__(self):
        return f"Qustring(n={self.n})"


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, positive semidefinite, unit-trace matrix on ``n`` qubits."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density operator must be a square matrix")
        d = m.shape[0]
        if d < 2 or d & (d - 1):
            raise ValueError(f"dimension {d} is not 2**n with n >= 1")
        if np.max(np.abs(m - m.conj().T)) > EIG_TOL:
            raise ValueError("matrix is not Hermitian")
        m = (m + m.conj().T) / 2
        if abs(np.trace(m).real - 1.0) > EIG_TOL:
            raise ValueError(f"trace {np.trace(m).real:.12g} != 1")
        if np.linalg.eigvalsh(m).min() < -EIG_TOL:
            raise ValueError("matrix has a negative eigenvalue")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def n(self) -> int:
        return self.matrix.shape[0].bit_length() - 1

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def is_pure(self, tol: float = NORM_TOL) -> bool:
        return self.purity() >= 1.0 - tol

    def __repr__(self):
        return f"DensityOperator(n={self.n})"


State = Union[Qustring, DensityOperator]


@dataclass(frozen=True)
class QubitPermutation:
    """Bijection on ``{1..n}``; ``mapping[j-1] = sigma(j)``.

    Applied to a state, output position ``j`` carries the input qubit ``sigma(j)``.
    """

    mapping: tuple

    def __post_init__(self):
        mapping = tuple(int(x) for x in self.mapping)
        if sorted(mapping) != list(range(1, len(mapping) + 1)):
            raise ValueError(f"{mapping} is not a permutation of 1..{len(mapping)}")
        object.__setattr__(self, "mapping", mapping)

    @property
    def n(self) -> int:
        return len(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "QubitPermutation":
        return cls(tuple(range(1, n + 1)))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "QubitPermutation":
        return cls(tuple(int(x) + 1 for x in rng.permutation(n)))

    def __call__(self, j: int) -> int:
        return self.mapping[j - 1]

    def inverse(self) -> "QubitPermutation":
        inv = [0] * self.n
        for j, s in enumerate(self.mapping, start=1):
            inv[s - 1] = j
        return QubitPermutation(tuple(inv))

    def compose(self, other: "QubitPermutation") -> "QubitPermutation":
        """Permutation equal to applying ``other`` first and then ``self``."""
        return QubitPermutation(tuple(other(self(j)) for j in range(1, self.n + 1)))

    def is_identity(self) -> bool:
        return self.mapping == tuple(range(1, self.n + 1))


def tensor_product(a: Qustring, b: Qustring) -> Qustring:
    return Qustring(np.kron(a.amplitudes, b.amplitudes))


def tensor_all(states: Iterable[Qustring]) -> Qustring:
    vec = np.ones(1, dtype=complex)
    for s in states:
        vec = np.kron(vec, s.amplitudes)
    return Qustring(vec)


def permute_axes(vec: np.ndarray, sigma: QubitPermutation) -> np.ndarray:
    """Raw-array version of :func:`apply_permutation` (no normalization check)."""
    t = np.asarray(vec).reshape((2,) * sigma.n)
    return np.transpose(t, [s - 1 for s in sigma.mapping]).reshape(-1)


def apply_permutation(sigma: QubitPermutation, phi: Qustring) -> Qustring:
    if sigma.n != phi.n:
        raise ValueError(f"permutation on {sigma.n} qubits applied to a {phi.n}-qubit state")
    return Qustring(permute_axes(phi.amplitudes, sigma))


def permutation_operator(sigma: QubitPermutation) -> np.ndarray:
    """Unitary ``P`` with ``P @ phi == apply_permutation(sigma, phi)``."""
    d = 2**sigma.n
    return np.stack([permute_axes(col, sigma) for col in np.eye(d)], axis=1)


def _as_density_matrix(x: State) -> np.ndarray:
    if isinstance(x, Qustring):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    return np.asarray(x.matrix)


def reduced_density(psi: Qustring, keep: Sequence[int]) -> np.ndarray:
    """Reduced density matrix of a pure state on the 1-based qubits in ``keep``."""
    keep = _check_keep(keep, psi.n)
    rest = [q for q in range(1, psi.n + 1) if q not in keep]
    t = np.transpose(psi.tensor(), [q - 1 for q in keep + rest])
    m = t.reshape(2 ** len(keep), -1)
    return m @ m.conj().T


def _check_keep(keep, n: int) -> list:
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise ValueError("keep set is empty")
    if keep[0] < 1 or keep[-1] > n:
        raise ValueError(f"keep set {keep} out of range 1..{n}")
    return keep


def partial_trace(rho: State, keep: Sequence[int]) -> DensityOperator:
    """Trace out every qubit not in ``keep``; kept qubits stay in ascending order."""
    if isinstance(rho, Qustring):
        return DensityOperator(reduced_density(rho, keep))
    n = rho.n
    keep = _check_keep(keep, n)
    rest = [q for q in range(1, n + 1) if q not in keep]
    t = np.asarray(rho.matrix).reshape((2,) * (2 * n))
    perm = [q - 1 for q in keep + rest]
    t = np.transpose(t, perm + [n + p for p in perm])
    dk, dr = 2 ** len(keep), 2 ** len(rest)
    t = t.reshape(dk, dr, dk, dr)
    return DensityOperator(np.einsum("ajbj->ab", t))


@dataclass(frozen=True)
class Metrics:
    fidelity: float
    trace_distance: float
    bures: float
    l2: float | None


def fidelity(a: State, b: State) -> float:
    """Root fidelity ``Tr sqrt(sqrt(rho) tau sqrt(rho))``."""
    _check_same_dim(a, b)
    if isinstance(a, Qustring) and isinstance(b, Qustring):
        f = abs(np.vdot(a.amplitudes, b.amplitudes))
    elif isinstance(a, Qustring) or isinstance(b, Qustring):
        pure, mixed = (a, b) if isinstance(a, Qustring) else (b, a)
        v = pure.amplitudes
        f = np.sqrt(max(float(np.real(v.conj() @ mixed.matrix @ v)), 0.0))
    else:
        lam, vec = np.linalg.eigh(a.matrix)
        root = (vec * np.sqrt(np.clip(lam, 0, None))) @ vec.conj().T
        inner = np.linalg.eigvalsh(root @ b.matrix @ root)
        f = float(np.sum(np.sqrt(np.clip(inner, 0, None))))
    return float(min(max(f, 0.0), 1.0))


def trace_distance(a: State, b: State) -> float:
    """Half the trace norm of ``rho - tau``; lies in [0, 1]."""
    _check_same_dim(a, b)
    if isinstance(a, Qustring) and isinstance(b, Qustring):
        f = fidelity(a, b)
        return float(np.sqrt(max(0.0, 1.0 - f * f)))
    diff = _as_density_matrix(a) - _as_density_matrix(b)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def l2_distance(a: Qustring, b: Qustring) -> float:
    if not (isinstance(a, Qustring) and isinstance(b, Qustring)):
        raise ValueError("the L2 distance is defined only for pure states")
    _check_same_dim(a, b)
    return float(np.linalg.norm(a.amplitudes - b.amplitudes))


def metrics(a: State, b: State) -> Metrics:
    """Fidelity, trace distance, Bures metric ``2(1-F)`` and L2 distance.

    ``l2`` is ``None`` unless both arguments are pure; use :func:`l2_distance`
    to get an error instead.
    """
    f = fidelity(a, b)
    l2 = None
    if isinstance(a, Qustring) and isinstance(b, Qustring):
        l2 = l2_distance(a, b)
    return Metrics(fidelity=f, trace_distance=trace_distance(a, b), bures=2.0 * (1.0 - f), l2=l2)


def _check_same_dim(a: State, b: State) -> None:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n} qubits")


def entropy_of_spectrum(lam: np.ndarray) -> float:
    lam = np.asarray(lam, dtype=float)
    if lam.min() < -EIG_TOL or lam.max() > 1 + EIG_TOL:
        raise ValueError(f"eigenvalues outside [0, 1] beyond tolerance: {lam.min()}, {lam.max()}")
    lam = np.clip(lam, 0.0, 1.0)
    lam = lam[lam > 0]
    return float(max(0.0, -np.sum(lam * np.log2(lam))))


def von_neumann_entropy(rho: State) -> float:
    if isinstance(rho, Qustring):
        return 0.0
    return entropy_of_spectrum(np.linalg.eigvalsh(rho.matrix))


def average_entropy(psi: Qustring) -> float:
    """Mean entropy of the prefix reductions ``1..i-1`` for ``i = 2..n``."""
    n = psi.n
    if n < 2:
        raise ValueError("average entropy needs at least 2 qubits")
    total = 0.0
    for i in range(2, n + 1):
        total += entropy_of_spectrum(np.linalg.eigvalsh(reduced_density(psi, range(1, i))))
    return total / (n - 1)


def _phase_aligned_error(a: np.ndarray, b: np.ndarray) -> float:
    ov = np.vdot(a, b)
    phase = ov / abs(ov) if abs(ov) > 0 else 1.0
    return float(np.max(np.abs(a * phase - b)))


def _qubit_spectra(psi: Qustring) -> list:
    return [np.linalg.eigvalsh(reduced_density(psi, [q])) for q in range(1, psi.n + 1)]


def is_isotopic(phi: Qustring, psi: Qustring, limit: int = ISOTOPY_LIMIT) -> QubitPermutation | None:
    """Find ``sigma`` with ``sigma(phi) == psi`` up to a global phase, or return None.

    Candidate assignments are pruned by matching single-qubit reduced spectra
    before the (exponential) search over permutations.
    """
    if phi.n != psi.n:
        raise ValueError(f"length mismatch: {phi.n} vs {psi.n}")
    n = phi.n
    if n > limit:
        raise CapabilityError(f"exhaustive isotopy search limited to n <= {limit}, got {n}")
    spec_phi, spec_psi = _qubit_spectra(phi), _qubit_spectra(psi)
    candidates = []
    for j in range(n):
        cands = [i for i in range(n) if np.allclose(spec_phi[i], spec_psi[j], atol=1e-7)]
        if not cands:
            return None
        candidates.append(cands)
    for choice in itertools.product(*candidates):
        if len(set(choice)) != n:
            continue
        sigma = QubitPermutation(tuple(i + 1 for i in choice))
        if _phase_aligned_error(permute_axes(phi.amplitudes, sigma), psi.amplitudes) <= ISOTOPY_TOL:
            return sigma
    return None


# --- named states -----------------------------------------------------------------


def ghz(n: int) -> Qustring:
    vec = np.zeros(2**n, dtype=complex)
    vec[0] = vec[-1] = 1 / np.sqrt(2)
    return Qustring(vec)


def bell() -> Qustring:
    return ghz(2)


def w_state(n: int) -> Qustring:
    vec = np.zeros(2**n, dtype=complex)
    for q in range(n):
        vec[1 << q] = 1.0
    return Qustring(vec / np.sqrt(n))


def pairwise(n_total: int) -> Qustring:
    """``2^{-m/2} sum_x |x x>`` on ``n_total = 2m`` qubits."""
    if n_total % 2:
        raise ValueError("pairwise state needs an even number of qubits")
    m = n_total // 2
    vec = np.zeros(2**n_total, dtype=complex)
    for x in range(2**m):
        vec[(x << m) | x] = 1.0
    return Qustring(vec / np.sqrt(2**m))


def random_state(n: int, rng: np.random.Generator) -> Qustring:
    v = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    return Qustring(v / np.linalg.norm(v))


def random_density(n: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    d = 2**n
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return DensityOperator(m / np.trace(m).real)


# --- JSON ---------------------------------------------------------------------------


def state_to_json(psi: Qustring) -> dict:
    return {"n": psi.n, "amplitudes": [[float(a.real), float(a.imag)] for a in psi.amplitudes]}


def state_from_json(obj: dict | str) -> Qustring:
    """Parse the state JSON format, renormalizing deviations up to 1e-6.

    The applied correction is recorded in ``meta["normalization_correction"]``.
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        n = int(obj["n"])
        amps = np.array([complex(float(re), float(im)) for re, im in obj["amplitudes"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"malformed state JSON: {exc}") from exc
    if amps.size != 2**n:
        raise ValueError(f"expected {2**n} amplitudes for n={n}, got {amps.size}")
    norm = float(np.linalg.norm(amps))
    if abs(norm - 1.0) > JSON_NORM_TOL:
        raise ValueError(f"state norm {norm:.9g} deviates from 1 by more than {JSON_NORM_TOL}")
    return Qustring(amps / norm, meta={"normalization_correction": norm - 1.0})

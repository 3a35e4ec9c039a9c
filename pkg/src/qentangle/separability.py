"""Factorization structure of pure states and the k-separability distance."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import CapabilityError
from .qstate import (
    QubitPermutation,
    Qustring,
    average_entropy,
    permute_axes,
    reduced_density,
)

PURITY_TOL = 1e-9
BORDERLINE_TOL = 1e-6
FACTORIZATION_LIMIT = 14
SDIS_LIMIT = 10
ORACLE_LIMIT = 4
DEFAULT_RESTARTS = 16
DEFAULT_TOL = 1e-10
DEFAULT_SEED = 20240601
MAX_SWEEPS = 500


@dataclass(frozen=True)
class BlockPartition:
    """Set partition of ``{1..n}`` into ``k`` blocks.

    ``blocks`` are kept in the order they occupy after ``sigma`` is applied, so
    ``apply_permutation(sigma, phi)`` lays the blocks out contiguously with
    sizes ``sectioning``.
    """

    n: int
    blocks: tuple

    def __post_init__(self):
        blocks = tuple(tuple(int(q) for q in b) for b in self.blocks)
        flat = [q for b in blocks for q in b]
        if any(len(b) == 0 for b in blocks):
            raise ValueError("empty block")
        if sorted(flat) != list(range(1, self.n + 1)):
            raise ValueError(f"blocks {blocks} do not partition 1..{self.n}")
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def canonical(cls, n: int, blocks) -> "BlockPartition":
        """Members sorted within blocks, blocks sorted by their smallest member."""
        blocks = sorted((tuple(sorted(b)) for b in blocks), key=lambda b: b[0])
        return cls(n, tuple(blocks))

    @classmethod
    def from_pair(cls, sigma: QubitPermutation, sectioning: Sequence[int]) -> "BlockPartition":
        if sum(sectioning) != sigma.n or any(m < 1 for m in sectioning):
            raise ValueError(f"sectioning {tuple(sectioning)} inconsistent with n={sigma.n}")
        blocks, pos = [], 0
        for m in sectioning:
            blocks.append(sigma.mapping[pos : pos + m])
            pos += m
        return cls(sigma.n, tuple(blocks))

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def sectioning(self) -> tuple:
        return tuple(len(b) for b in self.blocks)

    @property
    def sigma(self) -> QubitPermutation:
        return QubitPermutation(tuple(q for b in self.blocks for q in b))

    def canonical_form(self) -> "BlockPartition":
        return BlockPartition.canonical(self.n, self.blocks)

    def random_achieving(self, rng: np.random.Generator) -> "BlockPartition":
        """Same set partition with shuffled block order and member order."""
        order = rng.permutation(self.k)
        blocks = []
        for i in order:
            b = list(self.blocks[i])
            rng.shuffle(b)
            blocks.append(tuple(b))
        return BlockPartition(self.n, tuple(blocks))

    def to_json(self) -> list:
        return [list(b) for b in self.blocks]


def set_partitions(n: int, k: int) -> Iterator[BlockPartition]:
    """All partitions of ``{1..n}`` into exactly ``k`` blocks, canonical order.

    Uses restricted growth strings, so the count is the Stirling number S(n, k).
    """
    if not 1 <= k <= n:
        return

    def grow(i, labels, used):
        if n - i < k - used:
            return
        if i == n:
            if used == k:
                blocks = [[] for _ in range(k)]
                for q, lab in enumerate(labels, start=1):
                    blocks[lab].append(q)
                yield BlockPartition(n, tuple(tuple(b) for b in blocks))
            return
        for lab in range(min(used + 1, k)):
            labels.append(lab)
            yield from grow(i + 1, labels, max(used, lab + 1))
            labels.pop()

    yield from grow(0, [], 0)


def stirling2(n: int, k: int) -> int:
    return sum((-1) ** j * math.comb(k, j) * (k - j) ** n for j in range(k + 1)) // math.factorial(k)


def block_tensor(vec: np.ndarray, partition: BlockPartition) -> np.ndarray:
    """Reshape a state vector into a k-way tensor with one axis per block."""
    arr = permute_axes(vec, partition.sigma)
    return arr.reshape([2**m for m in partition.sectioning])


def unblock(vectors: Sequence[np.ndarray], partition: BlockPartition) -> np.ndarray:
    """Inverse of :func:`block_tensor` for a product of per-block vectors."""
    prod = np.ones(1, dtype=complex)
    for v in vectors:
        prod = np.kron(prod, v)
    return permute_axes(prod, partition.sigma.inverse())


# --- finest factorization -------------------------------------------------------------


def _purity(psi: Qustring, subset: Sequence[int]) -> float:
    n = psi.n
    rest = [q for q in range(1, n + 1) if q not in subset]
    t = np.transpose(psi.tensor(), [q - 1 for q in list(subset) + rest])
    m = t.reshape(2 ** len(subset), -1)
    gram = m @ m.conj().T if m.shape[0] <= m.shape[1] else m.conj().T @ m
    return float(np.real(np.vdot(gram, gram)))


@dataclass(frozen=True)
class SeparabilityReport:
    sind: int
    finest_partition: BlockPartition
    factors: tuple
    residual: tuple
    borderline: tuple = ()

    def reconstruct(self) -> Qustring:
        vec = unblock([f.amplitudes for f in self.factors], self.finest_partition)
        return Qustring.from_vector(vec, normalize=True)

    def to_json(self) -> dict:
        return {
            "sind": self.sind,
            "blocks": self.finest_partition.to_json(),
            "residual": list(self.residual),
            "borderline": [list(b) for b in self.borderline],
        }


def finest_factorization(phi: Qustring, tol: float = PURITY_TOL) -> SeparabilityReport:
    """Unique finest tensor factorization of ``phi`` under qubit permutations.

    A subset S splits off iff its reduced state is pure; for each remaining
    qubit r the smallest splitting subset containing r is its block.
    """
    n = phi.n
    if n > FACTORIZATION_LIMIT:
        raise CapabilityError(f"finest_factorization limited to n <= {FACTORIZATION_LIMIT}, got {n}")
    remaining = list(range(1, n + 1))
    blocks, borderline = [], []
    while remaining:
        r, others = remaining[0], remaining[1:]
        block = None
        for size in range(0, len(others)):
            for extra in itertools.combinations(others, size):
                subset = (r,) + extra
                p = _purity(phi, subset)
                if p >= 1 - tol:
                    block = subset
                    break
                if p >= 1 - BORDERLINE_TOL:
                    borderline.append(subset)
            if block is not None:
                break
        if block is None:
            block = tuple(remaining)
        blocks.append(tuple(sorted(block)))
        remaining = [q for q in remaining if q not in block]

    partition = BlockPartition.canonical(n, blocks)
    factors, residual = [], []
    for b in partition.blocks:
        lam, vec = np.linalg.eigh(reduced_density(phi, b))
        factors.append(vec[:, -1])
        residual.append(float(max(0.0, 1.0 - _purity(phi, b))))
    recon = unblock(factors, partition)
    ov = np.vdot(recon, phi.amplitudes)
    if abs(ov) > 0:
        factors[0] = factors[0] * ov / abs(ov)
    factors = tuple(Qustring.from_vector(f, normalize=True) for f in factors)
    return SeparabilityReport(
        sind=partition.k,
        finest_partition=partition,
        factors=factors,
        residual=tuple(residual),
        borderline=tuple(borderline),
    )


def sind(phi: Qustring) -> int:
    return finest_factorization(phi).sind


def is_k_separable(phi: Qustring, k: int) -> bool:
    if not 1 <= k <= phi.n:
        raise ValueError(f"k={k} outside 1..{phi.n}")
    return finest_factorization(phi).sind >= k


# --- alternating optimization over product states -------------------------------------


def _random_unit(d: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def _contract_except(t: np.ndarray, vecs: Sequence[np.ndarray], j: int) -> np.ndarray:
    """Contract tensor ``t`` with ``conj(vecs[i])`` on every axis except ``j``."""
    k = t.ndim
    ops = [t]
    subs = [_LETTERS[:k]]
    for i in range(k):
        if i != j:
            ops.append(vecs[i].conj())
            subs.append(_LETTERS[i])
    return np.einsum(",".join(subs) + "->" + _LETTERS[j], *ops)


def _contract_form(mt: np.ndarray, vecs: Sequence[np.ndarray], j: int) -> np.ndarray:
    """Effective Hermitian matrix on block ``j`` of the form ``<x|M|x>``."""
    k = mt.ndim // 2
    rows, cols = _LETTERS[:k], _LETTERS[k : 2 * k]
    ops, subs = [mt], [rows + cols]
    for i in range(k):
        if i != j:
            ops += [vecs[i].conj(), vecs[i]]
            subs += [rows[i], cols[i]]
    return np.einsum(",".join(subs) + "->" + rows[j] + cols[j], *ops)


@dataclass
class _Sweep:
    value: float
    vecs: list
    converged: bool
    sweeps: int


def _als_overlap(t: np.ndarray, vecs: list, tol: float, rng) -> _Sweep:
    value = -1.0
    for sweep in range(1, MAX_SWEEPS + 1):
        for j in range(t.ndim):
            v = _contract_except(t, vecs, j)
            norm = np.linalg.norm(v)
            vecs[j] = v / norm if norm > 1e-14 else _random_unit(t.shape[j], rng)
        new = float(np.linalg.norm(_contract_except(t, vecs, 0)))
        if new - value < tol:
            return _Sweep(max(new, value), vecs, True, sweep)
        value = new
    return _Sweep(value, vecs, False, MAX_SWEEPS)


def _als_form_max(mt: np.ndarray, vecs: list, tol: float, rng) -> _Sweep:
    value = -np.inf
    k = mt.ndim // 2
    for sweep in range(1, MAX_SWEEPS + 1):
        for j in range(k):
            eff = _contract_form(mt, vecs, j)
            eff = (eff + eff.conj().T) / 2
            lam, vec = np.linalg.eigh(eff)
            vecs[j] = vec[:, -1]
            new = float(lam[-1])
        if new - value < tol:
            return _Sweep(max(new, value), vecs, True, sweep)
        value = new
    return _Sweep(value, vecs, False, MAX_SWEEPS)


def _top_block_vectors(vec: np.ndarray, partition: BlockPartition) -> list:
    """Per-block dominant eigenvectors of the reduced states of ``vec`` (HOSVD-style start)."""
    t = block_tensor(vec, partition)
    out = []
    for j in range(t.ndim):
        m = np.moveaxis(t, j, 0).reshape(t.shape[j], -1)
        _, v = np.linalg.eigh(m @ m.conj().T)
        out.append(v[:, -1])
    return out


@dataclass(frozen=True)
class ProductOverlap:
    overlap: float
    witness: tuple
    converged: bool


def best_product_overlap(
    phi: Qustring,
    partition: BlockPartition,
    restarts: int = DEFAULT_RESTARTS,
    tol: float = DEFAULT_TOL,
    seed: int | None = DEFAULT_SEED,
) -> ProductOverlap:
    """Locally maximal ``|<phi| psi_1 x ... x psi_k>|`` over per-block unit vectors.

    Alternating updates: each block's optimum, given the others, is the
    normalized contraction of ``phi`` against them. The first start uses the
    dominant reduced-state eigenvectors, the rest are random.
    """
    if partition.n != phi.n:
        raise ValueError(f"partition on {partition.n} qubits, state on {phi.n}")
    t = block_tensor(phi.amplitudes, partition)
    rng = np.random.default_rng(seed)
    if partition.k == 1:
        return ProductOverlap(1.0, (phi,), True)
    starts = [_top_block_vectors(phi.amplitudes, partition)]
    starts += [[_random_unit(d, rng) for d in t.shape] for _ in range(restarts)]
    best = None
    for init in starts:
        res = _als_overlap(t, list(init), tol, rng)
        if best is None or res.value > best.value + 1e-15:
            best = res
    witness = tuple(Qustring.from_vector(v, normalize=True) for v in best.vecs)
    return ProductOverlap(float(min(best.value, 1.0)), witness, best.converged)


# --- k-separability distance ------------------------------------------------------------


@dataclass(frozen=True)
class SdisResult:
    value: float
    nearest: Qustring
    partition: BlockPartition
    overlap: float
    converged: bool
    k: int

    def to_json(self) -> dict:
        return {"k": self.k, "value": self.value, "partition": self.partition.to_json()}


def _check_sdis_args(phi: Qustring, k: int, limit: int) -> None:
    if not 2 <= k <= phi.n:
        raise ValueError(f"k={k} outside 2..{phi.n}")
    if phi.n > limit:
        raise CapabilityError(f"limited to n <= {limit}, got {phi.n}")


def sdis(
    phi: Qustring,
    k: int,
    restarts: int = DEFAULT_RESTARTS,
    tol: float = DEFAULT_TOL,
    seed: int = DEFAULT_SEED,
    threads: int = 1,
) -> SdisResult:
    """Minimum trace distance from ``phi`` to k-separable pure states.

    Minimizes ``sqrt(1 - overlap**2)`` over every set partition into ``k``
    blocks. Each partition gets its own seed so results do not depend on
    ``threads``.
    """
    _check_sdis_args(phi, k, SDIS_LIMIT)
    partitions = list(set_partitions(phi.n, k))

    def run(item):
        idx, part = item
        return best_product_overlap(phi, part, restarts, tol, seed=(seed, idx))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, enumerate(partitions)))
    else:
        results = [run(item) for item in enumerate(partitions)]

    best_idx = max(range(len(results)), key=lambda i: (results[i].overlap, -i))
    best, part = results[best_idx], partitions[best_idx]
    nearest_vec = unblock([w.amplitudes for w in best.witness], part)
    ov = np.vdot(nearest_vec, phi.amplitudes)
    if abs(ov) > 0:
        nearest_vec = nearest_vec * ov / abs(ov)
    nearest = Qustring.from_vector(nearest_vec, normalize=True)
    value = float(np.sqrt(max(0.0, 1.0 - best.overlap**2)))
    return SdisResult(value, nearest, part, best.overlap, all(r.converged for r in results), k)


def _qubit_grid(grid: int) -> np.ndarray:
    theta = np.linspace(0.0, np.pi, grid)
    phase = np.linspace(0.0, 2 * np.pi, grid, endpoint=False)
    pts = [(np.cos(t / 2), np.exp(1j * p) * np.sin(t / 2)) for t in theta for p in phase]
    return np.array(pts, dtype=complex)


def _schmidt_overlap(t: np.ndarray) -> float:
    return float(np.linalg.svd(t, compute_uv=False)[0])


def _grid_best(arr: np.ndarray, pts: np.ndarray) -> float:
    """Max over grid points on every leading qubit axis of the norm of the last axis."""
    if arr.ndim > 3:
        return max(_grid_best(np.tensordot(p.conj(), arr, axes=([0], [0])), pts) for p in pts)
    for i in range(arr.ndim - 1):
        arr = np.tensordot(pts.conj(), arr, axes=([1], [i]))
        arr = np.moveaxis(arr, 0, i)
    return float(np.max(np.linalg.norm(arr, axis=-1)))


def sdis_oracle(phi: Qustring, k: int, grid: int = 24, method: str = "grid") -> float:
    """Brute-force cross-check of :func:`sdis`.

    ``method="schmidt"`` evaluates 2-block partitions exactly by singular
    values (only valid for ``k = 2``). ``method="grid"`` scans Bloch-sphere
    grids for every singleton block except the largest block, which is
    optimized in closed form; 2-block partitions with no singleton side fall
    back to the Schmidt evaluation. Grid results upper-bound the true distance.
    The grid path is limited to ``n <= 4``, the Schmidt path to ``n <= 10``.
    """
    _check_sdis_args(phi, k, ORACLE_LIMIT if method == "grid" else SDIS_LIMIT)
    if method not in ("grid", "schmidt"):
        raise ValueError(f"unknown oracle method {method!r}")
    if method == "schmidt" and k != 2:
        raise ValueError("the Schmidt path only covers 2-block partitions")
    pts = _qubit_grid(grid)
    best = 0.0
    for part in set_partitions(phi.n, k):
        t = block_tensor(phi.amplitudes, part)
        if method == "schmidt":
            best = max(best, _schmidt_overlap(t.reshape(t.shape[0], -1)))
            continue
        big = int(np.argmax(t.shape))
        scanned = [j for j in range(t.ndim) if j != big]
        if any(t.shape[j] != 2 for j in scanned):
            best = max(best, _schmidt_overlap(t.reshape(t.shape[0], -1)))
            continue
        best = max(best, _grid_best(np.moveaxis(t, big, -1), pts))
    return float(np.sqrt(max(0.0, 1.0 - min(best, 1.0) ** 2)))


# --- closeness and the entropy-gap bound ------------------------------------------------


@dataclass(frozen=True)
class Closeness:
    label: str
    sdis: float
    delta: float
    margin: float


def classify_closeness(phi: Qustring, k: int, delta: float, **kw) -> Closeness:
    value = sdis(phi, k, **kw).value
    label = "close" if value <= delta else "far"
    return Closeness(label, value, delta, abs(value - delta))


def eta(gamma: float) -> float:
    return 0.0 if gamma <= 0 else float(-gamma * np.log2(gamma))


@dataclass(frozen=True)
class EntropyGap:
    status: str
    lhs: float
    bound: float
    holds: bool
    sdis: float
    nearest: Qustring | None = field(default=None, repr=False)


def entropy_gap_check(phi: Qustring, k: int, **kw) -> EntropyGap:
    """Compare ``|E(phi) - E(phi*)|`` with ``s (n - log2 s)`` for the sdis witness ``phi*``.

    Only meaningful when ``s = sdis_k(phi) <= 1/e``; otherwise the status is
    ``"not-applicable"``.
    """
    res = sdis(phi, k, **kw)
    s = res.value
    if s > 1 / np.e:
        return EntropyGap("not-applicable", float("nan"), float("nan"), False, s, res.nearest)
    n = phi.n
    bound = s * n + eta(s)
    lhs = abs(average_entropy(phi) - average_entropy(res.nearest))
    return EntropyGap("checked", lhs, bound, lhs <= bound + 1e-9, s, res.nearest)

"""
Input states, operator-Schmidt decompositions, Cube measurements and sampling.

Randomness always flows through Philox generators seeded from a
``numpy.random.SeedSequence`` so that every (seed, set) pair owns an
independent, reproducible substream.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import qlinalg as ql
from .errors import DimensionError, DomainError, GenerationError

SCHMIDT_TOL = 1e-6
MAX_RESAMPLES = 100

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def substream(seed, *keys):
    """Philox generator for the substream ``keys`` of ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))))


def derive_seed(seed, *keys):
    """Deterministic 63-bit child seed of ``seed`` along ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def is_density_matrix(rho, tol=1e-10):
    rho = np.asarray(rho)
    return (
        ql.is_hermitian(rho, tol)
        and abs(np.trace(rho) - 1) <= tol
        and np.linalg.eigvalsh(ql.hermitian_part(rho))[0] >= -tol
    )


def maximally_entangled_state(d):
    """``|Phi><Phi|`` with ``|Phi> = sum_i |i>|i> / sqrt(d)`` on ``d**2`` levels."""
    d = int(d)
    if d < 2:
        raise DomainError(f"d must be >= 2, got {d}")
    phi = np.eye(d, dtype=complex).ravel() / np.sqrt(d)
    return np.outer(phi, phi.conj())


def ginibre_state(d, rng):
    G = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = G @ ql.dagger(G)
    return ql.hermitian_part(rho / np.trace(rho).real)


def random_full_schmidt_state(dA, dB, seed, tol=SCHMIDT_TOL):
    """
    Ginibre-random density matrix whose ``dA**2`` operator-Schmidt coefficients
    all exceed ``tol``. Resamples up to 100 times.
    """
    dA, dB = int(dA), int(dB)
    if dB < dA:
        raise DomainError(f"ancilla dimension dB={dB} must be >= dA={dA}")
    rng = substream(seed)
    for _ in range(MAX_RESAMPLES):
        rho = ginibre_state(dA * dB, rng)
        s = np.linalg.svd(ql.realign(rho, dA, dB), compute_uv=False)
        if s[dA * dA - 1] > tol:
            return rho
    raise GenerationError(f"no full-Schmidt state found in {MAX_RESAMPLES} draws (tol={tol:g})")


@dataclass(frozen=True)
class SchmidtDecomposition:
    """``sigma = sum_j s[j] A_ops[j] (x) B_ops[j]`` with orthonormal operator bases."""

    dA: int
    dB: int
    s: np.ndarray
    A_ops: tuple
    B_ops: tuple

    def reconstruct(self):
        return sum(sj * np.kron(A, B) for sj, A, B in zip(self.s, self.A_ops, self.B_ops))

    @cached_property
    def V(self):
        """Basis matrix with columns ``vec(A_j)``."""
        return np.column_stack([ql.vec(A) for A in self.A_ops])

    @property
    def purity(self):
        return float(np.sum(self.s**2))

    @property
    def inverse_square_sum(self):
        return float(np.sum(1.0 / self.s**2))


def operator_schmidt(sigma, dA, dB):
    """
    Operator-Schmidt decomposition from the SVD of :func:`qlinalg.realign`.

    Each ``A_j`` is rescaled so that its first nonzero entry (row-major) is real and
    positive; the conjugate phase moves into ``B_j``.
    """
    sigma = np.asarray(sigma)
    if sigma.shape != (dA * dB, dA * dB):
        raise DimensionError(f"state of shape {sigma.shape} does not factor as {dA}x{dB}")
    U, s, Vh = np.linalg.svd(ql.realign(sigma, dA, dB), full_matrices=False)
    A_ops, B_ops = [], []
    for j in range(s.size):
        A = U[:, j].reshape(dA, dA)
        B = Vh[j, :].reshape(dB, dB)
        flat = A.ravel()
        nz = np.flatnonzero(np.abs(flat) > 1e-12)
        if nz.size:
            ph = flat[nz[0]] / abs(flat[nz[0]])
            A, B = A / ph, B * ph
        A_ops.append(A)
        B_ops.append(B)
    return SchmidtDecomposition(dA, dB, s, tuple(A_ops), tuple(B_ops))


def schmidt_number(sigma, dA, dB, tol=SCHMIDT_TOL):
    s = np.linalg.svd(ql.realign(np.asarray(sigma), dA, dB), compute_uv=False)
    return int(np.count_nonzero(s > tol))


@dataclass(frozen=True, eq=False)
class MeasurementSuite:
    """``L`` projective basis sets, each a tuple of PSD operators summing to I."""

    dim: int
    sets: tuple
    labels: tuple = ()

    @property
    def L(self):
        return len(self.sets)

    @property
    def M(self):
        return sum(len(s) for s in self.sets)

    @cached_property
    def operators(self):
        """All ``M`` operators stacked as an ``(M, dim, dim)`` array."""
        return np.array([P for s in self.sets for P in s])

    @cached_property
    def set_sizes(self):
        return tuple(len(s) for s in self.sets)

    def to_json(self):
        return [[ql.matrix_to_json(P) for P in s] for s in self.sets]


def _cube_single():
    I = np.eye(2, dtype=complex)
    return [((I + P) / 2, (I - P) / 2) for P in (PAULI_X, PAULI_Y, PAULI_Z)]


def cube_measurements(n_qubits):
    """Tensor products of the one-qubit sets {(I +- sigma_x)/2}, {(I +- sigma_y)/2}, {(I +- sigma_z)/2}."""
    n = int(n_qubits)
    if n < 1:
        raise DomainError(f"need at least one qubit, got {n}")
    single = _cube_single()
    sets, labels = [], []
    for combo in itertools.product(range(3), repeat=n):
        ops = []
        for outcome in itertools.product(range(2), repeat=n):
            P = np.ones((1, 1), dtype=complex)
            for axis, o in zip(combo, outcome):
                P = np.kron(P, single[axis][o])
            ops.append(P)
        sets.append(tuple(ops))
        labels.append("".join("xyz"[a] for a in combo))
    return MeasurementSuite(2**n, tuple(sets), tuple(labels))


def evolve_input(channel, sigma_in, dA, dB):
    """``(E (x) I)(sigma_in)`` via the Kraus operators ``A_k (x) I_dB``."""
    sigma_in = np.asarray(sigma_in)
    if channel.dim != dA or sigma_in.shape != (dA * dB, dA * dB):
        raise DimensionError(
            f"channel dim {channel.dim} / state shape {sigma_in.shape} incompatible with ({dA}, {dB})"
        )
    I_B = np.eye(dB)
    out = np.zeros_like(sigma_in, dtype=complex)
    for A in channel.operators:
        K = np.kron(A, I_B)
        out += K @ sigma_in @ ql.dagger(K)
    return ql.hermitian_part(out)


def born_probabilities(sigma, suite):
    """Per-set outcome probabilities ``Tr(P_m sigma)`` clipped to [0, 1]."""
    sigma = np.asarray(sigma)
    if sigma.shape != (suite.dim, suite.dim):
        raise DimensionError(f"state shape {sigma.shape} does not match suite dimension {suite.dim}")
    p = np.clip(np.einsum("mij,ji->m", suite.operators, sigma).real, 0.0, 1.0)
    return tuple(np.split(p, np.cumsum(suite.set_sizes)[:-1]))


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    """
    Outcome counts for every basis set.

    ``counts[l]`` holds the detected outcomes of set ``l``; ``lost[l]`` counts copies
    that produced no outcome (nonzero only for trace-decreasing channels), so
    ``counts[l].sum() + lost[l] == copies_per_set``. An exact record has
    ``copies_per_set = None`` and carries Born probabilities instead of counts.
    """

    suite: MeasurementSuite
    counts: tuple
    copies_per_set: int | None
    N: int | None
    seed: int | None
    discarded: int = 0
    lost: tuple = ()
    probabilities: tuple | None = None

    @property
    def is_exact(self):
        return self.copies_per_set is None

    def frequencies(self):
        if self.is_exact:
            return tuple(np.asarray(p, dtype=float) for p in self.probabilities)
        return tuple(np.asarray(c, dtype=float) / self.copies_per_set for c in self.counts)

    def to_json(self):
        return {
            "seed": self.seed,
            "N": self.N,
            "copiesPerSet": self.copies_per_set,
            "discarded": self.discarded,
            "counts": [[int(x) for x in c] for c in self.counts] if not self.is_exact else None,
            "lost": [int(x) for x in self.lost],
        }


def exact_record(sigma, suite):
    """Noiseless stand-in for a record: frequencies equal Born probabilities."""
    return MeasurementRecord(suite, (), None, None, None, probabilities=born_probabilities(sigma, suite))


def sample_counts(sigma, suite, N, seed):
    """
    Multinomial outcome counts with ``floor(N / L)`` copies per set.

    Set ``l`` draws from substream ``(seed, l)``. If ``Tr(sigma) < 1`` the missing
    probability is an extra no-detection outcome, reported in ``lost``.
    """
    N = int(N)
    if N < suite.L:
        raise DomainError(f"N={N} is smaller than the number of basis sets L={suite.L}")
    copies = N // suite.L
    counts, lost = [], []
    for l, p in enumerate(born_probabilities(sigma, suite)):
        rng = substream(seed, l)
        total = p.sum()
        if total > 1.0:
            p = p / total
            total = 1.0
        draw = rng.multinomial(copies, np.append(p, max(1.0 - total, 0.0)))
        counts.append(draw[:-1])
        lost.append(int(draw[-1]))
    return MeasurementRecord(
        suite, tuple(counts), copies, N, int(seed), discarded=N - copies * suite.L, lost=tuple(lost)
    )

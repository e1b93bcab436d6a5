"""
Quantum channels in Kraus and process-matrix form.

The process matrix of a channel ``E`` on a ``d``-dimensional system is

    X = sum_ij E(|i><j|) (x) |i><j|

with the output factor first. ``Tr_A`` (trace over the first factor) then gives
``(sum_k A_k^dagger A_k)^T``, which equals the identity exactly when ``E`` is
trace preserving.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import qlinalg as ql
from .errors import DimensionError, DomainError, ValidationError

CONSTRAINT_TOL = 1e-8
ARITH_TOL = 1e-10


class TraceClass(str, enum.Enum):
    TP = "TP"
    NON_TP = "non-TP"
    INVALID = "invalid"


@dataclass(frozen=True)
class KrausChannel:
    """A completely positive, trace non-increasing map given by Kraus operators."""

    operators: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        ops = tuple(np.array(A, dtype=complex) for A in self.operators)
        if not ops:
            raise ValidationError("a Kraus channel needs at least one operator")
        d = ops[0].shape[0]
        for A in ops:
            if A.shape != (d, d):
                raise DimensionError(f"Kraus operators must all be {d}x{d}, got {A.shape}")
            if not np.all(np.isfinite(A)):
                raise ValidationError("Kraus operator has non-finite entries")
            A.setflags(write=False)
        top = np.linalg.eigvalsh(completeness(ops))[-1]
        if top > 1 + ARITH_TOL:
            raise ValidationError(f"sum of A^dagger A exceeds the identity (max eigenvalue {top:.12g})")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "dim", d)

    def __len__(self):
        return len(self.operators)

    @property
    def is_tp(self):
        return np.linalg.norm(completeness(self.operators) - np.eye(self.dim)) <= ARITH_TOL


def completeness(operators):
    return sum(ql.dagger(A) @ A for A in operators)


@dataclass(frozen=True)
class ProcessMatrix:
    """Hermitian PSD ``d**2 x d**2`` matrix representing a CP map on ``dim_a`` levels."""

    X: np.ndarray
    dim_a: int

    def __post_init__(self):
        X = np.array(self.X, dtype=complex)
        n = self.dim_a * self.dim_a
        if X.shape != (n, n):
            raise DimensionError(f"process matrix for dA={self.dim_a} must be {n}x{n}, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValidationError("process matrix has non-finite entries")
        if not ql.is_hermitian(X, ARITH_TOL):
            raise ValidationError("process matrix is not Hermitian")
        X = ql.hermitian_part(X)
        lo = np.linalg.eigvalsh(X)[0]
        if lo < -ARITH_TOL:
            raise ValidationError(f"process matrix is not PSD (min eigenvalue {lo:.3e})")
        X.setflags(write=False)
        object.__setattr__(self, "X", X)

    @cached_property
    def trace_map(self):
        """``E = Tr_A(X)``."""
        return ql.partial_trace_first(self.X, self.dim_a, self.dim_a)


def phase_damping(lam):
    """Two-operator phase damping channel with scattering probability ``lam``."""
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    return KrausChannel((np.diag([1.0, np.sqrt(1.0 - lam)]), np.diag([0.0, np.sqrt(lam)])))


def identity_channel(d):
    return KrausChannel((np.eye(d),))


def kraus_to_process(channel):
    d = channel.dim
    X = np.zeros((d * d, d * d), dtype=complex)
    # (A (x) I)|Omega><Omega|(A (x) I)^dagger with |Omega> = sum_i |i>|i>
    for A in channel.operators:
        v = ql.vec(A.T)  # sum_i A|i> (x) |i>, i.e. A flattened row-major
        X += np.outer(v, v.conj())
    return ProcessMatrix(X, d)


def apply_channel_kraus(channel, rho):
    rho = np.asarray(rho)
    if rho.shape != (channel.dim, channel.dim):
        raise DimensionError(f"state shape {rho.shape} does not match channel dimension {channel.dim}")
    return sum(A @ rho @ ql.dagger(A) for A in channel.operators)


def apply_process_matrix(process, rho):
    X = process.X if isinstance(process, ProcessMatrix) else np.asarray(process)
    return ql.apply_choi(X, rho)


def is_trace_preserving(process, tol=CONSTRAINT_TOL):
    """Classify ``process`` as TP, non-TP or invalid from its trace map."""
    if isinstance(process, ProcessMatrix):
        E = process.trace_map
    else:
        X = np.asarray(process)
        d = ql._isqrt(X.shape[0], "process matrix size")
        E = ql.partial_trace_first(X, d, d)
    d = E.shape[0]
    if np.linalg.norm(E - np.eye(d)) <= tol:
        return TraceClass.TP
    if np.linalg.eigvalsh(ql.hermitian_part(E))[-1] <= 1 + tol:
        return TraceClass.NON_TP
    return TraceClass.INVALID


def _philox(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


def random_channel(d, rank, tp=True, seed=0):
    """
    Random channel from a Stinespring isometry.

    A ``rank*d x d`` complex Ginibre matrix is orthonormalized by QR and cut into
    ``rank`` Kraus blocks. Non-TP channels scale every block by ``sqrt(f)`` with
    ``f`` uniform in (0.1, 0.9), giving ``sum A^dagger A = f I``.
    """
    d, rank = int(d), int(rank)
    if d < 1 or not 1 <= rank <= d * d:
        raise DomainError(f"rank must lie in [1, d^2] = [1, {d * d}], got {rank}")
    rng = _philox(seed)
    G = rng.standard_normal((rank * d, d)) + 1j * rng.standard_normal((rank * d, d))
    W, r = np.linalg.qr(G)
    W = W * (np.diag(r) / np.abs(np.diag(r)))  # Haar-uniform phase convention
    ops = [W[k * d:(k + 1) * d, :] for k in range(rank)]
    if not tp:
        f = rng.uniform(0.1, 0.9)
        ops = [np.sqrt(f) * A for A in ops]
    return KrausChannel(tuple(ops))


def process_distance(X1, X2):
    A = X1.X if isinstance(X1, ProcessMatrix) else np.asarray(X1)
    B = X2.X if isinstance(X2, ProcessMatrix) else np.asarray(X2)
    if A.shape != B.shape:
        raise DimensionError(f"cannot compare process matrices of shapes {A.shape} and {B.shape}")
    return float(np.linalg.norm(A - B))


def channel_to_json(channel):
    if isinstance(channel, KrausChannel):
        return {"dimA": channel.dim, "kraus": [ql.matrix_to_json(A) for A in channel.operators]}
    return {"dimA": channel.dim_a, "X": ql.matrix_to_json(channel.X)}


def channel_from_json(obj):
    """Load either ``{dimA, kraus: [...]}`` or ``{dimA, X}``."""
    try:
        d = int(obj["dimA"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"channel object lacks a valid dimA: {exc}") from exc
    if "kraus" in obj:
        ch = KrausChannel(tuple(ql.matrix_from_json(m) for m in obj["kraus"]))
        if ch.dim != d:
            raise DimensionError(f"dimA={d} but Kraus operators are {ch.dim}x{ch.dim}")
        return ch
    if "X" in obj:
        return ProcessMatrix(ql.matrix_from_json(obj["X"]), d)
    raise ValidationError("channel object needs either 'kraus' or 'X'")

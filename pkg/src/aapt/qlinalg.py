"""
Dense complex linear algebra used throughout the package.

All vectorization is column-stacking: ``vec(M)[i + j*m] == M[i, j]``.
Composite systems use the standard Kronecker ordering, so an operator on
``H_A (x) H_B`` indexed as ``(a, b)`` has flat index ``a*dB + b``.
"""
from __future__ import annotations

import functools
from typing import NamedTuple

import numpy as np

from .errors import DimensionError, ValidationError

HERMITIAN_TOL = 1e-10
_TIE_TOL = 1e-12


def _as_square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def _isqrt(n, what):
    r = int(round(np.sqrt(n)))
    if r * r != n:
        raise DimensionError(f"{what} {n} is not a perfect square")
    return r


def vec(M):
    """Column-stack a square matrix into a vector of length ``d**2``."""
    M = _as_square(M)
    return M.reshape(-1, order="F")


def unvec(v):
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    d = _isqrt(v.size, "vector length")
    return v.reshape(d, d, order="F")


def kron(A, B):
    return np.kron(A, B)


def dagger(M):
    return np.conj(np.transpose(M))


def _check_bipartite(X, dA, dB):
    X = np.asarray(X)
    n = dA * dB
    if X.shape != (n, n):
        raise DimensionError(f"expected a {n}x{n} operator for dims ({dA}, {dB}), got {X.shape}")
    return X


def partial_trace_first(X, dA, dB):
    """Trace out the first (dimension ``dA``) factor; returns a ``dB x dB`` matrix."""
    X = _check_bipartite(X, dA, dB)
    return np.einsum("ajak->jk", X.reshape(dA, dB, dA, dB))


def partial_trace_second(X, dA, dB):
    """Trace out the second (dimension ``dB``) factor; returns a ``dA x dA`` matrix."""
    X = _check_bipartite(X, dA, dB)
    return np.einsum("ajbj->ab", X.reshape(dA, dB, dA, dB))


def swap_operator(dA, dB):
    """Permutation ``S`` with ``S (a (x) b) = b (x) a`` for ``a`` in C^dA, ``b`` in C^dB."""
    S = np.zeros((dA * dB, dA * dB))
    for a in range(dA):
        for b in range(dB):
            S[b * dA + a, a * dB + b] = 1.0
    return S


def hermitian_part(G):
    G = _as_square(G)
    return (G + dagger(G)) / 2


def is_hermitian(H, tol=HERMITIAN_TOL):
    H = np.asarray(H)
    return H.ndim == 2 and H.shape[0] == H.shape[1] and np.linalg.norm(H - dagger(H)) <= tol


def _require_hermitian(H, tol=HERMITIAN_TOL):
    H = _as_square(H)
    err = np.linalg.norm(H - dagger(H))
    if err > tol:
        raise ValidationError(f"matrix is not Hermitian: ||H - H^dagger|| = {err:.3e} > {tol:g}")
    return H


class HermitianEigenDecomposition(NamedTuple):
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        U = self.eigenvectors
        return (U * self.eigenvalues) @ dagger(U)


def _phase_fix(U):
    U = U.copy()
    for j in range(U.shape[1]):
        col = U[:, j]
        nz = np.flatnonzero(np.abs(col) > _TIE_TOL)
        if nz.size:
            ph = col[nz[0]] / abs(col[nz[0]])
            U[:, j] = col / ph
    return U


def eigh(H, tol=HERMITIAN_TOL):
    """
    Spectral decomposition of a Hermitian matrix.

    Eigenvalues are returned in descending order. Each eigenvector is phase-fixed so
    that its first nonzero component is real positive; eigenvectors sharing an
    eigenvalue (within 1e-12) are ordered lexicographically by their components.

    Raises
    ------
    ValidationError
        If ``H`` deviates from Hermitian by more than ``tol`` in Frobenius norm.
    """
    H = _require_hermitian(H, tol)
    w, U = np.linalg.eigh(hermitian_part(H))
    U = _phase_fix(U)

    def key(j):
        col = U[:, j]
        return tuple(np.column_stack([np.round(col.real, 12), np.round(col.imag, 12)]).ravel())

    order = list(np.argsort(-w, kind="stable"))
    # reorder inside clusters of (numerically) equal eigenvalues
    out, i = [], 0
    while i < len(order):
        j = i + 1
        while j < len(order) and abs(w[order[j]] - w[order[i]]) <= _TIE_TOL:
            j += 1
        cluster = order[i:j]
        out.extend(sorted(cluster, key=key, reverse=True) if len(cluster) > 1 else cluster)
        i = j
    out = np.asarray(out, dtype=int)
    return HermitianEigenDecomposition(w[out], U[:, out])


class ClampRecord(NamedTuple):
    """Spectrum before (``eigenvalues``) and after (``clamped``) clipping at zero."""

    eigenvalues: np.ndarray
    clamped: np.ndarray
    eigenvectors: np.ndarray


def psd_projection(H):
    """
    Frobenius-nearest positive semidefinite matrix to Hermitian ``H``.

    Returns
    -------
    D : ndarray
        ``W diag(max(k, 0)) W^dagger`` where ``H = W diag(k) W^dagger``.
    record : ClampRecord
    """
    dec = eigh(H)
    z = np.maximum(dec.eigenvalues, 0.0)
    W = dec.eigenvectors
    D = (W * z) @ dagger(W)
    return hermitian_part(D), ClampRecord(dec.eigenvalues, z, W)


def realign(sigma, dA, dB):
    """
    Realignment ``R[(i,k),(j,l)] = sigma[(i,j),(k,l)]``, shape ``dA**2 x dB**2``.

    The row index is the row-major flattening of an operator on ``H_A``, the
    column index that of an operator on ``H_B``, so ``realign(A (x) B)`` is the
    outer product ``A.ravel() B.ravel()^T``.
    """
    sigma = _check_bipartite(sigma, dA, dB)
    return sigma.reshape(dA, dB, dA, dB).transpose(0, 2, 1, 3).reshape(dA * dA, dB * dB)


def unrealign(M, dA, dB):
    M = np.asarray(M)
    if M.shape != (dA * dA, dB * dB):
        raise DimensionError(f"expected shape {(dA * dA, dB * dB)}, got {M.shape}")
    return M.reshape(dA, dA, dB, dB).transpose(0, 2, 1, 3).reshape(dA * dB, dA * dB)


def apply_choi(X, rho):
    """``E(rho) = Tr_2[X (I (x) rho^T)]`` for ``X = sum_ij E(|i><j|) (x) |i><j|``."""
    rho = _as_square(rho, "state")
    d = rho.shape[0]
    X = np.asarray(X)
    if X.shape != (d * d, d * d):
        raise DimensionError(f"process matrix shape {X.shape} does not match state dimension {d}")
    # sum_ij X[(a,i),(b,j)] rho[i,j]
    return np.einsum("aibj,ij->ab", X.reshape(d, d, d, d), rho)


@functools.lru_cache(maxsize=None)
def _permutation_R(dA):
    n = dA * dA
    basis = np.eye(n)
    R = np.zeros((n * n, n * n))
    for col in range(n * n):
        e = np.zeros(n * n)
        e[col] = 1.0
        Xe = unvec(e)
        S = np.column_stack([vec(apply_choi(Xe, unvec(basis[:, m]))) for m in range(n)])
        R[:, col] = vec(S).real
    if not (np.all(R.sum(axis=0) == 1) and np.all(R.sum(axis=1) == 1) and np.all((R == 0) | (R == 1))):
        raise AssertionError("traced map is not a permutation")  # pragma: no cover
    R.setflags(write=False)
    return R


def build_permutation_R(dA):
    """
    Permutation sending ``vec(X)`` to ``vec(S)``, where ``S`` is the column-stacking
    superoperator of the channel with process matrix ``X``.

    Combined with a basis matrix ``V`` (columns ``vec(A_j)``) this gives
    ``(V^T (x) I) R vec(X) = vec(Y)`` with ``Y = [vec(E(A_1)), ...]``. The matrix is
    obtained by pushing every elementary ``X`` through :func:`apply_choi`.
    """
    if int(dA) < 2:
        raise DimensionError(f"dA must be >= 2, got {dA}")
    return _permutation_R(int(dA)).copy()


def frobenius(M):
    return float(np.linalg.norm(M))


def matrix_to_json(M):
    """Serialize a 2-d array as ``{rows, cols, re, im}`` with row-major flat arrays."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return {
        "rows": int(M.shape[0]),
        "cols": int(M.shape[1]),
        "re": [float(x) for x in M.real.ravel()],
        "im": [float(x) for x in M.imag.ravel()],
    }


def matrix_from_json(obj):
    try:
        rows, cols = int(obj["rows"]), int(obj["cols"])
        re = np.asarray(obj["re"], dtype=float)
        im = np.asarray(obj.get("im", np.zeros(re.size)), dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed matrix object: {exc}") from exc
    if rows < 1 or cols < 1 or re.size != rows * cols or im.size != rows * cols:
        raise DimensionError(f"matrix entry count does not match {rows}x{cols}")
    M = (re + 1j * im).reshape(rows, cols)
    if not np.all(np.isfinite(M)):
        raise ValidationError("matrix contains non-finite entries")
    return M

"""
Process reconstruction from ancilla-assisted measurement data.

Pipeline: linear-regression state tomography of the joint output state, recovery
of ``E(A_j)`` for every Schmidt operator ``A_j``, linear inversion to an
unconstrained estimate ``G``, then the two-stage projection onto process
matrices (PSD projection followed by trace-map normalization).
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import qlinalg as ql
from .channel import ProcessMatrix
from .errors import CompletenessError, DegenerateEstimateError, DegenerateInputError, ValidationError
from .statesim import SCHMIDT_TOL

TP = "TP"
NON_TP = "nonTP"
EIG_FLOOR = 1e-12
REL_ZERO = 1e-12


def _normalize_mode(mode):
    m = str(mode).replace("-", "").replace("_", "").lower()
    if m == "tp":
        return TP
    if m == "nontp":
        return NON_TP
    raise ValidationError(f"unknown mode {mode!r}; expected 'tp' or 'nontp'")


@functools.lru_cache(maxsize=8)
def gell_mann_basis(d):
    """
    Orthonormal Hermitian operator basis of size ``d**2``: ``I/sqrt(d)`` followed by
    the symmetric, antisymmetric and diagonal generalized Gell-Mann matrices,
    each scaled to unit Hilbert-Schmidt norm.
    """
    basis = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            S = np.zeros((d, d), dtype=complex)
            S[j, k] = S[k, j] = 1 / np.sqrt(2)
            basis.append(S)
            A = np.zeros((d, d), dtype=complex)
            A[j, k], A[k, j] = -1j / np.sqrt(2), 1j / np.sqrt(2)
            basis.append(A)
    for l in range(1, d):
        D = np.zeros((d, d), dtype=complex)
        D[np.arange(l), np.arange(l)] = 1
        D[l, l] = -l
        basis.append(D / np.sqrt(l * (l + 1)))
    out = np.array(basis)
    out.setflags(write=False)
    return out


def measurement_parameterization_C(suite):
    """Real ``M x d**2`` matrix with ``C[m, k] = Tr(P_m Gamma_k)``."""
    G = gell_mann_basis(suite.dim)
    return np.einsum("mij,kji->mk", suite.operators, G).real


class _LreSolver:
    def __init__(self, suite):
        C = measurement_parameterization_C(suite)
        d2 = suite.dim**2
        rank = np.linalg.matrix_rank(C)
        if rank < d2:
            raise CompletenessError(f"measurement suite is not informationally complete (rank {rank} < {d2})")
        self.C = C
        self.A = C[:, 1:]
        self.lu = sla.lu_factor(self.A.T @ self.A)
        self.basis = gell_mann_basis(suite.dim)
        self.dim = suite.dim


@functools.lru_cache(maxsize=32)
def _lre_solver(suite):
    return _LreSolver(suite)


def lre_state_tomography(record, suite=None):
    """
    Least-squares estimate of the measured state, not projected onto PSD matrices.

    The identity coordinate is held at ``t/sqrt(d)`` where ``t`` is the detected
    fraction averaged over basis sets (``t == 1`` whenever nothing is lost); the
    remaining ``d**2 - 1`` coordinates solve the normal equations.
    """
    suite = record.suite if suite is None else suite
    solver = _lre_solver(suite)
    freqs = record.frequencies()
    p = np.concatenate(freqs)
    t = float(np.mean([f.sum() for f in freqs]))
    theta0 = t / np.sqrt(solver.dim)
    b = p - solver.C[:, 0] * theta0
    theta = np.concatenate([[theta0], sla.lu_solve(solver.lu, solver.A.T @ b)])
    return ql.hermitian_part(np.einsum("k,kij->ij", theta, solver.basis))


def reconstruct_Y(sigma_out_hat, schmidt, tol=SCHMIDT_TOL):
    """
    ``E(A_j) = Tr_B[(I (x) B_j^dagger) sigma_out] / s_j`` for every Schmidt term.

    Returns the matrix with columns ``vec(E(A_j))`` and the list of ``E(A_j)``.
    """
    dA, dB = schmidt.dA, schmidt.dB
    s = np.asarray(schmidt.s)
    if s.size < dA * dA or np.min(s[: dA * dA]) <= tol:
        raise DegenerateInputError(
            f"input state lacks full Schmidt number {dA * dA} (min coefficient {np.min(s):.3e} <= {tol:g})"
        )
    I_A = np.eye(dA)
    EAj = [
        ql.partial_trace_second(np.kron(I_A, ql.dagger(B)) @ sigma_out_hat, dA, dB) / sj
        for sj, B in zip(s[: dA * dA], schmidt.B_ops)
    ]
    return np.column_stack([ql.vec(E) for E in EAj]), EAj


def _require_unitary(V, tol=1e-10):
    V = np.asarray(V)
    err = np.linalg.norm(ql.dagger(V) @ V - np.eye(V.shape[1]))
    if V.shape[0] != V.shape[1] or err > tol:
        raise ValidationError(f"basis matrix V is not unitary (||V^dagger V - I|| = {err:.3e})")
    return V


def parameterize_process(X, V, R):
    """Forward map ``vec(Y) = (V^T (x) I) R vec(X)``."""
    V = np.asarray(V)
    return np.kron(V.T, np.eye(V.shape[0])) @ (R @ ql.vec(X))


def linear_inversion_G(Yhat, V, R):
    """``G = unvec(R^T (V^* (x) I) vec(Y))``; an isometry in Frobenius norm."""
    V = _require_unitary(V)
    return ql.unvec(R.T @ (np.kron(V.conj(), np.eye(V.shape[0])) @ ql.vec(Yhat)))


@dataclass(frozen=True, eq=False)
class LinearInversionRecord:
    V: np.ndarray
    Yhat: np.ndarray
    R: np.ndarray
    Ghat: np.ndarray


@dataclass(eq=False)
class TssDiagnostics:
    mode: str
    eigs_k: np.ndarray
    clamped_z: np.ndarray
    ehat: np.ndarray
    ehat_eigs: np.ndarray
    ehat_basis: np.ndarray
    c: int
    bar_e: np.ndarray
    tilde_e: np.ndarray
    residuals: dict = field(default_factory=dict)
    degenerate: bool = False
    inversion: LinearInversionRecord | None = None

    def to_json(self):
        return {
            "eigsK": [float(x) for x in self.eigs_k],
            "clampedZ": [float(x) for x in self.clamped_z],
            "ehat": [float(x) for x in self.ehat_eigs],
            "c": int(self.c),
            "barE": [float(x) for x in self.bar_e],
            "tildeE": [float(x) for x in self.tilde_e],
            "residuals": {k: float(v) for k, v in self.residuals.items()},
            "degenerate": bool(self.degenerate),
        }


def _stage_one(Ghat, dA):
    D, rec = ql.psd_projection(ql.hermitian_part(Ghat))
    E = ql.hermitian_part(ql.partial_trace_first(D, dA, dA))
    dec = ql.eigh(E)
    return D, rec, E, dec


def _sandwich(D, M, dA):
    T = np.kron(np.eye(dA), M)
    return ql.hermitian_part(T @ D @ ql.dagger(T))


def _residuals(X, dA):
    E = ql.partial_trace_first(X, dA, dA)
    return {
        "min_eig_X": float(np.linalg.eigvalsh(X)[0]),
        "trace_map_dev": float(np.linalg.norm(E - np.eye(dA))),
        "trace_map_max_eig": float(np.linalg.eigvalsh(ql.hermitian_part(E))[-1]),
    }


def tss_project_tp(Ghat, dA):
    """
    PSD projection followed by ``X = (I (x) E^{-1/2}) D (I (x) E^{-1/2})^dagger``
    with ``E = Tr_A(D)``, so that ``Tr_A(X) = I``.

    Raises
    ------
    DegenerateEstimateError
        If ``E`` has an eigenvalue at or below 1e-12.
    """
    D, rec, E, dec = _stage_one(Ghat, dA)
    e = dec.eigenvalues
    if e[-1] <= EIG_FLOOR:
        raise DegenerateEstimateError(
            f"Tr_A of the projected estimate is singular (min eigenvalue {e[-1]:.3e}); "
            "use the non-TP path or increase N"
        )
    U = dec.eigenvectors
    Xhat = _sandwich(D, (U / np.sqrt(e)) @ ql.dagger(U), dA)
    diag = TssDiagnostics(TP, rec.eigenvalues, rec.clamped, E, e, U, dA, e.copy(), e.copy(), _residuals(Xhat, dA))
    return ProcessMatrix(Xhat, dA), diag


def tss_project_nontp(Ghat, dA, N):
    """
    PSD projection followed by rescaling of ``Tr_A`` onto ``0 <= Tr_A(X) <= I``.

    Zero eigenvalues of ``E = Tr_A(D)`` (relative 1e-12) are replaced by
    ``e_c / N``; eigenvalues above one are capped at one.
    """
    if N is None or not np.isfinite(N):
        N = np.inf
    elif N < 1:
        raise ValidationError(f"N must be >= 1, got {N}")
    D, rec, E, dec = _stage_one(Ghat, dA)
    e, U = dec.eigenvalues, dec.eigenvectors
    if e[0] <= EIG_FLOOR:
        zero = np.zeros((dA * dA, dA * dA), dtype=complex)
        diag = TssDiagnostics(NON_TP, rec.eigenvalues, rec.clamped, E, e, U, 0, np.zeros(dA), np.zeros(dA),
                              _residuals(zero, dA), degenerate=True)
        return ProcessMatrix(zero, dA), diag
    c = int(np.count_nonzero(e > REL_ZERO * e[0]))
    if c < dA and not np.isfinite(N):
        raise DegenerateEstimateError("rank-deficient trace map needs a finite copy number N")
    bar = e.copy()
    bar[c:] = e[c - 1] / N
    tilde = np.minimum(bar, 1.0)
    Xhat = _sandwich(D, (U * np.sqrt(tilde / bar)) @ ql.dagger(U), dA)
    diag = TssDiagnostics(NON_TP, rec.eigenvalues, rec.clamped, E, e, U, c, bar, tilde, _residuals(Xhat, dA))
    return ProcessMatrix(Xhat, dA), diag


def aapt_reconstruct(record, schmidt, suite=None, mode=TP):
    """
    Full reconstruction from a measurement record.

    Parameters
    ----------
    record : MeasurementRecord
        Counts (or exact probabilities) on the joint output state.
    schmidt : SchmidtDecomposition
        Decomposition of the input state; its ``A_j`` define the basis matrix ``V``.
    mode : {'TP', 'nonTP'}

    Returns
    -------
    ProcessMatrix, TssDiagnostics
    """
    mode = _normalize_mode(mode)
    suite = record.suite if suite is None else suite
    dA = schmidt.dA
    sigma_hat = lre_state_tomography(record, suite)
    Yhat, _ = reconstruct_Y(sigma_hat, schmidt)
    R = ql.build_permutation_R(dA)
    V = schmidt.V
    Ghat = linear_inversion_G(Yhat, V, R)
    if mode == TP:
        X, diag = tss_project_tp(Ghat, dA)
    else:
        X, diag = tss_project_nontp(Ghat, dA, record.N)
    diag.inversion = LinearInversionRecord(V, Yhat, R, Ghat)
    return X, diag


def report_to_json(process, diagnostics, mse=None):
    out = {
        "Xhat": ql.matrix_to_json(process.X),
        "mode": diagnostics.mode,
        "diagnostics": diagnostics.to_json(),
    }
    if mse is not None:
        out["mse"] = float(mse)
    return out

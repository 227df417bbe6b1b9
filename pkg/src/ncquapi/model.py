"""System and bath specifications, coupling eigenbases and basis overlaps.

Units throughout: hbar = k_B = 1, energies in units of a reference splitting
Delta, times in 1/Delta.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
COMMUTATOR_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = {"sx": SIGMA_X, "sy": SIGMA_Y, "sz": SIGMA_Z}


class ValidationError(ValueError):
    """Raised for malformed physical input (non-Hermitian operators, bad states)."""


class DephasingConditionError(ValidationError):
    """Bath-1 coupling operator does not commute with the system Hamiltonian."""

    def __init__(self, norm: float):
        self.norm = float(norm)
        super().__init__(
            f"[sigma1, H_S] must vanish for the two-bath scheme; max-norm is {self.norm:.3e}"
        )


def _as_matrix(a, name: str) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be a square matrix, got shape {m.shape}")
    return m


def _check_hermitian(m: np.ndarray, name: str, tol: float = HERMITIAN_TOL) -> None:
    dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
    if dev > tol:
        raise ValidationError(f"{name} is not Hermitian (max deviation {dev:.3e})")


@dataclass(frozen=True)
class Ohmic:
    """Ohmic spectral density G(w) = (gamma/pi) w exp(-w/omega_c)."""

    gamma: float
    omega_c: float

    def __post_init__(self):
        if self.gamma < 0:
            raise ValidationError("gamma must be >= 0")
        if self.omega_c <= 0:
            raise ValidationError("omega_c must be > 0")

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return self.gamma / np.pi * w * np.exp(-w / self.omega_c)

    def over_omega(self, w):
        """G(w)/w, finite at w = 0."""
        w = np.asarray(w, dtype=float)
        return self.gamma / np.pi * np.exp(-w / self.omega_c)

    @property
    def scale(self) -> float:
        return self.omega_c

    @property
    def is_zero(self) -> bool:
        return self.gamma == 0.0


@dataclass(frozen=True)
class Tabulated:
    """Spectral density from sorted (w, G) samples.

    Linear interpolation between samples, with G(0) = 0 prepended, and zero
    beyond the last sample.
    """

    omega: tuple
    values: tuple

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        g = np.asarray(self.values, dtype=float)
        if w.ndim != 1 or w.shape != g.shape or w.size < 2:
            raise ValidationError("tabulated density needs matching 1-d arrays of >= 2 samples")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValidationError("tabulated frequencies must be positive and strictly increasing")
        if np.any(g < 0):
            raise ValidationError("tabulated G(w) must be non-negative")
        object.__setattr__(self, "omega", tuple(w))
        object.__setattr__(self, "values", tuple(g))

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        xs = np.concatenate([[0.0], self.omega])
        ys = np.concatenate([[0.0], self.values])
        return np.interp(w, xs, ys, left=0.0, right=0.0)

    def over_omega(self, w):
        w = np.asarray(w, dtype=float)
        # slope of the first segment is the w -> 0 limit
        small = self.values[0] / self.omega[0]
        safe = np.where(w > 0, w, 1.0)
        return np.where(w > 0, self(w) / safe, small)

    @property
    def scale(self) -> float:
        # last sample bounds the support
        return self.omega[-1] / 40.0

    @property
    def is_zero(self) -> bool:
        return not any(self.values)


@dataclass(frozen=True)
class DiscreteModes:
    """A finite set of oscillators, G(w) = sum_k c_k delta(w - w_k).

    Influence coefficients are closed-form sums over the modes, which makes
    this density useful for comparison with explicit oscillator simulations.
    """

    frequencies: tuple
    weights: tuple

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.frequencies, dtype=float))
        c = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.ndim != 1 or w.shape != c.shape or w.size == 0:
            raise ValidationError("discrete modes need matching non-empty 1-d frequencies and weights")
        if np.any(w <= 0) or np.any(c < 0):
            raise ValidationError("mode frequencies must be > 0 and weights >= 0")
        object.__setattr__(self, "frequencies", tuple(w))
        object.__setattr__(self, "weights", tuple(c))

    @property
    def scale(self) -> float:
        return max(self.frequencies)

    @property
    def is_zero(self) -> bool:
        return not any(self.weights)


SpectralDensity = Union[Ohmic, Tabulated, DiscreteModes]


@dataclass(frozen=True)
class BathSpec:
    spectral: SpectralDensity
    slot: int  # 1 = pure-dephasing bath (commutes with H_S), 2 = relaxing bath

    def __post_init__(self):
        if self.slot not in (1, 2):
            raise ValidationError("bath slot must be 1 or 2")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """System Hamiltonian, two coupling operators and the initial state."""

    H_S: np.ndarray
    sigma1: np.ndarray
    sigma2: np.ndarray
    rho0: np.ndarray

    def __post_init__(self):
        H = _as_matrix(self.H_S, "H_S")
        s1 = _as_matrix(self.sigma1, "sigma1")
        s2 = _as_matrix(self.sigma2, "sigma2")
        r = _as_matrix(self.rho0, "rho0")
        n = H.shape[0]
        for m, name in ((s1, "sigma1"), (s2, "sigma2"), (r, "rho0")):
            if m.shape != (n, n):
                raise ValidationError(f"{name} has shape {m.shape}, expected {(n, n)}")
        _check_hermitian(H, "H_S")
        _check_hermitian(s1, "sigma1")
        _check_hermitian(s2, "sigma2")
        _check_hermitian(r, "rho0")
        tr = np.trace(r)
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"rho0 must have unit trace, got {tr}")
        lo = np.linalg.eigvalsh(0.5 * (r + r.conj().T)).min()
        if lo < -PSD_TOL:
            raise ValidationError(f"rho0 is not positive semidefinite (min eigenvalue {lo:.3e})")
        for attr, m in (("H_S", H), ("sigma1", s1), ("sigma2", s2), ("rho0", r)):
            m.setflags(write=False)
            object.__setattr__(self, attr, m)

    @property
    def n(self) -> int:
        return self.H_S.shape[0]


def tls(delta: float = 1.0, sigma1="sx", sigma2="sz", rho0=None) -> SystemSpec:
    """Two-level system H_S = (delta/2) sigma_x, starting in |sz=+1> by default."""
    s1 = PAULI[sigma1] if isinstance(sigma1, str) else sigma1
    s2 = PAULI[sigma2] if isinstance(sigma2, str) else sigma2
    if rho0 is None:
        rho0 = np.array([[1, 0], [0, 0]], dtype=complex)
    return SystemSpec(0.5 * delta * SIGMA_X, s1, s2, rho0)


@dataclass(frozen=True, eq=False)
class CouplingBasis:
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def _fix_phase(v: np.ndarray) -> np.ndarray:
    mags = np.abs(v)
    # first component whose magnitude is maximal (ties resolved to lowest index)
    k = int(np.flatnonzero(mags >= mags.max() - 1e-12)[0])
    return v * (abs(v[k]) / v[k])


def _canonical_subspace(V: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of span(V).

    Greedy pivoting: repeatedly take the unit vector e_i with the largest
    residual projection onto the subspace (lowest i on ties) and
    Gram-Schmidt it against the vectors already chosen.
    """
    n, m = V.shape
    P = V @ V.conj().T
    chosen: list[np.ndarray] = []
    for _ in range(m):
        R = P.copy()
        for q in chosen:
            R -= np.outer(q, q.conj() @ P)
        norms = np.linalg.norm(R, axis=0)
        i = int(np.flatnonzero(norms >= norms.max() - 1e-10)[0])
        q = R[:, i] / norms[i]
        chosen.append(q)
    return np.stack(chosen, axis=1)


def _clusters(w: np.ndarray):
    scale = max(1.0, float(np.max(np.abs(w)))) if w.size else 1.0
    i = 0
    while i < len(w):
        j = i + 1
        while j < len(w) and abs(w[j] - w[i]) <= 1e-10 * scale:
            j += 1
        yield i, j
        i = j


def eigenbasis(op, refine=None) -> CouplingBasis:
    """Eigen-decomposition with eigenvalues sorted descending.

    Degenerate clusters get a canonical basis (see ``_canonical_subspace``) and
    every vector is phased so that its first largest-magnitude entry is real
    positive, which makes the result reproducible bit for bit.

    If ``refine`` (a Hermitian operator commuting with ``op``) is given,
    degenerate clusters are instead resolved by diagonalizing ``refine``
    inside them, so the returned basis diagonalizes both operators.
    """
    m = _as_matrix(op, "operator")
    _check_hermitian(m, "operator")
    m = 0.5 * (m + m.conj().T)
    w, V = np.linalg.eigh(m)
    order = np.argsort(-w, kind="stable")
    w, V = w[order], V[:, order]
    vecs = np.empty_like(V)
    for i, j in _clusters(w):
        block = V[:, i:j]
        if j - i > 1:
            if refine is not None:
                R = _as_matrix(refine, "refine")
                sub = block.conj().T @ R @ block
                rw, rv = np.linalg.eigh(0.5 * (sub + sub.conj().T))
                ro = np.argsort(-rw, kind="stable")
                rw, block = rw[ro], block @ rv[:, ro]
                parts = [
                    block[:, a:b] if b - a == 1 else _canonical_subspace(block[:, a:b])
                    for a, b in _clusters(rw)
                ]
                block = np.concatenate(parts, axis=1)
            else:
                block = _canonical_subspace(block)
        for k in range(j - i):
            vecs[:, i + k] = _fix_phase(block[:, k])
        # clustered eigenvalues share one representative value
        w[i:j] = w[i:j].mean()
    w.setflags(write=False)
    vecs.setflags(write=False)
    return CouplingBasis(w, vecs)


def overlap_matrix(a: CouplingBasis, b: CouplingBasis) -> np.ndarray:
    """Matrix of inner products <a_i|b_j>."""
    if a.n != b.n:
        raise ValidationError(f"dimension mismatch: {a.n} vs {b.n}")
    return a.vectors.conj().T @ b.vectors


def commutator_norm(a, b) -> float:
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return float(np.max(np.abs(a @ b - b @ a)))


def validate_dephasing_condition(sys: SystemSpec) -> None:
    """Raise DephasingConditionError unless [sigma1, H_S] = 0."""
    norm = commutator_norm(sys.sigma1, sys.H_S)
    if norm > COMMUTATOR_TOL:
        raise DephasingConditionError(norm)


def system_phase_step(sys: SystemSpec, basis1: CouplingBasis, dt: float) -> np.ndarray:
    """Diagonal elements <s1_k| exp(-i H_S dt) |s1_k> in the bath-1 eigenbasis."""
    validate_dephasing_condition(sys)
    U = basis1.vectors
    # H_S is diagonal in this basis, so its energies are the diagonal elements
    energies = np.real(np.einsum("ik,ij,jk->k", U.conj(), sys.H_S, U))
    return np.exp(-1j * energies * dt)

"""Memory-truncated path-integral propagation for two non-commuting baths.

Every time slice j carries a composite index over the forward/backward
eigenvalue labels of both coupling operators,

    k = ((s1p * n + s1m) * n + s2p) * n + s2m,

so a slice axis has n**4 entries.  The reduced density tensor ``A_j`` spans
the slices j .. j + dj_max - 1.  One step multiplies in every factor whose
*earlier* slice is j (its own diagonal factors, its pair factors with the
later slices inside the memory window and the system kernel K towards slice
j + 1) and sums slice j out while the new slice j + dj_max is attached.  The
full propagator over dj_max + 1 slices is never formed: pair factors are
broadcast in place in a few grouped passes and the new slice enters through
one matrix product.

Bath 1 (pure dephasing) sees full-width slices, bath 2 sees the symmetric
half-step pattern; see :mod:`ncquapi.kernels` for the coefficients.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..kernels import (
    EtaTable,
    QuadratureConfig,
    ThermalBath,
    eta_table_full,
    eta_table_uniform,
    pair_factor_array,
    self_factor_array,
)
from ..model import (
    CouplingBasis,
    SystemSpec,
    ValidationError,
    eigenbasis,
    overlap_matrix,
    system_phase_step,
    validate_dephasing_condition,
)
from .trajectory import Trajectory

# largest broadcast factor built per in-place pass, in complex entries
_GROUP_LIMIT = 1 << 16


@dataclass(frozen=True, eq=False)
class KTable:
    """One-step kernel K[s1p, s1m, s2p, s2m, s2p', s2m'] (primed = slice j+1)."""

    data: np.ndarray
    basis1: CouplingBasis
    basis2: CouplingBasis
    dt: float

    @property
    def n(self) -> int:
        return self.basis1.n

    def as_matrix(self) -> np.ndarray:
        """(n**4, n**2) view: composite slice index by (s2p', s2m')."""
        n = self.n
        return self.data.reshape(n**4, n**2)


def coupling_bases(sys: SystemSpec) -> tuple[CouplingBasis, CouplingBasis]:
    # degenerate sigma1 clusters are resolved by H_S so that K stays diagonal
    return eigenbasis(sys.sigma1, refine=sys.H_S), eigenbasis(sys.sigma2)


def build_k_table(sys: SystemSpec, dt: float) -> KTable:
    validate_dephasing_condition(sys)
    b1, b2 = coupling_bases(sys)
    phase = system_phase_step(sys, b1, dt)
    O12 = overlap_matrix(b1, b2)  # <s1|s2>
    # forward: <s2'|s1> <s1|e^{-iH dt}|s1> <s1|s2>
    fwd = O12.conj().T[:, :, None] * phase[None, :, None] * O12[None, :, :]  # [s2', s1, s2]
    bwd = fwd.conj()
    # K[a, b, c, e, c', e'] = fwd[c', a, c] * bwd[e', b, e]
    data = np.einsum("pac,qbe->abcepq", fwd, bwd)
    data.setflags(write=False)
    return KTable(data, b1, b2, float(dt))


@dataclass(eq=False)
class PathTensor:
    """Reduced density tensor over consecutive slices ``start .. start+len-1``."""

    data: np.ndarray
    start: int
    n: int

    @property
    def length(self) -> int:
        return self.data.ndim


def init_tensor(sys: SystemSpec, dj_max: int, basis2: Optional[CouplingBasis] = None) -> PathTensor:
    """A_0: rho_S(0) in the sigma2 eigenbasis on slice 0, ones on the others."""
    if dj_max < 1:
        raise ValidationError("dj_max must be >= 1")
    n = sys.n
    b2 = basis2 if basis2 is not None else eigenbasis(sys.sigma2)
    r2 = b2.vectors.conj().T @ sys.rho0 @ b2.vectors
    v = np.broadcast_to(r2[None, None, :, :], (n, n, n, n)).reshape(n**4)
    data = np.empty((n**4,) * dj_max, dtype=complex)
    data[...] = v.reshape((n**4,) + (1,) * (dj_max - 1))
    return PathTensor(data, 0, n)


class _Factors:
    """Composite-index factor matrices for one (K, eta1, eta2) setup."""

    def __init__(self, K: KTable, eta1: EtaTable, eta2: EtaTable):
        self.K = K
        self.eta1 = eta1
        self.eta2 = eta2
        n = K.n
        self.n = n
        self.d = n**4
        self.s1 = K.basis1.eigenvalues
        self.s2 = K.basis2.eigenvalues
        ones2 = np.ones((n, n))
        # K towards a full later slice: broadcast over the later sigma1 labels
        km = K.data.reshape(self.d, 1, 1, n, n)
        self.k_slice = np.broadcast_to(km, (self.d, n, n, n, n)).reshape(self.d, self.d)
        self.k_final = K.as_matrix()
        self._ones2 = ones2

    def self_vec(self, eta1: complex, eta2: complex) -> np.ndarray:
        f1 = self_factor_array(eta1, self.s1)
        f2 = self_factor_array(eta2, self.s2)
        return (f1[:, :, None, None] * f2[None, None, :, :]).reshape(self.d)

    def pair(self, eta1: complex, eta2: complex) -> np.ndarray:
        """(earlier, later) matrix of bath-1 x bath-2 pair factors."""
        d = self.d
        p1 = pair_factor_array(eta1, self.s1)  # [l1p, l1m, e1p, e1m]
        p2 = pair_factor_array(eta2, self.s2)
        full = np.einsum("abce,fghi->cehiabfg", p1, p2)
        return full.reshape(d, d)

    def terminal(self, eta2: complex) -> np.ndarray:
        """(earlier composite, final (s2p, s2m)) bath-2 pair factors."""
        n = self.n
        p2 = pair_factor_array(eta2, self.s2)  # [fp, fm, e2p, e2m]
        m = np.broadcast_to(p2.transpose(2, 3, 0, 1)[None, None], (n, n, n, n, n, n))
        return m.reshape(self.d, n * n)

    def final_self(self, eta2: complex) -> np.ndarray:
        return self_factor_array(eta2, self.s2).reshape(self.n**2)


def _eta2_pair(tab: EtaTable, later: int, earlier: int, N: Optional[int]) -> complex:
    """Bath-2 coefficient; ``N`` is the terminal slice index or None if ``later`` is interior."""
    if N is not None and later == N:
        if earlier == 0:
            return tab.corner
        if earlier == N:
            return tab.end_diagonal
        return tab.last_row[N - earlier]
    if earlier == later:
        return tab.end_diagonal if later == 0 else tab.interior[0]
    if earlier == 0:
        return tab.first_column[later]
    return tab.interior[later - earlier]


def _multiply_grouped(T: np.ndarray, axis0_vec: Optional[np.ndarray], mats: dict, inplace: bool) -> np.ndarray:
    """T *= prod_k mats[k] broadcast over axes (0, k); fewer, larger passes."""
    nd = T.ndim
    d0 = T.shape[0]
    groups: list[list[int]] = []
    size = d0
    for ax in sorted(mats):
        dim = T.shape[ax]
        if groups and size * dim <= _GROUP_LIMIT:
            groups[-1].append(ax)
            size *= dim
        else:
            groups.append([ax])
            size = d0 * dim
    if not groups:
        groups = [[]]
    for g_i, group in enumerate(groups):
        F = np.ones((d0,) + (1,) * (nd - 1), dtype=complex)
        if g_i == 0 and axis0_vec is not None:
            F = F * axis0_vec.reshape(F.shape)
        for ax in group:
            shape = [1] * nd
            shape[0] = d0
            shape[ax] = T.shape[ax]
            F = F * mats[ax].reshape(shape)
        if not inplace:
            T = T * F
            inplace = True
        else:
            T *= F
    return T


def _attach(T: np.ndarray, G: np.ndarray) -> np.ndarray:
    """Sum axis 0 of T against G[axis0, new] and append the new axis last."""
    d0 = T.shape[0]
    rest = T.shape[1:]
    out = T.reshape(d0, -1).T @ G
    return out.reshape(rest + (G.shape[1],))


def propagate_step(A: PathTensor, fac: _Factors) -> PathTensor:
    """A_j -> A_{j+1}.  Consumes ``A`` (its buffer is scaled in place)."""
    j = A.start
    L = A.length
    e1, e2 = fac.eta1, fac.eta2
    mats = {}
    for k in range(1, L):
        m = fac.pair(e1.interior[k], _eta2_pair(e2, j + k, j, None))
        if k == 1:
            m = m * fac.k_slice
        mats[k] = m
    vec = fac.self_vec(e1.interior[0], _eta2_pair(e2, j, j, None))
    T = _multiply_grouped(A.data, vec, mats, inplace=True)
    G = fac.pair(e1.interior[L], _eta2_pair(e2, j + L, j, None))
    if L == 1:
        G = G * fac.k_slice
    new = _attach(T, G)
    A.data = None  # consumed
    return PathTensor(new, j + 1, A.n)


def readout(A: PathTensor, fac: _Factors, eta2_terminal: EtaTable, N: int) -> np.ndarray:
    """Reduced density matrix (sigma2 eigenbasis) at t = N dt from A_{N-L}.

    ``eta2_terminal`` must be the half-step table for this N (it supplies
    the last-row, corner and end-diagonal entries).  ``A`` is left intact.
    """
    L = A.length
    j_star = A.start
    if j_star + L != N:
        raise AssertionError(f"tensor spans {j_star}..{j_star + L - 1}, cannot read out N={N}")
    e1, e2 = fac.eta1, fac.eta2
    T = A.data
    fresh = True
    for i in range(L):
        j = j_star + i
        nwin = L - i  # window axes still present, including axis 0
        has_final = i > 0
        mats = {}
        for k in range(1, nwin):
            m = fac.pair(e1.interior[k], _eta2_pair(e2, j + k, j, None))
            if k == 1:
                m = m * fac.k_slice
            mats[k] = m
        term = fac.terminal(_eta2_pair(eta2_terminal, N, j, N))
        if j == N - 1:
            term = term * fac.k_final
        vec = fac.self_vec(e1.interior[0], _eta2_pair(e2, j, j, None))
        if has_final:
            mats[T.ndim - 1] = term
        T = _multiply_grouped(T, vec, mats, inplace=not fresh)
        fresh = False
        if has_final:
            T = T.sum(axis=0)
        else:
            T = _attach(T, term)
    T = T * fac.final_self(eta2_terminal.end_diagonal)
    n = fac.n
    return T.reshape(n, n)


class TwoBathEngine:
    """Holds the kernel, coefficient tables and factor matrices for one run."""

    def __init__(self, sys: SystemSpec, bath1: ThermalBath, bath2: ThermalBath, dt: float,
                 dj_max: int, quad: QuadratureConfig = QuadratureConfig(), workers: int = 0):
        if dt <= 0:
            raise ValidationError("dt must be > 0")
        if dj_max < 1:
            raise ValidationError("dj_max must be >= 1")
        self.sys = sys
        self.bath1, self.bath2 = bath1, bath2
        self.dt, self.dj_max = float(dt), int(dj_max)
        self.quad, self.workers = quad, workers
        self.K = build_k_table(sys, dt)
        self.eta1 = eta_table_uniform(bath1, dt, dj_max + 1, quad, workers=workers)
        self.eta2 = eta_table_full(bath2, dt, dj_max + 1, quad, max_separation=dj_max, workers=workers)
        self.factors = _Factors(self.K, self.eta1, self.eta2)
        self._terminal: dict[int, EtaTable] = {}

    def terminal_table(self, N: int) -> EtaTable:
        if N > self.dj_max:
            # only the N-dependent corner differs, and it lies outside the memory window
            return self.eta2
        if N not in self._terminal:
            self._terminal[N] = eta_table_full(self.bath2, self.dt, N, self.quad,
                                               max_separation=self.dj_max, workers=self.workers)
        return self._terminal[N]

    def to_lab(self, rho2: np.ndarray) -> np.ndarray:
        U = self.K.basis2.vectors
        return U @ rho2 @ U.conj().T

    def short_time_direct(self, j: int) -> np.ndarray:
        """Full (untruncated) path sum for t = j dt, j <= dj_max, lab basis."""
        if not 1 <= j <= self.dj_max:
            raise ValidationError(f"short-time evaluation needs 1 <= j <= dj_max, got {j}")
        A = init_tensor(self.sys, j, self.K.basis2)
        return self.to_lab(readout(A, self.factors, self.terminal_table(j), j))

    def run(self, n_steps: int, stride: int = 1) -> Trajectory:
        if n_steps < 1:
            raise ValidationError("need at least one step")
        stride = max(1, int(stride))
        t0 = time.perf_counter()
        times, rhos = [0.0], [np.array(self.sys.rho0, dtype=complex)]

        def emit(N, rho):
            times.append(N * self.dt)
            rhos.append(rho)

        D = self.dj_max
        for N in range(1, min(D - 1, n_steps) + 1):
            if N % stride == 0 or N == n_steps:
                emit(N, self.short_time_direct(N))
        if n_steps >= D:
            A = init_tensor(self.sys, D, self.K.basis2)
            # N = D from A_0 is the direct short-time sum at t = D dt
            if D % stride == 0 or D == n_steps:
                emit(D, self.to_lab(readout(A, self.factors, self.terminal_table(D), D)))
            for N in range(D + 1, n_steps + 1):
                A = propagate_step(A, self.factors)
                if N % stride == 0 or N == n_steps:
                    emit(N, self.to_lab(readout(A, self.factors, self.terminal_table(N), N)))
        traj = Trajectory(np.array(times), np.array(rhos), self.metadata())
        traj.metadata["wall_time"] = time.perf_counter() - t0
        traj.metadata["max_trace_dev"] = float(traj.trace_dev.max())
        return traj

    def metadata(self) -> dict:
        return {
            "engine": "two-bath",
            "dt": self.dt,
            "dj_max": self.dj_max,
            "tau_mem": self.dt * self.dj_max,
            "peak_tensor_bytes": peak_tensor_bytes(self.sys.n, self.dj_max),
        }


def peak_tensor_bytes(n: int, dj_max: int) -> int:
    """Upper estimate of simultaneously live tensor storage for one step + readout."""
    d = n**4
    return 16 * (3 * d**dj_max + d ** (dj_max - 1) * n**2)


def evolve_two_bath(sys: SystemSpec, bath1: ThermalBath, bath2: ThermalBath, dt: float,
                    dj_max: int, n_steps: int, stride: int = 1,
                    quad: QuadratureConfig = QuadratureConfig(), workers: int = 0) -> Trajectory:
    """Reduced dynamics with bath 1 on sigma1 ([sigma1, H_S] = 0) and bath 2 on sigma2."""
    return TwoBathEngine(sys, bath1, bath2, dt, dj_max, quad, workers).run(n_steps, stride)

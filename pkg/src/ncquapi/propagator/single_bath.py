"""Standard single-bath QUAPI.

Slices live in the eigenbasis of one coupling operator, with composite
index (s+, s-) -> s+ * n + s- and the full system propagator between
neighbouring slices (the operator need not commute with H_S).  Unlike the
two-bath engine, the memory-window propagator is materialized as a dense
tensor over dj_max + 1 slices; it is small here (n**2 per slice) and the
independent construction makes the two engines a cross-check on each other.
"""
from __future__ import annotations

import time

import numpy as np
from scipy.linalg import expm

from ..kernels import QuadratureConfig, ThermalBath, eta_table_full
from ..model import SystemSpec, ValidationError, eigenbasis
from .trajectory import Trajectory


def o_pm_operator(gamma_z: float, gamma_x: float, sign: int = +1) -> np.ndarray:
    """alpha_z sz +/- alpha_x sx with alpha = sqrt(gamma / (gamma_z + gamma_x))."""
    tot = gamma_z + gamma_x
    if tot <= 0:
        raise ValidationError("o+/- operator needs gamma_z + gamma_x > 0")
    az, ax = np.sqrt(gamma_z / tot), np.sqrt(gamma_x / tot)
    return np.array([[az, sign * ax], [sign * ax, -az]], dtype=complex)


class SingleBathEngine:
    def __init__(self, H_S, op, rho0, bath: ThermalBath, dt: float, dj_max: int,
                 quad: QuadratureConfig = QuadratureConfig()):
        if dt <= 0:
            raise ValidationError("dt must be > 0")
        if dj_max < 1:
            raise ValidationError("dj_max must be >= 1")
        # validates Hermiticity and the initial state; sigma1 is unused here
        self.sys = SystemSpec(H_S, np.zeros_like(np.asarray(H_S)), op, rho0)
        self.bath, self.dt, self.dj_max, self.quad = bath, float(dt), int(dj_max), quad
        self.basis = eigenbasis(op)
        V = self.basis.vectors
        self.n = n = V.shape[0]
        self.D = n * n
        U = V.conj().T @ expm(-1j * np.asarray(H_S, dtype=complex) * dt) @ V  # <a|U|b>
        # kern[s, s'] for s = (a+, a-) at slice j and s' = (b+, b-) at slice j+1
        self.kern = np.einsum("ba,dc->acbd", U, U.conj()).reshape(self.D, self.D)
        sig = self.basis.eigenvalues
        sp = np.repeat(sig, n)  # s+ of composite index
        sm = np.tile(sig, n)  # s- of composite index
        self._sp, self._sm = sp, sm
        self.rho_basis = V.conj().T @ self.sys.rho0 @ V
        self.eta = eta_table_full(bath, dt, dj_max + 1, quad, max_separation=dj_max)
        self._terminal: dict = {}
        self._lam = {}
        self._steady = None

    # pair factor I(later, earlier) as a (later, earlier) matrix
    def _pair(self, eta: complex) -> np.ndarray:
        dl = (self._sp - self._sm)[:, None]
        return np.exp(-dl * (eta * self._sp[None, :] - np.conj(eta) * self._sm[None, :]))

    def _self(self, eta: complex) -> np.ndarray:
        return np.exp(-(self._sp - self._sm) * (eta * self._sp - np.conj(eta) * self._sm))

    def _table(self, N: int):
        if N > self.dj_max:
            return self.eta
        if N not in self._terminal:
            self._terminal[N] = eta_table_full(self.bath, self.dt, N, self.quad, max_separation=self.dj_max)
        return self._terminal[N]

    def _eta(self, later: int, earlier: int, N=None) -> complex:
        if N is not None and later == N:
            tab = self._table(N)
            if earlier == N:
                return tab.end_diagonal
            return tab.corner if earlier == 0 else tab.last_row[N - earlier]
        # interior pairs do not depend on the terminal index
        tab = self.eta
        if later == earlier:
            return tab.end_diagonal if later == 0 else tab.interior[0]
        return tab.first_column[later] if earlier == 0 else tab.interior[later - earlier]

    def propagator(self, j: int) -> np.ndarray:
        """Dense Lambda_j over slices j .. j + dj_max (axis 0 = slice j)."""
        key = min(j, 1)
        if key in self._lam:
            return self._lam[key]
        L = self.dj_max
        D = self.D
        lam = self._self(self._eta(j, j)).reshape((D,) + (1,) * L)
        lam = lam * self.kern.reshape((D, D) + (1,) * (L - 1))
        for k in range(1, L + 1):
            shape = [1] * (L + 1)
            shape[0], shape[k] = D, D
            lam = lam * self._pair(self._eta(j + k, j)).T.reshape(shape)
        self._lam[key] = lam
        return lam

    def _window(self, j0: int, L: int, N: int) -> np.ndarray:
        """Dense weight over slices j0 .. N-1 plus the final slice N."""
        D = self.D
        nd = L + 1
        W = np.ones((D,) * nd, dtype=complex)
        for i in range(L):
            j = j0 + i
            shape = [1] * nd
            shape[i] = D
            W = W * self._self(self._eta(j, j)).reshape(shape)
            for k in range(i + 1, nd):
                later = j0 + k
                s2 = [1] * nd
                s2[i], s2[k] = D, D
                W = W * self._pair(self._eta(later, j, N)).T.reshape(s2)
            s3 = [1] * nd
            s3[i], s3[i + 1] = D, D
            W = W * self.kern.reshape(s3)
        shape = [1] * nd
        shape[L] = D
        return W * self._self(self._eta(N, N, N)).reshape(shape)

    def _initial(self, L: int) -> np.ndarray:
        A = np.ones((self.D,) * L, dtype=complex)
        return A * self.rho_basis.reshape(self.D).reshape((self.D,) + (1,) * (L - 1))

    def _read(self, A: np.ndarray, j0: int, N: int) -> np.ndarray:
        L = A.ndim
        if j0 >= 1 and N > self.dj_max:
            # once slice 0 has retired every entry depends only on separations
            if self._steady is None:
                self._steady = self._window(j0, L, N)
            W = self._steady
        else:
            W = self._window(j0, L, N)
        r = np.tensordot(A, W, axes=(list(range(L)), list(range(L))))
        V = self.basis.vectors
        return V @ r.reshape(self.n, self.n) @ V.conj().T

    def run(self, n_steps: int, stride: int = 1) -> Trajectory:
        t0 = time.perf_counter()
        stride = max(1, int(stride))
        D = self.dj_max
        times, rhos = [0.0], [np.array(self.sys.rho0)]
        for N in range(1, min(D, n_steps) + 1):
            if N % stride == 0 or N == n_steps:
                times.append(N * self.dt)
                rhos.append(self._read(self._initial(N), 0, N))
        if n_steps > D:
            A = self._initial(D)
            for j in range(n_steps - D):
                lam = self.propagator(j)
                # sum over the retiring slice; the others pass through elementwise
                new = A[0][..., None] * lam[0]
                for a in range(1, self.D):
                    new += A[a][..., None] * lam[a]
                A = new
                N = j + 1 + D
                if N % stride == 0 or N == n_steps:
                    times.append(N * self.dt)
                    rhos.append(self._read(A, j + 1, N))
        traj = Trajectory(np.array(times), np.array(rhos), {
            "engine": "single-bath", "dt": self.dt, "dj_max": self.dj_max,
            "tau_mem": self.dt * self.dj_max,
        })
        traj.metadata["wall_time"] = time.perf_counter() - t0
        traj.metadata["max_trace_dev"] = float(traj.trace_dev.max())
        return traj


def evolve_single_bath(H_S, op, rho0, bath: ThermalBath, dt: float, dj_max: int, n_steps: int,
                       stride: int = 1, quad: QuadratureConfig = QuadratureConfig()) -> Trajectory:
    """Standard QUAPI for one bath coupled through ``op``."""
    return SingleBathEngine(H_S, op, rho0, bath, dt, dj_max, quad).run(n_steps, stride)

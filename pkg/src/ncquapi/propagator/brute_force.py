"""Exact discretized path sum, no memory truncation.  Exponential cost; oracle only."""
from __future__ import annotations

import itertools
import time

import numpy as np

from ..kernels import QuadratureConfig, ThermalBath, eta_table_full, eta_table_uniform
from ..model import SystemSpec, ValidationError, eigenbasis, validate_dephasing_condition
from .trajectory import Trajectory

PATH_CAP = 10**8


class ResourceCapExceeded(RuntimeError):
    pass


def _influence_log(eta: np.ndarray, sp: list, sm: list, memory=None) -> np.ndarray:
    """-sum_{j >= j'} (s+_j - s-_j)(eta_jj' s+_j' - eta*_jj' s-_j') over path arrays."""
    out = 0.0
    for j in range(len(sp)):
        d = sp[j] - sm[j]
        lo = 0 if memory is None else max(0, j - memory)
        for jp in range(lo, j + 1):
            e = eta[j, jp]
            out = out - d * (e * sp[jp] - np.conj(e) * sm[jp])
    return out


def brute_force_rho(sys: SystemSpec, bath1: ThermalBath, bath2: ThermalBath, dt: float, N: int,
                    quad: QuadratureConfig = QuadratureConfig(), memory=None) -> np.ndarray:
    """rho_S(N dt) in the computational basis from the full path sum.

    ``memory`` optionally drops every pair factor whose slices are more than
    that many steps apart (the truncation the propagation scheme applies).
    """
    validate_dephasing_condition(sys)
    n = sys.n
    if n ** (4 * N) > PATH_CAP:
        raise ResourceCapExceeded(f"n^(4N) = {n ** (4 * N)} exceeds the brute-force cap {PATH_CAP}")
    b1 = eigenbasis(sys.sigma1, refine=sys.H_S)
    b2 = eigenbasis(sys.sigma2)
    U1, U2 = b1.vectors, b2.vectors
    E1 = np.real(np.diag(U1.conj().T @ sys.H_S @ U1))
    # amp[s2', s1, s2] = <s2'|s1> e^{-i E(s1) dt} <s1|s2>
    amp = np.einsum("ka,kb->ab", U2.conj(), U1)[:, :, None] * np.exp(-1j * E1 * dt)[None, :, None] \
        * (U1.conj().T @ U2)[None, :, :]
    rho2 = U2.conj().T @ sys.rho0 @ U2
    eta1 = eta_table_uniform(bath1, dt, N, quad).as_matrix()
    eta2 = eta_table_full(bath2, dt, N, quad).as_matrix()
    v1, v2 = b1.eigenvalues, b2.eigenvalues

    # path variables: per slice j < N (s1p, s1m, s2p, s2m), plus (s2p, s2m) at slice N
    nvar = 4 * N + 2
    # leading variables go to an outer loop so each vectorized chunk has <= 2**20 paths
    chunk_vars = max(0, nvar - int(20 // np.log2(max(n, 2))))
    out = np.zeros((n, n), dtype=complex)
    inner = nvar - chunk_vars
    grid = np.indices((n,) * inner).reshape(inner, -1)
    for head in itertools.product(range(n), repeat=chunk_vars):
        idx = [np.full(grid.shape[1], h) for h in head] + [grid[i] for i in range(inner)]
        s1p = [idx[4 * j] for j in range(N)]
        s1m = [idx[4 * j + 1] for j in range(N)]
        s2p = [idx[4 * j + 2] for j in range(N)] + [idx[4 * N]]
        s2m = [idx[4 * j + 3] for j in range(N)] + [idx[4 * N + 1]]
        w = rho2[s2p[0], s2m[0]].astype(complex)
        for j in range(N):
            w = w * amp[s2p[j + 1], s1p[j], s2p[j]] * np.conj(amp[s2m[j + 1], s1m[j], s2m[j]])
        logi = _influence_log(eta1, [v1[a] for a in s1p], [v1[a] for a in s1m], memory)
        logi = logi + _influence_log(eta2, [v2[a] for a in s2p], [v2[a] for a in s2m], memory)
        w = w * np.exp(logi)
        flat = s2p[N] * n + s2m[N]
        out += np.bincount(flat, weights=w.real, minlength=n * n).reshape(n, n)
        out += 1j * np.bincount(flat, weights=w.imag, minlength=n * n).reshape(n, n)
    return U2 @ out @ U2.conj().T


def brute_force(sys: SystemSpec, bath1: ThermalBath, bath2: ThermalBath, dt: float, N: int,
                quad: QuadratureConfig = QuadratureConfig(), memory=None) -> Trajectory:
    """Trajectory t = 0 .. N dt where every point is its own full path sum."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    if sys.n ** (4 * N) > PATH_CAP:
        raise ResourceCapExceeded(f"n^(4N) = {sys.n ** (4 * N)} exceeds the brute-force cap {PATH_CAP}")
    t0 = time.perf_counter()
    rhos = [np.array(sys.rho0, dtype=complex)]
    rhos += [brute_force_rho(sys, bath1, bath2, dt, k, quad, memory) for k in range(1, N + 1)]
    traj = Trajectory(dt * np.arange(N + 1), np.array(rhos),
                      {"engine": "brute-force", "dt": float(dt), "dj_max": N if memory is None else memory,
                       "tau_mem": (N if memory is None else memory) * dt})
    traj.metadata["wall_time"] = time.perf_counter() - t0
    traj.metadata["max_trace_dev"] = float(traj.trace_dev.max())
    return traj

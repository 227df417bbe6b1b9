"""Discretized influence-functional coefficients.

Coefficient convention
----------------------
For a bath with spectral density G and two time slices of widths ``w_l``
(later) and ``w_e`` (earlier) whose centres are ``tau`` apart, the pair
coefficient is

    eta = 1/2 int_{-inf}^{inf} dw F(w) 4 sin(w w_l/2) sin(w w_e/2) exp(-i w tau)
        = int_0^inf dw G(w)/w^2 4 sin(w w_l/2) sin(w w_e/2)
                       [coth(b w/2) cos(w tau) - i sin(w tau)]

with F(w) = G(w) exp(b w/2) / (w^2 sinh(b w/2)) and G odd-extended.  This is
the double integral of the bath correlation function
alpha(t) = int_0^inf G(w) [coth(b w/2) cos(w t) - i sin(w t)] dw over the two
slices.  The self coefficient of a slice of width ``w`` includes the
reorganization counterterm of the completed-square coupling:

    eta_self(w) = int_0^inf dw G(w)/w^2 [coth(b w/2) (1 - cos w w) + i sin w w].

Half-step-terminated tables (symmetric splitting of a relaxing bath) use
slices [0, dt/2], [j dt - dt/2, j dt + dt/2], [N dt - dt/2, N dt]; uniform
tables (pure-dephasing bath) use slices [j dt, (j+1) dt].
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .model import DiscreteModes, Ohmic, SpectralDensity, ValidationError

HALF_STEP = "half_step"
UNIFORM = "uniform"


class QuadratureError(ArithmeticError):
    def __init__(self, message: str, estimate: complex, error: float):
        super().__init__(f"{message} (estimate {estimate}, error estimate {error:.3e})")
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-14
    omega_max_factor: float = 40.0

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValidationError("quadrature tolerances must be positive")
        if self.omega_max_factor < 10:
            raise ValidationError("omega_max_factor must be >= 10")


@dataclass(frozen=True)
class ThermalBath:
    spectral: SpectralDensity
    temperature: float

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValidationError("temperature must be > 0 (zero-temperature baths are unsupported)")

    @property
    def beta(self) -> float:
        return 1.0 / self.temperature


def thermal_weight(bath: ThermalBath, omega):
    """F(w) = G(w) exp(b w/2) / (w^2 sinh(b w/2)), G odd-extended to w < 0."""
    w = np.asarray(omega, dtype=float)
    if np.any(w == 0):
        raise ValueError("thermal_weight is singular at omega = 0")
    x = 0.5 * bath.beta * w
    g = np.sign(w) * bath.spectral(np.abs(w))
    # exp(x)/sinh(x) = 2/(1 - exp(-2x)), valid for both signs of x
    with np.errstate(over="ignore"):
        ratio = -2.0 / np.expm1(-2.0 * x)
    out = g * ratio / w**2
    return out if out.ndim else float(out)


# -- quadrature ---------------------------------------------------------------

_GL_CACHE: dict = {}


def _gauss_legendre(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def adaptive_panels(f, a: float, b: float, panel: float, rel_tol: float, abs_tol: float,
                    order: int = 16, max_rounds: int = 30, breaks=()) -> complex:
    """Panel-based Gauss-Legendre quadrature of a vectorized integrand.

    ``[a, b]`` is cut into panels no wider than ``panel`` (with extra edges
    at ``breaks``); each panel is integrated with ``order`` and ``2*order``
    points and panels whose difference exceeds their share of the tolerance
    are bisected.
    """
    n0 = max(1, int(np.ceil((b - a) / panel)))
    edges = np.linspace(a, b, n0 + 1)
    if len(breaks):
        br = np.asarray(breaks, dtype=float)
        edges = np.unique(np.concatenate([edges, br[(br > a) & (br < b)]]))
    lo, hi = edges[:-1], edges[1:]
    x1, w1 = _gauss_legendre(order)
    x2, w2 = _gauss_legendre(2 * order)
    done = 0.0 + 0.0j
    err_done = 0.0
    for _ in range(max_rounds):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        c1 = (f(mid[:, None] + half[:, None] * x1) * w1).sum(axis=1) * half
        c2 = (f(mid[:, None] + half[:, None] * x2) * w2).sum(axis=1) * half
        err = np.abs(c2 - c1)
        total = done + c2.sum()
        tol = max(abs_tol, rel_tol * abs(total))
        if err_done + err.sum() <= tol:
            return complex(total)
        bad = err > tol * (hi - lo) / (b - a)
        if not bad.any():
            # every panel meets its local share but the sum does not; refine the worst
            bad = err >= np.quantile(err, 0.5)
        done += c2[~bad].sum()
        err_done += err[~bad].sum()
        m = mid[bad]
        lo = np.concatenate([lo[bad], m])
        hi = np.concatenate([m, hi[bad]])
    raise QuadratureError("adaptive quadrature did not converge", complex(total), float(err_done + err.sum()))


def _x_coth_x(x):
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 3.0, safe / np.tanh(safe))


def _sinc(w, width):
    """sin(w width/2) / (w width/2)."""
    return np.sinc(w * width / (2 * np.pi))


@lru_cache(maxsize=65536)
def _pair_integral(spectral, beta: float, w_later: float, w_earlier: float, tau: float,
                   q: QuadratureConfig) -> complex:
    if spectral.is_zero:
        return 0.0j
    if isinstance(spectral, DiscreteModes):
        return _mode_sum(spectral, lambda w: _pair_kernel(w, beta, w_later, w_earlier, tau))

    def f(w):
        base = spectral.over_omega(w) * w_later * w_earlier * _sinc(w, w_later) * _sinc(w, w_earlier)
        re = base * (2.0 / beta) * _x_coth_x(0.5 * beta * w) * np.cos(w * tau)
        im = -base * w * np.sin(w * tau)
        return re + 1j * im

    return _integrate(f, spectral, max(abs(tau), 0.5 * (w_later + w_earlier)), q)


@lru_cache(maxsize=65536)
def _self_integral(spectral, beta: float, width: float, q: QuadratureConfig) -> complex:
    if spectral.is_zero:
        return 0.0j
    if isinstance(spectral, DiscreteModes):
        return _mode_sum(spectral, lambda w: (1.0 - np.cos(w * width)) / np.tanh(0.5 * beta * w)
                         + 1j * np.sin(w * width))

    def f(w):
        g = spectral.over_omega(w)
        re = g * (2.0 / beta) * _x_coth_x(0.5 * beta * w) * 0.5 * width**2 * _sinc(w, width) ** 2
        im = g * width * np.sinc(w * width / np.pi)
        return re + 1j * im

    return _integrate(f, spectral, width, q)


def _pair_kernel(w, beta, w_later, w_earlier, tau):
    return 4.0 * np.sin(0.5 * w * w_later) * np.sin(0.5 * w * w_earlier) * (
        np.cos(w * tau) / np.tanh(0.5 * beta * w) - 1j * np.sin(w * tau))


def _mode_sum(spectral: DiscreteModes, kernel) -> complex:
    w = np.asarray(spectral.frequencies)
    c = np.asarray(spectral.weights)
    return complex(np.sum(c / w**2 * kernel(w)))


def _integrate(f, spectral, rate: float, q: QuadratureConfig) -> complex:
    w_max = q.omega_max_factor * spectral.scale
    panel = min(np.pi / max(rate, 1e-12), 0.25 * spectral.scale)
    kinks = ()
    if not isinstance(spectral, Ohmic):
        kinks = tuple(x for x in spectral.omega if x < w_max)
    # linear-interpolation kinks sit on panel edges
    return adaptive_panels(f, 0.0, w_max, panel, q.rel_tol, q.abs_tol, breaks=kinks)


def pair_coefficient(bath: ThermalBath, w_later: float, w_earlier: float, tau: float,
                     q: QuadratureConfig = QuadratureConfig()) -> complex:
    """eta between two slices of the given widths whose centres are ``tau`` apart."""
    return _pair_integral(bath.spectral, bath.beta, float(w_later), float(w_earlier), float(tau), q)


def self_coefficient(bath: ThermalBath, width: float,
                     q: QuadratureConfig = QuadratureConfig()) -> complex:
    return _self_integral(bath.spectral, bath.beta, float(width), q)


# -- tables ---------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class EtaTable:
    """Influence coefficients eta(j, j') for one bath.

    ``interior[k]`` holds eta(j, j-k) for pairs of full-width slices (k = 0
    is the diagonal).  For the half-step pattern, ``first_column[j]`` is
    eta(j, 0), ``last_row[k]`` is eta(N, N-k) (both for 0 < j, k < N; index 0
    unused), ``end_diagonal`` is eta(0,0) = eta(N,N) and ``corner`` is
    eta(N, 0).  Entries beyond ``max_separation`` are not computed.
    """

    pattern: str
    n: int
    dt: float
    max_separation: int
    interior: np.ndarray
    first_column: Optional[np.ndarray] = None
    last_row: Optional[np.ndarray] = None
    end_diagonal: complex = 0j
    corner: Optional[complex] = None

    def __call__(self, j: int, jp: int) -> complex:
        if not 0 <= jp <= j:
            raise IndexError(f"need 0 <= j' <= j, got ({j}, {jp})")
        k = j - jp
        if k > self.max_separation:
            raise IndexError(f"separation {k} exceeds computed range {self.max_separation}")
        if self.pattern == UNIFORM:
            if j > self.n - 1:
                raise IndexError(f"uniform table covers slices 0..{self.n - 1}")
            return complex(self.interior[k])
        N = self.n
        if j > N:
            raise IndexError(f"table covers slices 0..{N}")
        if j == jp and (j == 0 or j == N):
            return complex(self.end_diagonal)
        if j == N and jp == 0:
            return complex(self.corner)
        if j == N:
            return complex(self.last_row[k])
        if jp == 0:
            return complex(self.first_column[j])
        return complex(self.interior[k])

    def as_matrix(self) -> np.ndarray:
        """Dense lower-triangular matrix of all computed entries (NaN elsewhere)."""
        size = self.n + 1 if self.pattern == HALF_STEP else self.n
        m = np.full((size, size), np.nan + 0j)
        for j in range(size):
            for jp in range(max(0, j - self.max_separation), j + 1):
                m[j, jp] = self(j, jp)
        return m

    def entries(self):
        size = self.n + 1 if self.pattern == HALF_STEP else self.n
        for j in range(size):
            for jp in range(max(0, j - self.max_separation), j + 1):
                yield j, jp, self(j, jp)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pattern", "j", "jprime", "re", "im"])
        for j, jp, v in self.entries():
            w.writerow([self.pattern, j, jp, f"{v.real:.17g}", f"{v.imag:.17g}"])
        return buf.getvalue()


def _run(jobs, workers: int):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(lambda job: job(), jobs))
    return [job() for job in jobs]


def eta_table_full(bath: ThermalBath, dt: float, N: int, q: QuadratureConfig = QuadratureConfig(),
                   max_separation: Optional[int] = None, workers: int = 0) -> EtaTable:
    """Half-step-terminated table for N slices of a symmetrically split bath."""
    if N < 1:
        raise ValidationError("N must be >= 1")
    if dt <= 0:
        raise ValidationError("dt must be > 0")
    K = N if max_separation is None else min(int(max_separation), N)
    h = 0.5 * dt
    jobs = [lambda: self_coefficient(bath, dt, q)]
    jobs += [lambda k=k: pair_coefficient(bath, dt, dt, k * dt, q) for k in range(1, K + 1)]
    jobs += [lambda j=j: pair_coefficient(bath, dt, h, j * dt - 0.25 * dt, q) for j in range(1, min(K, N - 1) + 1)]
    jobs += [lambda k=k: pair_coefficient(bath, h, dt, k * dt - 0.25 * dt, q) for k in range(1, min(K, N - 1) + 1)]
    jobs += [lambda: self_coefficient(bath, h, q)]
    if N <= K:
        jobs.append(lambda: pair_coefficient(bath, h, h, N * dt - 0.5 * dt, q))
    vals = _run(jobs, workers)
    interior = np.array(vals[: K + 1], dtype=complex)
    m = min(K, N - 1)
    first = np.concatenate([[np.nan], vals[K + 1: K + 1 + m]]).astype(complex)
    last = np.concatenate([[np.nan], vals[K + 1 + m: K + 1 + 2 * m]]).astype(complex)
    end = complex(vals[K + 1 + 2 * m])
    corner = complex(vals[-1]) if N <= K else None
    for a in (interior, first, last):
        a.setflags(write=False)
    return EtaTable(HALF_STEP, N, float(dt), K, interior, first, last, end, corner)


def eta_table_uniform(bath: ThermalBath, dt: float, M: int, q: QuadratureConfig = QuadratureConfig(),
                      workers: int = 0) -> EtaTable:
    """Uniform table for M full-width slices (separations 0..M-1)."""
    if M < 1:
        raise ValidationError("M must be >= 1")
    if dt <= 0:
        raise ValidationError("dt must be > 0")
    jobs = [lambda: self_coefficient(bath, dt, q)]
    jobs += [lambda k=k: pair_coefficient(bath, dt, dt, k * dt, q) for k in range(1, M)]
    interior = np.array(_run(jobs, workers), dtype=complex)
    interior.setflags(write=False)
    return EtaTable(UNIFORM, M, float(dt), M - 1, interior)


def pair_influence(eta: complex, later, earlier) -> complex:
    """exp[-(l+ - l-)(eta e+ - conj(eta) e-)] for (sigma+, sigma-) pairs."""
    lp, lm = later
    ep, em = earlier
    d = lp - lm
    if d == 0:
        return 1.0 + 0.0j
    return complex(np.exp(-d * (eta * ep - np.conj(eta) * em)))


def pair_factor_array(eta: complex, sigma: np.ndarray) -> np.ndarray:
    """All pair_influence values over eigenvalue labels.

    Returns shape (n, n, n, n) indexed [later+, later-, earlier+, earlier-].
    """
    s = np.asarray(sigma, dtype=float)
    d = s[:, None] - s[None, :]
    inner = eta * s[:, None] - np.conj(eta) * s[None, :]
    return np.exp(-d[:, :, None, None] * inner[None, None, :, :])


def self_factor_array(eta: complex, sigma: np.ndarray) -> np.ndarray:
    """Diagonal (same-slice) factor, shape (n, n) indexed [sigma+, sigma-]."""
    s = np.asarray(sigma, dtype=float)
    d = s[:, None] - s[None, :]
    return np.exp(-d * (eta * s[:, None] - np.conj(eta) * s[None, :]))

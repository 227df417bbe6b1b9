"""Reference rates, the exact pure-dephasing solution, damped-cosine fits and
convergence reports for TLS trajectories.

All quantities are in units of the TLS splitting Delta (times in 1/Delta).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from .kernels import QuadratureConfig, ThermalBath, self_coefficient
from .model import SIGMA_Y, SIGMA_Z, ValidationError
from .propagator.trajectory import Trajectory


class FitError(ArithmeticError):
    """Damped-cosine fit failed; carries the best parameters seen and their residual."""

    def __init__(self, message: str, best: Optional[np.ndarray] = None, residual: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.residual = residual


# -- weak-coupling rates ------------------------------------------------------


def redfield_dephasing_z(gamma: float, delta: float, temperature: float) -> float:
    """Dephasing rate gamma * Delta * coth(Delta / 2T) for a sigma_z-coupled Ohmic bath."""
    if gamma < 0 or delta <= 0 or temperature <= 0:
        raise ValidationError("need gamma >= 0, delta > 0, temperature > 0")
    return gamma * delta / np.tanh(delta / (2.0 * temperature))


def redfield_dephasing_x(gamma: float, temperature: float) -> float:
    """Pure-dephasing rate 4 gamma T for a bath coupled to the operator H_S is built from."""
    if gamma < 0 or temperature <= 0:
        raise ValidationError("need gamma >= 0, temperature > 0")
    return 4.0 * gamma * temperature


# -- exact pure dephasing -------------------------------------------------------


def dephasing_exponent(bath: ThermalBath, times, quad: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Gamma_d(t) = 4 int_0^inf G/w^2 coth(b w/2) (1 - cos w t) dw."""
    t = np.asarray(times, dtype=float)
    out = np.array([4.0 * self_coefficient(bath, abs(x), quad).real if x != 0 else 0.0 for x in t.ravel()])
    return out.reshape(t.shape)


def exact_pure_dephasing(bath: ThermalBath, delta: float, times,
                         quad: QuadratureConfig = QuadratureConfig()) -> Trajectory:
    """TLS with H_S = (delta/2) sigma_x, a single bath on sigma_x and P_z(0) = 1.

    The coupling commutes with H_S, so the coherence between the sigma_x
    eigenstates decays by exp(-Gamma_d(t)) while rotating at delta.
    """
    if delta <= 0:
        raise ValidationError("delta must be > 0")
    t = np.asarray(times, dtype=float)
    if t.ndim != 1:
        raise ValidationError("times must be one-dimensional")
    env = np.exp(-dephasing_exponent(bath, t, quad))
    pz = np.cos(delta * t) * env
    py = -np.sin(delta * t) * env
    eye = np.eye(2, dtype=complex)
    rhos = 0.5 * (eye[None] + py[:, None, None] * SIGMA_Y[None] + pz[:, None, None] * SIGMA_Z[None])
    return Trajectory(t, rhos, {"engine": "exact-pure-dephasing", "delta": float(delta),
                                "temperature": bath.temperature})


# -- damped-cosine fit ----------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    """a exp(-rate t) cos(frequency t + phase) + offset over ``window``."""

    amplitude: float
    rate: float
    frequency: float
    phase: float
    offset: float
    residual_rms: float
    window: tuple
    channel: str = "pz"
    iterations: int = 0

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValidationError(f"fit rate must be >= 0, got {self.rate}")
        if not self.frequency > 0:
            raise ValidationError(f"fit frequency must be > 0, got {self.frequency}")
        if not np.isfinite(self.residual_rms):
            raise ValidationError("fit residual is not finite")

    def model(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return damped_cosine(t, self.amplitude, self.rate, self.frequency, self.phase, self.offset)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window"] = [float(x) for x in self.window]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        d = dict(d)
        d["window"] = tuple(d["window"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def damped_cosine(t, a, rate, freq, phase, offset):
    return a * np.exp(-rate * t) * np.cos(freq * t + phase) + offset


def _jacobian(t, p):
    a, g, w, ph, _ = p
    e = np.exp(-g * t)
    c, s = np.cos(w * t + ph), np.sin(w * t + ph)
    return np.stack([e * c, -a * t * e * c, -a * t * e * s, -a * e * s, np.ones_like(t)], axis=1)


def _zero_crossings(t, y):
    s = np.signbit(y)
    k = np.nonzero(s[1:] != s[:-1])[0]
    # linear interpolation of each sign change
    return t[k] - y[k] * (t[k + 1] - t[k]) / (y[k + 1] - y[k])


def estimate_frequency(t, y) -> float:
    """Angular frequency from the mean spacing of zero crossings about the tail mean."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    z = _zero_crossings(t, y - _tail_mean(y))
    if z.size < 2:
        raise FitError("signal has fewer than two zero crossings; cannot estimate a frequency")
    return float(np.pi / np.mean(np.diff(z)))


def _tail_mean(y):
    return float(np.mean(y[-max(1, len(y) // 4):]))


def initial_guess(t, y) -> np.ndarray:
    c = _tail_mean(y)
    w = estimate_frequency(t, y)
    r = y - c
    # log-envelope slope through the local extrema of |y - c|
    k = np.nonzero((np.abs(r[1:-1]) >= np.abs(r[:-2])) & (np.abs(r[1:-1]) > np.abs(r[2:])))[0] + 1
    k = k[np.abs(r[k]) > 1e-300]
    if k.size >= 2:
        g = max(0.0, -np.polyfit(t[k], np.log(np.abs(r[k])), 1)[0])
    else:
        g = 0.0
    # amplitude and phase from a linear solve at fixed (rate, frequency)
    e = np.exp(-g * (t - t[0]))
    M = np.stack([e * np.cos(w * t), e * np.sin(w * t)], axis=1)
    (A, B), *_ = np.linalg.lstsq(M, r, rcond=None)
    a = np.hypot(A, B) * np.exp(g * t[0])
    if a == 0:
        a = abs(r[0]) or 1.0
    return np.array([a, g, w, np.arctan2(-B, A), c])


def _canonical(p):
    a, g, w, ph, c = p
    if a < 0:
        a, ph = -a, ph + np.pi
    if w < 0:
        w, ph = -w, -ph
    return np.array([a, g, w, (ph + np.pi) % (2 * np.pi) - np.pi, c])


def fit_arrays(t, y, p0=None, xtol: float = 1e-10, max_iter: int = 200):
    """Levenberg-Marquardt refinement of a damped cosine; returns (params, rms, iterations)."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    p = initial_guess(t, y) if p0 is None else np.asarray(p0, float)
    res = damped_cosine(t, *p) - y
    cost = res @ res
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = _jacobian(t, p)
        JTJ, grad = J.T @ J, J.T @ res
        while True:
            A = JTJ + lam * np.diag(np.diag(JTJ) + 1e-300)
            try:
                step = -np.linalg.solve(A, grad)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(A, grad, rcond=None)[0]
            trial = p + step
            r2 = damped_cosine(t, *trial) - y
            c2 = r2 @ r2
            if np.isfinite(c2) and c2 <= cost:
                p, res, cost = trial, r2, c2
                lam = max(lam / 10.0, 1e-15)
                break
            lam *= 10.0
            if lam > 1e16:
                break
        if np.all(np.abs(step) <= xtol * (1.0 + np.abs(p))) or cost == 0.0:
            return _canonical(p), float(np.sqrt(cost / t.size)), it
        if lam > 1e16:
            break
    raise FitError(f"damped-cosine fit did not converge in {max_iter} iterations",
                   _canonical(p), float(np.sqrt(cost / t.size)))


def default_window(traj: Trajectory, channel: str = "pz") -> tuple:
    """[2 pi / w0, t_max] with w0 estimated from the whole trajectory."""
    w0 = estimate_frequency(traj.times, traj.channel(channel))
    return (2 * np.pi / w0, float(traj.times[-1]))


def fit_damped_cosine(traj: Trajectory, window: Optional[Sequence[float]] = None,
                      channel: str = "pz") -> FitResult:
    """Fit a exp(-G t) cos(w t + phi) + c to one expectation channel.

    The default window skips the first estimated period.  Raises
    :class:`FitError` for degenerate input or when the solver does not reach
    a parameter tolerance of 1e-10 within 200 iterations.
    """
    if window is None:
        window = default_window(traj, channel)
    tmin, tmax = float(window[0]), float(window[1])
    if not tmax > tmin:
        raise ValidationError(f"fit window must have t_min < t_max, got {window}")
    t, y = traj.times, traj.channel(channel)
    m = (t >= tmin - 1e-12) & (t <= tmax + 1e-12)
    t, y = t[m], y[m]
    if t.size < 8:
        raise FitError(f"only {t.size} samples inside the fit window")
    w0 = estimate_frequency(t, y)
    if (t[-1] - t[0]) * w0 / (2 * np.pi) < 3.0 - 1e-9:
        raise FitError("fit window spans fewer than three oscillation periods")
    p, rms, it = fit_arrays(t, y)
    a, g, w, ph, c = p
    if -1e-8 < g < 0:
        g = 0.0  # solver noise around an undamped signal
    if g < 0 or w <= 0:
        raise FitError(f"fit converged to an unphysical solution (rate {g}, frequency {w})", p, rms)
    return FitResult(float(a), float(g), float(w), float(ph), float(c), rms, (tmin, tmax), channel, it)


# -- convergence ------------------------------------------------------------------


@dataclass(frozen=True)
class ConvergenceGroup:
    tau_mem: float
    runs: list  # [{"dt": .., "dj_max": ..}, ...]
    max_pairwise_deviation: float


@dataclass(frozen=True)
class ConvergenceReport:
    groups: list
    inter_group_deviations: list
    converged: bool
    threshold: float
    channel: str = "pz"
    window: Optional[tuple] = None

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.window is not None:
            d["window"] = [float(x) for x in self.window]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ConvergenceReport":
        d = dict(d)
        d["groups"] = [ConvergenceGroup(**g) for g in d["groups"]]
        if d.get("window") is not None:
            d["window"] = tuple(d["window"])
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ConvergenceReport":
        return cls.from_dict(json.loads(text))


def _tau(traj: Trajectory) -> float:
    md = traj.metadata
    if "tau_mem" in md:
        return float(md["tau_mem"])
    return float(md["dt"]) * int(md["dj_max"])


def convergence_scan(runs: Sequence[Trajectory], threshold: float = 0.01, channel: str = "pz",
                     window: Optional[Sequence[float]] = None) -> ConvergenceReport:
    """Group runs by memory time and compare them on a common grid.

    Within a group the largest pairwise max|dP| measures the time-step error
    at fixed memory time.  Between successive groups the most finely
    sliced member of each is compared.  ``converged`` is set when the last
    inter-group deviation is below ``threshold`` (or, with a single group,
    when its own spread is).
    """
    runs = list(runs)
    if len(runs) < 1:
        raise ValidationError("convergence_scan needs at least one run")
    lo = max(float(r.times[0]) for r in runs)
    hi = min(float(r.times[-1]) for r in runs)
    if window is not None:
        lo, hi = max(lo, float(window[0])), min(hi, float(window[1]))
    if not hi > lo:
        raise ValidationError(f"runs share no common time range (overlap [{lo}, {hi}])")
    coarse = max(runs, key=lambda r: float(np.median(np.diff(r.times))) if r.times.size > 1 else 0.0)
    grid = coarse.times[(coarse.times >= lo - 1e-12) & (coarse.times <= hi + 1e-12)]
    if grid.size == 0 or grid[0] > lo + 1e-12:
        grid = np.concatenate([[lo], grid])
    if grid[-1] < hi - 1e-12:
        grid = np.concatenate([grid, [hi]])
    sampled = [np.interp(grid, r.times, r.channel(channel)) for r in runs]

    keys: dict = {}
    for i, r in enumerate(runs):
        keys.setdefault(round(_tau(r), 9), []).append(i)
    groups, reps = [], []
    for tau in sorted(keys):
        idx = keys[tau]
        spread = max((float(np.max(np.abs(sampled[i] - sampled[j]))) for i, j in combinations(idx, 2)),
                     default=0.0)
        meta = [{"dt": float(runs[i].metadata.get("dt", np.nan)),
                 "dj_max": int(runs[i].metadata.get("dj_max", -1))} for i in idx]
        groups.append(ConvergenceGroup(float(tau), meta, spread))
        reps.append(min(idx, key=lambda i: runs[i].metadata.get("dt", np.inf)))
    inter = [float(np.max(np.abs(sampled[a] - sampled[b]))) for a, b in zip(reps[:-1], reps[1:])]
    converged = (inter[-1] < threshold) if inter else (groups[0].max_pairwise_deviation < threshold)
    return ConvergenceReport(groups, inter, bool(converged), float(threshold), channel,
                             None if window is None else (float(window[0]), float(window[1])))

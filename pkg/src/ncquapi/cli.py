"""Command-line front end.

Subcommands::

    ncquapi run    --config cfg.json [--out DIR]    trajectory CSV + metadata JSON
    ncquapi sweep  --config cfg.json [--out DIR]    one CSV per grid point + convergence JSON
    ncquapi oracle --config cfg.json [--out DIR]    brute-force vs propagated comparison JSON
    ncquapi fit    traj.csv [--window a:b]          damped-cosine fit JSON
    ncquapi report FILE...                          human-readable summary

Exit codes: 0 success, 2 invalid configuration or input, 3 numerical failure,
4 resource cap exceeded.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    ConvergenceReport,
    FitError,
    FitResult,
    convergence_scan,
    fit_damped_cosine,
)
from .kernels import QuadratureConfig, QuadratureError, ThermalBath
from .model import (
    PAULI,
    DiscreteModes,
    Ohmic,
    SystemSpec,
    Tabulated,
    ValidationError,
    validate_dephasing_condition,
)
from .propagator.brute_force import PATH_CAP, ResourceCapExceeded, brute_force
from .propagator.single_bath import evolve_single_bath
from .propagator.trajectory import Trajectory, atomic_write
from .propagator.two_bath import evolve_two_bath, peak_tensor_bytes

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_RESOURCE = 0, 2, 3, 4
ENGINES = ("two-bath", "single-bath", "brute-force")
TRACE_FAIL = 1e-2
DEFAULT_MEMORY_LIMIT = 2 * 1024**3


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


class NumericalFailure(ArithmeticError):
    pass


# -- config parsing -------------------------------------------------------------


def _check_keys(block: dict, allowed: set, where: str) -> None:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected an object")
    extra = set(block) - allowed
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {sorted(extra)}")


def _num(block: dict, key: str, where: str, default=None, kind=float):
    if key not in block:
        if default is None:
            raise ConfigError(f"{where}.{key}: required")
        return default
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    if kind is int and int(v) != v:
        raise ConfigError(f"{where}.{key}: expected an integer, got {v!r}")
    return kind(v)


def parse_matrix(value, where: str) -> np.ndarray:
    """``sx|sy|sz`` or a list of rows whose entries are numbers or [re, im] pairs."""
    if isinstance(value, str):
        if value not in PAULI:
            raise ConfigError(f"{where}: unknown operator shorthand {value!r} (use sx, sy or sz)")
        return PAULI[value].copy()
    try:
        rows = [[complex(e[0], e[1]) if isinstance(e, (list, tuple)) else complex(e) for e in row]
                for row in value]
        m = np.array(rows, dtype=complex)
    except (TypeError, ValueError, IndexError) as e:
        raise ConfigError(f"{where}: malformed matrix ({e})") from None
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.size == 0:
        raise ConfigError(f"{where}: matrix must be square and non-empty")
    return m


def matrix_to_json(m: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(m, dtype=complex)]


def _parse_spectral(b: dict, where: str):
    kind = b.get("kind", "ohmic")
    try:
        if kind == "ohmic":
            return Ohmic(_num(b, "gamma", where), _num(b, "omega_c", where))
        if kind == "tabulated":
            return Tabulated(tuple(b["omega"]), tuple(b["values"]))
        if kind == "modes":
            return DiscreteModes(tuple(b["frequencies"]), tuple(b["weights"]))
    except KeyError as e:
        raise ConfigError(f"{where}.{e.args[0]}: required for kind {kind!r}") from None
    except ValidationError as e:
        raise ConfigError(f"{where}: {e}") from None
    raise ConfigError(f"{where}.kind: unknown spectral density kind {kind!r}")


_BATH_KEYS = {"kind", "gamma", "omega_c", "omega", "values", "frequencies", "weights", "temperature"}


def _parse_bath(b, where: str) -> Optional[ThermalBath]:
    if b is None:
        return None
    _check_keys(b, _BATH_KEYS, where)
    spec = _parse_spectral(b, where)
    T = _num(b, "temperature", where)
    if not T > 0:
        raise ConfigError(f"{where}.temperature: must be > 0")
    return ThermalBath(spec, T)


def _bath_to_json(bath: Optional[ThermalBath]):
    if bath is None:
        return None
    s = bath.spectral
    if isinstance(s, Ohmic):
        d = {"kind": "ohmic", "gamma": s.gamma, "omega_c": s.omega_c}
    elif isinstance(s, Tabulated):
        d = {"kind": "tabulated", "omega": list(s.omega), "values": list(s.values)}
    else:
        d = {"kind": "modes", "frequencies": list(s.frequencies), "weights": list(s.weights)}
    d["temperature"] = bath.temperature
    return d


@dataclass
class RunConfig:
    """A fully resolved simulation run."""

    system: SystemSpec
    bath1: Optional[ThermalBath]
    bath2: Optional[ThermalBath]
    dt: float
    dj_max: int
    t_max: float
    engine: str = "two-bath"
    stride: int = 1
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    deterministic: bool = True
    workers: int = 0
    memory_limit: int = DEFAULT_MEMORY_LIMIT
    output: dict = field(default_factory=dict)
    grid: Optional[dict] = None
    oracle: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def tau_mem(self) -> float:
        return self.dt * self.dj_max

    def with_point(self, dt: float, dj_max: int) -> "RunConfig":
        c = RunConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        c.dt, c.dj_max = float(dt), int(dj_max)
        return c

    def to_dict(self) -> dict:
        s = self.system
        d = {
            "engine": self.engine,
            "system": {"H_S": matrix_to_json(s.H_S), "sigma1": matrix_to_json(s.sigma1),
                       "sigma2": matrix_to_json(s.sigma2), "rho0": matrix_to_json(s.rho0)},
            "baths": {"bath1": _bath_to_json(self.bath1), "bath2": _bath_to_json(self.bath2)},
            "numerics": {"dt": self.dt, "dj_max": self.dj_max, "t_max": self.t_max, "stride": self.stride,
                         "quadrature": {"rel_tol": self.quad.rel_tol, "abs_tol": self.quad.abs_tol,
                                        "omega_max_factor": self.quad.omega_max_factor},
                         "deterministic": self.deterministic, "workers": self.workers,
                         "memory_limit_bytes": self.memory_limit},
        }
        if self.output:
            d["output"] = dict(self.output)
        if self.grid is not None:
            d["grid"] = self.grid
        if self.oracle:
            d["oracle"] = dict(self.oracle)
        return d


_TOP_KEYS = {"engine", "system", "baths", "numerics", "output", "grid", "oracle", "run"}
_SYSTEM_KEYS = {"delta", "H_S", "sigma1", "sigma2", "rho0"}
_NUMERICS_KEYS = {"dt", "dj_max", "t_max", "stride", "quadrature", "deterministic", "workers",
                  "memory_limit_bytes"}
_QUAD_KEYS = {"rel_tol", "abs_tol", "omega_max_factor"}
_OUTPUT_KEYS = {"trajectory", "metadata", "report", "comparison"}
_GRID_KEYS = {"points", "dt", "dj_max", "tau_mem"}
_ORACLE_KEYS = {"threshold", "enforce"}


def parse_config(d: dict) -> RunConfig:
    """Validate a config object (or a metadata JSON written by ``run``)."""
    _check_keys(d, _TOP_KEYS, "config")
    engine = d.get("engine", "two-bath")
    if engine not in ENGINES:
        raise ConfigError(f"engine: expected one of {ENGINES}, got {engine!r}")

    sysb = d.get("system", {})
    _check_keys(sysb, _SYSTEM_KEYS, "system")
    if "H_S" in sysb and "delta" in sysb:
        raise ConfigError("system: give either delta or H_S, not both")
    if "H_S" in sysb:
        H = parse_matrix(sysb["H_S"], "system.H_S")
    else:
        H = 0.5 * _num(sysb, "delta", "system", 1.0) * PAULI["sx"]
    n = H.shape[0]
    s1 = parse_matrix(sysb.get("sigma1", "sx"), "system.sigma1")
    s2 = parse_matrix(sysb.get("sigma2", "sz"), "system.sigma2")
    if "rho0" in sysb:
        rho0 = parse_matrix(sysb["rho0"], "system.rho0")
    else:
        rho0 = np.zeros((n, n), dtype=complex)
        rho0[0, 0] = 1.0
    try:
        system = SystemSpec(H, s1, s2, rho0)
    except ValidationError as e:
        raise ConfigError(f"system: {e}") from None

    baths = d.get("baths", {})
    _check_keys(baths, {"bath1", "bath2"}, "baths")
    bath1 = _parse_bath(baths.get("bath1"), "baths.bath1")
    bath2 = _parse_bath(baths.get("bath2"), "baths.bath2")

    num = d.get("numerics")
    if num is None:
        raise ConfigError("numerics: required")
    _check_keys(num, _NUMERICS_KEYS, "numerics")
    dt = _num(num, "dt", "numerics")
    if not dt > 0:
        raise ConfigError("numerics.dt: must be > 0")
    dj_max = _num(num, "dj_max", "numerics", kind=int)
    if dj_max < 1:
        raise ConfigError("numerics.dj_max: must be >= 1")
    t_max = _num(num, "t_max", "numerics")
    if not t_max >= dt:
        raise ConfigError("numerics.t_max: must be >= dt")
    stride = _num(num, "stride", "numerics", 1, int)
    if stride < 1:
        raise ConfigError("numerics.stride: must be >= 1")
    qb = num.get("quadrature", {})
    _check_keys(qb, _QUAD_KEYS, "numerics.quadrature")
    try:
        quad = QuadratureConfig(**{k: float(v) for k, v in qb.items()})
    except (ValidationError, TypeError, ValueError) as e:
        raise ConfigError(f"numerics.quadrature: {e}") from None
    det = num.get("deterministic", True)
    if not isinstance(det, bool):
        raise ConfigError("numerics.deterministic: expected true or false")
    workers = _num(num, "workers", "numerics", 0, int)
    if workers < 0:
        raise ConfigError("numerics.workers: must be >= 0")
    mem = _num(num, "memory_limit_bytes", "numerics", DEFAULT_MEMORY_LIMIT, int)

    if engine in ("two-bath", "brute-force"):
        for name, b in (("bath1", bath1), ("bath2", bath2)):
            if b is None:
                raise ConfigError(f"baths.{name}: required for engine {engine!r}")
        try:
            validate_dephasing_condition(system)
        except ValidationError as e:
            raise ConfigError(f"system.sigma1: {e}") from None
    elif bath2 is None:
        raise ConfigError("baths.bath2: required for engine 'single-bath' (couples through system.sigma2)")

    out = d.get("output", {})
    _check_keys(out, _OUTPUT_KEYS, "output")
    grid = d.get("grid")
    if grid is not None:
        _check_keys(grid, _GRID_KEYS, "grid")
    oracle = d.get("oracle", {})
    _check_keys(oracle, _ORACLE_KEYS, "oracle")
    return RunConfig(system, bath1, bath2, dt, dj_max, t_max, engine, stride, quad, det, workers,
                     mem, dict(out), grid, dict(oracle))


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from None
    return parse_config(d)


def grid_points(cfg: RunConfig) -> list[tuple[float, int]]:
    g = cfg.grid
    if not g:
        raise ConfigError("grid: required for sweep")
    if "points" in g:
        pts = [(float(p[0]), int(p[1])) for p in g["points"]]
    elif "dj_max" in g and ("dt" in g) != ("tau_mem" in g):
        if "dt" in g:
            pts = [(float(dt), int(dj)) for dt in g["dt"] for dj in g["dj_max"]]
        else:
            pts = [(float(tau) / int(dj), int(dj)) for tau in g["tau_mem"] for dj in g["dj_max"]]
    else:
        raise ConfigError("grid: give 'points', or 'dj_max' with exactly one of 'dt' / 'tau_mem'")
    if not pts:
        raise ConfigError("grid: empty")
    for dt, dj in pts:
        if not dt > 0 or dj < 1:
            raise ConfigError(f"grid: invalid point (dt={dt}, dj_max={dj})")
    return pts


# -- execution --------------------------------------------------------------------


def _check_resources(cfg: RunConfig) -> None:
    n = cfg.system.n
    if cfg.engine == "brute-force":
        if n ** (4 * cfg.n_steps) > PATH_CAP:
            raise ResourceCapExceeded(f"brute force needs n^(4N) = {n}^{4 * cfg.n_steps} paths, "
                                      f"cap is {PATH_CAP}")
    elif cfg.engine == "two-bath":
        need = peak_tensor_bytes(n, cfg.dj_max)
        if need > cfg.memory_limit:
            raise ResourceCapExceeded(f"two-bath tensors need ~{need} bytes, limit is {cfg.memory_limit}")
    else:
        need = 16 * (n * n) ** (cfg.dj_max + 1)
        if need > cfg.memory_limit:
            raise ResourceCapExceeded(f"single-bath propagator needs ~{need} bytes, limit is {cfg.memory_limit}")


def memory_estimate(cfg: RunConfig) -> int:
    n = cfg.system.n
    if cfg.engine == "two-bath":
        return peak_tensor_bytes(n, cfg.dj_max)
    if cfg.engine == "single-bath":
        return 16 * (n * n) ** (cfg.dj_max + 1)
    return 16 * min(n ** (4 * cfg.n_steps + 2), 1 << 20) * 8


def simulate(cfg: RunConfig) -> Trajectory:
    _check_resources(cfg)
    workers = 0 if cfg.deterministic else cfg.workers
    s = cfg.system
    if cfg.engine == "two-bath":
        traj = evolve_two_bath(s, cfg.bath1, cfg.bath2, cfg.dt, cfg.dj_max, cfg.n_steps, cfg.stride,
                               cfg.quad, workers)
    elif cfg.engine == "single-bath":
        traj = evolve_single_bath(s.H_S, s.sigma2, s.rho0, cfg.bath2, cfg.dt, cfg.dj_max, cfg.n_steps,
                                  cfg.stride, cfg.quad)
    else:
        traj = brute_force(s, cfg.bath1, cfg.bath2, cfg.dt, cfg.n_steps, cfg.quad)
    return traj


def run_metadata(cfg: RunConfig, traj: Trajectory) -> dict:
    d = cfg.to_dict()
    d["run"] = {
        "version": __version__,
        "engine": cfg.engine,
        "tau_mem": cfg.tau_mem,
        "n_steps": cfg.n_steps,
        "n_points": int(traj.times.size),
        "wall_time": float(traj.metadata.get("wall_time", float("nan"))),
        "peak_memory_estimate_bytes": memory_estimate(cfg),
        "max_trace_dev": float(traj.trace_dev.max()),
        "max_hermiticity_dev": float(traj.hermiticity_dev.max()),
    }
    return d


def _out_path(out_dir: str, cfg: RunConfig, key: str, default: str) -> str:
    return os.path.join(out_dir, cfg.output.get(key, default))


def _write_json(path: str, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, allow_nan=True) + "\n")


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "deterministic", False):
        cfg.deterministic = True
    if getattr(args, "workers", None) is not None:
        if args.workers < 0:
            raise ConfigError("--workers: must be >= 0")
        cfg.workers = args.workers
    return cfg


def _finish_run(cfg: RunConfig, traj: Trajectory) -> None:
    worst = float(traj.trace_dev.max())
    if worst > TRACE_FAIL:
        raise NumericalFailure(f"trace deviation {worst:.3e} exceeds {TRACE_FAIL}; the run is not converged")


def cmd_run(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    traj = simulate(cfg)
    _finish_run(cfg, traj)
    traj.write_csv(_out_path(args.out, cfg, "trajectory", "trajectory.csv"))
    _write_json(_out_path(args.out, cfg, "metadata", "metadata.json"), run_metadata(cfg, traj))
    print(f"{cfg.engine}: {traj.times.size} points to t = {traj.times[-1]:g}, "
          f"max trace deviation {traj.trace_dev.max():.2e}")
    return EXIT_OK


def _sweep_point(cfg: RunConfig) -> Trajectory:
    traj = simulate(cfg)
    _finish_run(cfg, traj)
    return traj


def cmd_sweep(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    points = grid_points(cfg)
    cfgs = [cfg.with_point(dt, dj) for dt, dj in points]
    # refuse before computing anything if any point is out of bounds
    for c in cfgs:
        _check_resources(c)
    if not cfg.deterministic and cfg.workers > 1 and len(cfgs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            trajs = list(ex.map(_sweep_point, cfgs))
    else:
        trajs = [_sweep_point(c) for c in cfgs]
    for i, (c, tr) in enumerate(zip(cfgs, trajs)):
        tr.write_csv(os.path.join(args.out, f"run{i:03d}_dt{c.dt:g}_dj{c.dj_max}.csv"))
    report = convergence_scan(trajs)
    _write_json(_out_path(args.out, cfg, "report", "convergence.json"), report.to_dict())
    print(format_report(report))
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _apply_flags(load_config(args.config), args)
    if cfg.engine != "two-bath":
        raise ConfigError("engine: oracle compares the two-bath engine against brute force")
    bf_cfg = cfg.with_point(cfg.dt, cfg.dj_max)
    bf_cfg.engine = "brute-force"
    _check_resources(bf_cfg)
    ref = simulate(bf_cfg)
    eng = simulate(cfg)
    dev = np.max(np.abs(eng.rhos - ref.rhos), axis=(1, 2))
    threshold = float(cfg.oracle.get("threshold", 1e-10))
    enforce = bool(cfg.oracle.get("enforce", True))
    ok = bool(dev.max() <= threshold)
    result = {"times": [float(t) for t in ref.times], "max_deviation": [float(x) for x in dev],
              "overall_max_deviation": float(dev.max()), "threshold": threshold, "enforce": enforce,
              "within_threshold": ok, "dt": cfg.dt, "dj_max": cfg.dj_max, "n_steps": cfg.n_steps}
    _write_json(_out_path(args.out, cfg, "comparison", "oracle.json"), result)
    print(f"max deviation two-bath vs brute force: {dev.max():.3e} (threshold {threshold:g})")
    return EXIT_OK if ok or not enforce else EXIT_NUMERIC


def parse_window(text: Optional[str]):
    if text is None:
        return None
    try:
        a, b = text.split(":")
        w = (float(a), float(b))
    except ValueError:
        raise ConfigError(f"--window: expected tmin:tmax, got {text!r}") from None
    if not w[1] > w[0]:
        raise ConfigError("--window: tmin must be < tmax")
    return w


def cmd_fit(args) -> int:
    window = parse_window(args.window)
    try:
        with open(args.trajectory) as fh:
            traj = Trajectory.from_csv(fh.read())
    except OSError as e:
        raise ConfigError(f"cannot read {args.trajectory}: {e.strerror}") from None
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if traj.n != 2:
        raise ConfigError("fit needs a two-level trajectory")
    res = fit_damped_cosine(traj, window, args.channel)
    out = args.output or os.path.join(args.out, "fit.json")
    _write_json(out, res.to_dict())
    print(format_fit(res))
    return EXIT_OK


def format_fit(r: FitResult) -> str:
    return (f"{r.channel}: rate {r.rate:.6g}, frequency {r.frequency:.6g}, amplitude {r.amplitude:.4g}, "
            f"phase {r.phase:.4g}, offset {r.offset:.4g}, rms {r.residual_rms:.2e}, "
            f"window [{r.window[0]:.4g}, {r.window[1]:.4g}]")


def format_report(r: ConvergenceReport) -> str:
    lines = ["tau_mem   runs  max intra-group deviation"]
    for g in r.groups:
        lines.append(f"{g.tau_mem:7.3g}  {len(g.runs):5d}  {g.max_pairwise_deviation:.3e}")
    if r.inter_group_deviations:
        lines.append("successive tau_mem deviations: "
                     + ", ".join(f"{x:.3e}" for x in r.inter_group_deviations))
    lines.append(f"converged: {r.converged} (threshold {r.threshold:g})")
    return "\n".join(lines)


def describe_file(path: str) -> str:
    with open(path) as fh:
        text = fh.read()
    if path.endswith(".csv"):
        tr = Trajectory.from_csv(text)
        s = f"{path}: trajectory, {tr.times.size} points, t in [{tr.times[0]:g}, {tr.times[-1]:g}], " \
            f"max trace deviation {tr.trace_dev.max():.2e}"
        if tr.n == 2:
            s += f", final P_z {tr.pz[-1]:.4f}"
        return s
    d = json.loads(text)
    if "rate" in d and "frequency" in d:
        return f"{path}: fit\n  " + format_fit(FitResult.from_dict(d))
    if "groups" in d:
        return f"{path}: convergence report\n" + format_report(ConvergenceReport.from_dict(d))
    if "run" in d:
        r = d["run"]
        return (f"{path}: {r['engine']} run, dt {d['numerics']['dt']:g}, dj_max {d['numerics']['dj_max']}, "
                f"tau_mem {r['tau_mem']:g}, {r['n_points']} points, wall time {r['wall_time']:.2f} s, "
                f"max trace deviation {r['max_trace_dev']:.2e}")
    if "overall_max_deviation" in d:
        return (f"{path}: oracle comparison, max deviation {d['overall_max_deviation']:.3e} "
                f"(threshold {d['threshold']:g}, within: {d['within_threshold']})")
    raise ConfigError(f"{path}: unrecognized file")


def cmd_report(args) -> int:
    for p in args.files:
        try:
            print(describe_file(p))
        except OSError as e:
            raise ConfigError(f"cannot read {p}: {e.strerror}") from None
        except (ValueError, KeyError) as e:
            raise ConfigError(f"{p}: {e}") from None
    return EXIT_OK


# -- entry point --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncquapi", description="Two-bath path-integral simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=".", help="output directory (default: .)")
        sp.add_argument("--deterministic", action="store_true", help="force deterministic mode")
        sp.add_argument("--workers", type=int, default=None, help="worker count (non-deterministic mode)")

    common(sub.add_parser("run", help="simulate one configuration"))
    common(sub.add_parser("sweep", help="run a (dt, dj_max) grid and report convergence"))
    common(sub.add_parser("oracle", help="compare against the brute-force path sum"))
    f = sub.add_parser("fit", help="fit a damped cosine to a trajectory CSV")
    f.add_argument("trajectory")
    f.add_argument("--window", help="tmin:tmax (default: skip the first period)")
    f.add_argument("--channel", default="pz", choices=("px", "py", "pz"))
    f.add_argument("--output", help="result path (default: OUT/fit.json)")
    common(f, config=False)
    r = sub.add_parser("report", help="summarize CSV/JSON artifacts")
    r.add_argument("files", nargs="+")
    return p


_COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "fit": cmd_fit, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code else EXIT_OK
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValidationError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceCapExceeded as e:
        print(f"resource cap exceeded: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except (QuadratureError, FitError, NumericalFailure, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

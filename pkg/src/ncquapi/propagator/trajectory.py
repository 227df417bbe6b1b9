from __future__ import annotations

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ..model import SIGMA_X, SIGMA_Y, SIGMA_Z


@dataclass(eq=False)
class Trajectory:
    """Reduced density matrices on a time grid, in the computational basis."""

    times: np.ndarray
    rhos: np.ndarray  # shape (T, n, n)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.rhos = np.asarray(self.rhos, dtype=complex)
        if self.rhos.ndim != 3 or self.rhos.shape[0] != self.times.shape[0]:
            raise ValueError("rhos must have shape (len(times), n, n)")

    @property
    def n(self) -> int:
        return self.rhos.shape[1]

    def expectation(self, op) -> np.ndarray:
        return np.real(np.einsum("tij,ji->t", self.rhos, np.asarray(op)))

    @property
    def px(self) -> np.ndarray:
        return self.expectation(SIGMA_X)

    @property
    def py(self) -> np.ndarray:
        return self.expectation(SIGMA_Y)

    @property
    def pz(self) -> np.ndarray:
        return self.expectation(SIGMA_Z)

    @property
    def trace_dev(self) -> np.ndarray:
        return np.abs(np.trace(self.rhos, axis1=1, axis2=2) - 1.0)

    @property
    def hermiticity_dev(self) -> np.ndarray:
        return np.max(np.abs(self.rhos - np.conj(np.swapaxes(self.rhos, 1, 2))), axis=(1, 2))

    def channel(self, name: str) -> np.ndarray:
        return {"px": self.px, "py": self.py, "pz": self.pz}[name]

    # -- CSV ------------------------------------------------------------------

    def columns(self) -> list[str]:
        cols = ["t"]
        for i in range(self.n):
            for j in range(self.n):
                cols += [f"re_rho{i}{j}", f"im_rho{i}{j}"]
        if self.n == 2:
            cols += ["px", "py", "pz"]
        return cols + ["trace_dev"]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns())
        extra = [self.px, self.py, self.pz] if self.n == 2 else []
        tdev = self.trace_dev
        for k, t in enumerate(self.times):
            row = [t]
            for v in self.rhos[k].ravel():
                row += [v.real, v.imag]
            row += [e[k] for e in extra] + [tdev[k]]
            w.writerow([f"{float(x):.17g}" for x in row])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        atomic_write(path, self.to_csv())

    @classmethod
    def from_csv(cls, text: str, metadata: dict | None = None) -> "Trajectory":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or rows[0][:1] != ["t"]:
            raise ValueError("not a trajectory CSV: missing header starting with 't'")
        header = rows[0]
        ncell = sum(1 for c in header if c.startswith("re_rho"))
        n = int(round(np.sqrt(ncell)))
        if n * n != ncell or n == 0:
            raise ValueError("trajectory CSV has a non-square set of rho columns")
        try:
            data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        except ValueError as e:
            raise ValueError(f"malformed trajectory CSV: {e}") from e
        if data.ndim != 2 or data.shape[1] != len(header):
            raise ValueError("trajectory CSV rows do not match the header")
        idx = {c: i for i, c in enumerate(header)}
        rhos = np.empty((data.shape[0], n, n), dtype=complex)
        for i in range(n):
            for j in range(n):
                rhos[:, i, j] = data[:, idx[f"re_rho{i}{j}"]] + 1j * data[:, idx[f"im_rho{i}{j}"]]
        return cls(data[:, 0], rhos, dict(metadata or {}))

    @classmethod
    def read_csv(cls, path) -> "Trajectory":
        with open(path) as fh:
            return cls.from_csv(fh.read())


def atomic_write(path, text: str) -> None:
    """Write via a temp file in the target directory and rename over ``path``."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise

"""Closed-loop mean ODEs of the learning rules and their numerical integration.

All systems are expressed in (lambda, xi) coordinates with the affine
constant folded in, so that (0, xi*) is the equilibrium. Internally each
linear block is first written in (lambda, x = xi - xi*) coordinates; the
constant is ``-M_xi * xi*`` applied through the xi columns, which equals the
familiar ``b`` terms because ``A xi* = b``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import numkit
from .errors import InvalidHyper
from .learners import AlgoSpec, apply_reg_fn
from .tdcore import KeyMatrices

COORDS = "(lambda, xi) with equilibrium (0, xi*)"


@dataclass(frozen=True, eq=False)
class OdeSystem:
    """Autonomous ODE y' = M y + c, or y' = rhs(y) for nonlinear regularizers.

    ``has_lambda`` is False only for TD, whose state is xi alone.
    """

    kind: str
    n: int
    xi_star: np.ndarray
    M: np.ndarray | None = None
    c: np.ndarray | None = None
    rhs_fn: Callable[[np.ndarray], np.ndarray] | None = None
    has_lambda: bool = True
    label: str = ""
    coords: str = COORDS

    def __post_init__(self):
        dim = self.dim
        if self.kind == "linear":
            if self.M is None or self.M.shape != (dim, dim) or self.c is None or self.c.shape != (dim,):
                raise ValueError("linear system needs M of shape (dim, dim) and c of shape (dim,)")
        elif self.kind == "nonlinear":
            if self.rhs_fn is None:
                raise ValueError("nonlinear system needs an rhs function")
        else:
            raise ValueError(f"unknown system kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return 2 * self.n if self.has_lambda else self.n

    @property
    def equilibrium(self) -> np.ndarray:
        if self.has_lambda:
            return np.concatenate([np.zeros(self.n), self.xi_star])
        return self.xi_star.copy()

    def rhs(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "linear":
            return self.M @ y + self.c
        return self.rhs_fn(y)

    __call__ = rhs

    def split(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(lambda, xi) parts of a state; lambda is zero for TD."""
        y = np.asarray(y)
        if self.has_lambda:
            return y[..., : self.n], y[..., self.n :]
        return np.zeros_like(y), y

    def initial_state(self, xi0: np.ndarray) -> np.ndarray:
        """lambda = 0 and the given xi."""
        xi0 = np.asarray(xi0, dtype=float)
        return np.concatenate([np.zeros(self.n), xi0]) if self.has_lambda else xi0.copy()


def _linear(label: str, km: KeyMatrices, blocks) -> OdeSystem:
    M = np.block(blocks)
    n = km.n
    y_eq = np.concatenate([np.zeros(n), km.xi_star])
    return OdeSystem("linear", n, km.xi_star, M=M, c=-M @ y_eq, label=label)


def closed_loop(algo: AlgoSpec, km: KeyMatrices) -> OdeSystem:
    """Mean dynamics of ``algo``'s update under i.i.d. sampling from d^mu."""
    A, C, b = km.A, km.C, km.b
    n = km.n
    eye = np.eye(n)
    fam = algo.family
    eta, beta, kappa = algo.eta, algo.beta, algo.kappa
    if fam == "td":
        return OdeSystem("linear", n, km.xi_star, M=-A, c=b.copy(), has_lambda=False, label="td")
    if fam == "etd":
        raise InvalidHyper("etd's follow-on trace has no memoryless closed loop")
    if fam == "btd":
        return _linear(
            algo.label(),
            km,
            [[-C + eta * A, -A], [A.T + eta * eta * A - eta * C, -eta * A]],
        )
    if fam == "tdc_slow":
        return _linear(algo.label(), km, [[-C, -A], [beta * A.T, -beta * A]])
    if fam == "tdc2":
        return _linear(algo.label(), km, [[-eta * C, -A], [A.T - eta * C, -A]])
    if eta <= 0:
        raise InvalidHyper("tdcpp requires eta > 0")
    if algo.reg_fn.is_linear:
        R = C + beta * eye
        return _linear(algo.label(), km, [[-eta * R, -eta * A], [A.T - kappa * eta * R, -kappa * eta * A]])

    f = algo.reg_fn
    xi_star = km.xi_star
    ke = kappa * eta

    def rhs(y: np.ndarray) -> np.ndarray:
        lam, xi = y[:n], y[n:]
        x = xi - xi_star
        f_lam = apply_reg_fn(f, lam)
        d_lam = -eta * (C @ lam) - eta * beta * f_lam - eta * (A @ x)
        d_xi = A.T @ lam - ke * (C @ lam) - ke * beta * f_lam - ke * (A @ x)
        return np.concatenate([d_lam, d_xi])

    return OdeSystem("nonlinear", n, xi_star, rhs_fn=rhs, label=algo.label())


def simulate(sys: OdeSystem, y0, t_end: float = 100.0, dt: float = 1e-3) -> numkit.Trajectory:
    """RK4 trajectory of ``sys`` from ``y0``; ``diverged`` reports the sentinel."""
    y0 = numkit.as_vector(y0, "y0")
    if y0.shape != (sys.dim,):
        raise ValueError(f"y0 must have length {sys.dim}")
    return numkit.rk4_integrate(sys.rhs, y0, t_end, dt)


def write_trajectory_csv(
    path: str | Path,
    sys: OdeSystem,
    traj: numkit.Trajectory,
    meta: dict[str, object] | None = None,
    every: int = 1,
) -> None:
    """Write ``t, lambda_0.., xi_0..`` rows preceded by ``# key=value`` comments.

    TD has no auxiliary weights; its lambda columns are written as zeros so
    the schema is the same for every algorithm.
    """
    n = sys.n
    idx = np.arange(0, len(traj.times), max(1, every))
    if idx[-1] != len(traj.times) - 1:
        idx = np.append(idx, len(traj.times) - 1)
    lam, xi = sys.split(traj.states[idx])
    header = ["t"] + [f"lambda_{i}" for i in range(n)] + [f"xi_{i}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        for key, value in (meta or {}).items():
            fh.write(f"# {key}={value}\n")
        fh.write(f"# diverged={'true' if traj.diverged else 'false'}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, lrow, xrow in zip(traj.times[idx], lam, xi):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in lrow] + [repr(float(v)) for v in xrow])


def read_trajectory_csv(path: str | Path) -> tuple[dict[str, str], np.ndarray, list[str]]:
    """Inverse of ``write_trajectory_csv``: (meta, data rows, column names)."""
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    columns: list[str] = []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key] = value
            elif not columns:
                columns = line.strip().split(",")
            elif line.strip():
                rows.append([float(v) for v in line.strip().split(",")])
    return meta, np.array(rows), columns

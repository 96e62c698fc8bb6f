"""Expected TD matrices, the TD fixed point, transition sampling and error metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numkit
from .envs import MdpEnv, StationaryDist, stationary_distribution, true_value_function
from .errors import SingularA, SingularMatrix
from .rng import Xoshiro256

METRICS = ("rmsve", "rmse_fixed_point", "rmspbe")


@dataclass(frozen=True, eq=False)
class KeyMatrices:
    A: np.ndarray
    C: np.ndarray
    b: np.ndarray
    xi_star: np.ndarray

    @property
    def n(self) -> int:
        return self.b.shape[0]


@dataclass(frozen=True, eq=False)
class Transition:
    """One transition, or a batch of them when the fields carry leading axes.

    ``gamma`` travels with the transition so step functions need no
    environment handle.
    """

    s: np.ndarray | int
    a: np.ndarray | int
    s_next: np.ndarray | int
    r: np.ndarray | float
    rho: np.ndarray | float
    phi: np.ndarray
    phi_next: np.ndarray
    gamma: float

    def td_error(self, xi: np.ndarray) -> np.ndarray:
        return self.r + self.gamma * _dot(self.phi_next, xi) - _dot(self.phi, xi)


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", u, v)


def make_transitions(env: MdpEnv, s, a, s_next) -> Transition:
    """Assemble (possibly batched) transitions from index arrays."""
    s = np.asarray(s)
    a = np.asarray(a)
    s_next = np.asarray(s_next)
    return Transition(
        s=s,
        a=a,
        s_next=s_next,
        r=env.reward[s, a, s_next],
        rho=env.rho[s, a],
        phi=env.features[s],
        phi_next=env.features[s_next] * env.continuation[s, a, s_next][..., None],
        gamma=env.gamma,
    )


def enumerate_transitions(env: MdpEnv, d: StationaryDist | None = None) -> tuple[Transition, np.ndarray]:
    """Every (s, a, s') with positive probability, plus its sampling weight."""
    if d is None:
        d = stationary_distribution(env)
    w = np.asarray(d)[:, None, None] * env.behavior[:, :, None] * env.transition
    s, a, s_next = np.nonzero(w > 0)
    return make_transitions(env, s, a, s_next), w[s, a, s_next]


def expected_matrices(env: MdpEnv, d: StationaryDist | None = None) -> KeyMatrices:
    """A = E[rho phi (phi - gamma phi')^T], C = E[phi phi^T], b = E[rho r phi] under d^mu."""
    if d is None:
        d = stationary_distribution(env)
    t, w = enumerate_transitions(env, d)
    wr = w * t.rho
    A = np.einsum("k,ki,kj->ij", wr, t.phi, t.phi - env.gamma * t.phi_next)
    C = env.features.T @ (np.asarray(d)[:, None] * env.features)
    b = np.einsum("k,k,ki->i", wr, t.r, t.phi)
    try:
        xi_star = numkit.solve_linear(A, b)
    except SingularMatrix as exc:
        raise SingularA(f"{env.name}: A is singular, the TD fixed point is undefined") from exc
    return KeyMatrices(A, 0.5 * (C + C.T), b, xi_star)


def sample_indices(env: MdpEnv, d: StationaryDist, rng: Xoshiro256, count: int):
    """Draw ``count`` i.i.d. transitions as index arrays (s, a, s').

    Three uniforms are consumed per transition, in the order state, action,
    next state, so this matches ``count`` calls of ``sample_transition``.
    """
    u = rng.random(3 * count).reshape(count, 3)
    cum_d = _cumulative(np.asarray(d))
    s = np.searchsorted(cum_d, u[:, 0], side="right")
    cum_mu = _cumulative(env.behavior)
    a = np.sum(cum_mu[s] <= u[:, 1:2], axis=1)
    cum_p = _cumulative(env.transition)
    s_next = np.sum(cum_p[s, a] <= u[:, 2:3], axis=1)
    return s, a, s_next


def _cumulative(p: np.ndarray) -> np.ndarray:
    c = np.cumsum(p, axis=-1)
    return c / c[..., -1:]


def sample_transition(env: MdpEnv, d: StationaryDist, rng: Xoshiro256) -> Transition:
    s, a, s_next = sample_indices(env, d, rng, 1)
    return make_transitions(env, int(s[0]), int(a[0]), int(s_next[0]))


# --------------------------------------------------------------------------
# metrics


def rmsve(env: MdpEnv, xi: np.ndarray, v_true: np.ndarray, d: StationaryDist) -> np.ndarray:
    """d-weighted root-mean-square value error; batched over leading axes of ``xi``."""
    resid = np.asarray(xi) @ env.features.T - v_true
    return np.sqrt(np.sum(np.asarray(d) * resid**2, axis=-1))


def rmse_fixed_point(xi: np.ndarray, xi_star: np.ndarray) -> np.ndarray:
    return np.linalg.norm(np.asarray(xi) - xi_star, axis=-1)


def rmspbe(km: KeyMatrices, xi: np.ndarray, c_inv: np.ndarray | None = None) -> np.ndarray:
    if c_inv is None:
        c_inv = numkit.inverse(km.C)
    g = km.b - np.asarray(xi) @ km.A.T
    return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", g, c_inv, g), 0.0))


class MetricEvaluator:
    """Caches what each metric needs so it can be evaluated every few steps."""

    def __init__(self, env: MdpEnv, metric: str, d: StationaryDist | None = None, km: KeyMatrices | None = None):
        if metric not in METRICS:
            raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
        self.env = env
        self.metric = metric
        self.d = stationary_distribution(env) if d is None else d
        self.km = expected_matrices(env, self.d) if km is None else km
        if metric == "rmsve":
            self.v_true = true_value_function(env)
        elif metric == "rmspbe":
            self.c_inv = numkit.inverse(self.km.C)

    def __call__(self, xi: np.ndarray) -> np.ndarray:
        if self.metric == "rmsve":
            return rmsve(self.env, xi, self.v_true, self.d)
        if self.metric == "rmse_fixed_point":
            return rmse_fixed_point(xi, self.km.xi_star)
        return rmspbe(self.km, xi, self.c_inv)

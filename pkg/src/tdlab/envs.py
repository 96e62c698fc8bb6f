"""Finite MDPs and the five diagnostic environments.

Every environment is an ergodic Markov chain under the behaviour policy, so
the stationary distribution used for i.i.d. sampling always exists. Episodic
tasks are wrapped: an episode-ending transition moves the chain to the start
state but is flagged in ``episode_end`` so learners treat the next state as
terminal (zero features, no bootstrapping). Builders accept keyword overrides for the literature
constants they bake in (discount, target policy, rewards, ...).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit
from .errors import ReducibleChain, SingularMatrix, SingularSystem, UnknownEnvironment

ENV_NAMES = ("boyan", "dependent", "inverted", "tabular", "baird")


@dataclass(frozen=True, eq=False)
class MdpEnv:
    name: str
    transition: np.ndarray  # P[s, a, s']
    reward: np.ndarray  # r[s, a, s']
    gamma: float
    features: np.ndarray  # (n_states, n_features)
    behavior: np.ndarray  # mu[s, a]
    target: np.ndarray  # pi[s, a]
    initial_xi: np.ndarray = field(default=None)
    episode_end: np.ndarray = field(default=None)  # bool[s, a, s']: restart, no bootstrap

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        S, A, S2 = P.shape
        if S2 != S:
            raise ValueError("transition must have shape (S, A, S)")
        R = np.asarray(self.reward, dtype=float)
        if R.shape != P.shape:
            raise ValueError("reward must match transition shape")
        phi = numkit.as_matrix(self.features, "features")
        mu = np.asarray(self.behavior, dtype=float)
        pi = np.asarray(self.target, dtype=float)
        if phi.shape[0] != S or mu.shape != (S, A) or pi.shape != (S, A):
            raise ValueError("features/behavior/target do not match the state/action counts")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("each P[s, a, :] must be a probability vector")
        for label, pol in (("behavior", mu), ("target", pi)):
            if np.any(pol < 0) or np.max(np.abs(pol.sum(axis=1) - 1.0)) > 1e-12:
                raise ValueError(f"{label} rows must be probability vectors")
        if np.any((pi > 0) & (mu <= 0)):
            raise ValueError("target puts mass on an action the behavior policy never takes")
        gram = phi.T @ phi
        if numkit.eig_sym_extreme(numkit.sym_part(gram))[0] <= 1e-10:
            raise ValueError(f"features of {self.name!r} are not full column rank")
        xi0 = np.zeros(phi.shape[1]) if self.initial_xi is None else numkit.as_vector(self.initial_xi)
        if xi0.shape != (phi.shape[1],):
            raise ValueError("initial_xi must have one entry per feature")
        end = np.zeros(P.shape, bool) if self.episode_end is None else np.asarray(self.episode_end, bool)
        if end.shape != P.shape:
            raise ValueError("episode_end must match transition shape")
        for name, value in (
            ("episode_end", end),
            ("transition", P),
            ("reward", R),
            ("features", phi),
            ("behavior", mu),
            ("target", pi),
            ("initial_xi", xi0),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def rho(self) -> np.ndarray:
        """Importance ratios pi/mu; zero where the behavior policy has no mass."""
        out = np.zeros_like(self.behavior)
        np.divide(self.target, self.behavior, out=out, where=self.behavior > 0)
        return out

    @property
    def p_behavior(self) -> np.ndarray:
        return np.einsum("sa,sat->st", self.behavior, self.transition)

    @property
    def continuation(self) -> np.ndarray:
        """1.0 where the next state's value is bootstrapped, 0.0 on episode ends."""
        return 1.0 - self.episode_end

    @property
    def p_target(self) -> np.ndarray:
        """Target-policy transition matrix restricted to bootstrapping transitions."""
        return np.einsum("sa,sat->st", self.target, self.transition * self.continuation)

    @property
    def r_target(self) -> np.ndarray:
        return np.einsum("sa,sat,sat->s", self.target, self.transition, self.reward)


@dataclass(frozen=True)
class StationaryDist:
    d: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.d, dtype=dtype)


def stationary_distribution(env: MdpEnv) -> StationaryDist:
    """Stationary distribution of the behavior chain, by a bordered linear solve."""
    P = env.p_behavior
    n = P.shape[0]
    system = P.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    try:
        d = numkit.solve_linear(system, rhs)
    except SingularMatrix as exc:
        raise ReducibleChain(f"{env.name}: behavior chain has no unique stationary law") from exc
    d = np.where(np.abs(d) < 1e-15, 0.0, d)
    if np.any(d < -1e-12) or np.max(np.abs(d @ P - d)) > 1e-10:
        raise ReducibleChain(f"{env.name}: stationary solve did not yield a distribution")
    d = np.clip(d, 0.0, None)
    return StationaryDist(d / d.sum())


def true_value_function(env: MdpEnv) -> np.ndarray:
    """Exact target-policy values v = (I - gamma P_pi)^-1 r_pi."""
    n = env.n_states
    try:
        return numkit.solve_linear(np.eye(n) - env.gamma * env.p_target, env.r_target)
    except SingularMatrix as exc:
        raise SingularSystem(f"{env.name}: I - gamma P_pi is singular") from exc


# --------------------------------------------------------------------------
# environment catalog


def baird_features_raw() -> np.ndarray:
    """The conventional 7 x 8 Baird features: 2 e_i + e_7 outside, e_6 + 2 e_7 in the centre.

    This matrix has rank 7; its null space is spanned by (1, 1, 1, 1, 1, 1, 4, -2).
    """
    phi = np.zeros((7, 8))
    for i in range(6):
        phi[i, i] = 2.0
        phi[i, 7] = 1.0
    phi[6, 6] = 1.0
    phi[6, 7] = 2.0
    return phi


def baird_basis() -> np.ndarray:
    """8 x 7 orthonormal basis of the row space of ``baird_features_raw``.

    Columns of the Householder reflection that maps the unit null vector onto
    e_7; the remaining seven columns span its orthogonal complement.
    """
    null = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 4.0, -2.0])
    null /= np.linalg.norm(null)
    e = np.zeros(8)
    e[7] = 1.0
    v = null - e if null[7] < 0 else null + e
    H = np.eye(8) - 2.0 * np.outer(v, v) / (v @ v)
    return H[:, :7]


BAIRD_RAW_XI0 = np.array([1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 1.0])


def baird(gamma: float = 0.99, mu_solid: float = 1.0 / 7.0, pi_solid: float = 1.0) -> MdpEnv:
    """Baird's seven-state star in full-rank coordinates.

    Action 0 ("dashed") jumps uniformly to one of the six outer states,
    action 1 ("solid") jumps to the centre state 6. All rewards are zero.
    The conventional eight features are rank deficient, and every linear TD
    update moves the weights along feature vectors, so the component of the
    weights in their null space never changes. Features here are the
    conventional ones expressed in an orthonormal basis Q of their row space
    (phi = phi_raw Q, xi = Q^T xi_raw); value estimates and all learning
    dynamics are identical to the eight-weight version.
    """
    S, A = 7, 2
    P = np.zeros((S, A, S))
    P[:, 0, :6] = 1.0 / 6.0
    P[:, 1, 6] = 1.0
    Q = baird_basis()
    phi = baird_features_raw() @ Q
    mu = np.tile([1.0 - mu_solid, mu_solid], (S, 1))
    pi = np.tile([1.0 - pi_solid, pi_solid], (S, 1))
    return MdpEnv("baird", P, np.zeros((S, A, S)), gamma, phi, mu, pi, Q.T @ BAIRD_RAW_XI0)


_DEPENDENT_CODES = np.array(
    [
        [1.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 1.0, 1.0],
        [0.0, 1.0, 1.0],
        [0.0, 0.0, 1.0],
    ]
)


def random_walk_features(kind: str, n: int = 5) -> np.ndarray:
    if kind == "tabular":
        return np.eye(n)
    if kind == "inverted":
        return 0.5 * (np.ones((n, n)) - np.eye(n))
    if kind == "dependent":
        if n != 5:
            raise ValueError("dependent features are defined for 5 states")
        return _DEPENDENT_CODES / np.linalg.norm(_DEPENDENT_CODES, axis=1, keepdims=True)
    raise UnknownEnvironment(f"unknown random-walk representation {kind!r}")


def random_walk(
    kind: str,
    n: int = 5,
    gamma: float = 0.95,
    mu_right: float = 0.5,
    pi_right: float = 0.75,
    reward_left: float = 0.0,
    reward_right: float = 1.0,
) -> MdpEnv:
    """Five-state random walk; leaving either end ends the episode and restarts in the middle.

    Action 0 moves left, action 1 moves right. Exiting on the right pays
    ``reward_right``, exiting on the left pays ``reward_left``.
    """
    start = n // 2
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2, n))
    end = np.zeros((n, 2, n), bool)
    for s in range(n):
        if s == 0:
            P[s, 0, start] = 1.0
            R[s, 0, start] = reward_left
            end[s, 0, start] = True
        else:
            P[s, 0, s - 1] = 1.0
        if s == n - 1:
            P[s, 1, start] = 1.0
            R[s, 1, start] = reward_right
            end[s, 1, start] = True
        else:
            P[s, 1, s + 1] = 1.0
    mu = np.tile([1.0 - mu_right, mu_right], (n, 1))
    pi = np.tile([1.0 - pi_right, pi_right], (n, 1))
    return MdpEnv(kind, P, R, gamma, random_walk_features(kind, n), mu, pi, episode_end=end)


def boyan(n: int = 13, gamma: float = 0.95, step_reward: float = -3.0, final_reward: float = -2.0) -> MdpEnv:
    """Boyan chain, indexed so that state 0 is the start and n-1 the terminal.

    Action 0 advances one state and action 1 two (clipped at the terminal);
    both are equally likely under behavior and target, so rho == 1. The
    terminal's only transition restarts the episode at state 0 with zero
    reward, which pins the terminal value at zero. Four hat features are
    centred on states 0, 4, 8 and 12.
    """
    if n != 13:
        raise ValueError("the hat-feature layout assumes a 13-state chain")
    term = n - 1
    P = np.zeros((n, 2, n))
    R = np.zeros((n, 2, n))
    end = np.zeros((n, 2, n), bool)
    for s in range(n):
        if s == term:
            P[s, :, 0] = 1.0
            end[s, :, 0] = True
            continue
        for a, hop in enumerate((1, 2)):
            nxt = min(s + hop, term)
            P[s, a, nxt] = 1.0
            R[s, a, nxt] = final_reward if s == term - 1 else step_reward
    centres = np.array([0, 4, 8, 12])
    phi = np.maximum(0.0, 1.0 - np.abs(np.arange(n)[:, None] - centres[None, :]) / 4.0)
    half = np.full((n, 2), 0.5)
    return MdpEnv("boyan", P, R, gamma, phi, half, half.copy(), episode_end=end)


def build_env(name: str, **overrides) -> MdpEnv:
    """Build one of ``boyan | dependent | inverted | tabular | baird``."""
    key = name.lower()
    if key == "baird":
        return baird(**overrides)
    if key == "boyan":
        return boyan(**overrides)
    if key in ("tabular", "inverted", "dependent"):
        return random_walk(key, **overrides)
    raise UnknownEnvironment(f"unknown environment {name!r}; expected one of {', '.join(ENV_NAMES)}")

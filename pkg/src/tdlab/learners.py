"""One-step stochastic updates for off-policy linear TD evaluation.

Every step function is pure: it takes a ``LearnerState`` and a
``Transition`` and returns a new state. States and transitions may carry a
leading batch axis (one row per independent run), and ``alpha`` may be a
scalar or a per-row array, so the same code serves single updates, exact
expectations over enumerated transitions, and many seeds at once.

Throughout, ``delta = r + gamma * phi'.xi - phi.xi`` is the TD error.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Any, NamedTuple

import numpy as np

from .errors import InvalidHyper
from .tdcore import Transition

FAMILIES = ("td", "etd", "btd", "tdc_slow", "tdc2", "tdcpp")
REG_KINDS = ("identity", "relu", "leaky_relu")


# --------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class StepSchedule:
    """Constant ``alpha`` or polynomial decay ``a / (1 + k)**p``."""

    kind: str = "constant"
    alpha: float = 0.01
    a: float = 0.1
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "polynomial"):
            raise InvalidHyper(f"unknown schedule kind {self.kind!r}")
        if self.kind == "constant" and not self.alpha >= 0:
            raise InvalidHyper("constant step size must be non-negative")
        if self.kind == "polynomial" and not (self.a > 0 and self.p > 0):
            raise InvalidHyper("polynomial schedule needs a > 0 and p > 0")

    def __call__(self, k: int) -> float:
        if self.kind == "constant":
            return self.alpha
        return self.a / (1.0 + k) ** self.p

    @property
    def robbins_monro(self) -> bool:
        """Whether sum(alpha) diverges while sum(alpha**2) converges."""
        return self.kind == "polynomial" and 0.5 < self.p <= 1.0

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "constant":
            return {"kind": "constant", "alpha": self.alpha}
        return {"kind": "polynomial", "a": self.a, "p": self.p}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "StepSchedule":
        return cls(**d)


@dataclass(frozen=True)
class RegFn:
    """Regularizer f applied to the auxiliary weights in TDC++ updates."""

    kind: str = "identity"
    slope: float = 0.01

    def __post_init__(self):
        if self.kind not in REG_KINDS:
            raise InvalidHyper(f"unknown reg_fn {self.kind!r}; expected one of {REG_KINDS}")
        if self.kind == "leaky_relu" and not 0.0 < self.slope <= 1.0:
            raise InvalidHyper("leaky_relu slope must lie in (0, 1]")

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return apply_reg_fn(self, v)

    @property
    def is_linear(self) -> bool:
        return self.kind == "identity"

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "leaky_relu":
            return {"kind": self.kind, "slope": self.slope}
        return {"kind": self.kind}

    def label(self) -> str:
        return f"leaky_relu({self.slope:g})" if self.kind == "leaky_relu" else self.kind

    @classmethod
    def from_dict(cls, d: dict[str, Any] | str) -> "RegFn":
        if isinstance(d, str):
            return cls(kind=d)
        return cls(**d)


def apply_reg_fn(f: RegFn, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if f.kind == "identity":
        return v
    if f.kind == "relu":
        return np.maximum(v, 0.0)
    return np.where(v >= 0.0, v, f.slope * v)


@dataclass(frozen=True)
class AlgoSpec:
    family: str
    eta: float = 1.0
    beta: float = 1.0
    kappa: float = 1.0
    reg_fn: RegFn = field(default_factory=RegFn)
    schedule: StepSchedule = field(default_factory=StepSchedule)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidHyper(f"unknown algorithm family {self.family!r}; expected one of {FAMILIES}")
        if not self.reg_fn.is_linear and self.family != "tdcpp":
            raise InvalidHyper(f"reg_fn {self.reg_fn.kind} is only valid for tdcpp")
        if self.family in ("btd", "tdc2", "tdcpp") and self.eta < 0:
            raise InvalidHyper("eta must be non-negative")
        if self.family == "tdcpp" and self.eta <= 0:
            raise InvalidHyper("tdcpp requires eta > 0")

    @property
    def alpha(self) -> float:
        return self.schedule(0)

    def with_alpha(self, alpha: float) -> "AlgoSpec":
        return replace(self, schedule=StepSchedule("constant", alpha=alpha))

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["reg_fn"] = self.reg_fn.to_dict()
        d["schedule"] = self.schedule.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AlgoSpec":
        d = dict(d)
        unknown = set(d) - {"family", "eta", "beta", "kappa", "reg_fn", "schedule"}
        if unknown:
            raise InvalidHyper(f"unknown AlgoSpec fields: {sorted(unknown)}")
        if "reg_fn" in d:
            d["reg_fn"] = RegFn.from_dict(d["reg_fn"])
        if "schedule" in d:
            d["schedule"] = StepSchedule.from_dict(d["schedule"])
        for key in ("eta", "beta", "kappa"):
            if key in d:
                d[key] = float(d[key])
        return cls(**d)

    def label(self) -> str:
        parts = [self.family]
        if self.family in ("btd", "tdc2", "tdcpp"):
            parts.append(f"eta={self.eta:g}")
        if self.family in ("tdc_slow", "tdcpp"):
            parts.append(f"beta={self.beta:g}")
        if self.family == "tdcpp":
            parts.append(f"kappa={self.kappa:g}")
            parts.append(f"f={self.reg_fn.label()}")
        return " ".join(parts)


# Named presets that are special cases of a family.


def gtd2(alpha: float = 0.01) -> AlgoSpec:
    return AlgoSpec("btd", eta=0.0, schedule=StepSchedule(alpha=alpha))


def tdc_fast(eta: float, alpha: float = 0.01) -> AlgoSpec:
    """Single-time-scale TDC with the faster (auxiliary) update scaled by eta."""
    return AlgoSpec("tdcpp", eta=eta, beta=0.0, kappa=1.0 / eta, schedule=StepSchedule(alpha=alpha))


def tdcpp_original(eta: float, beta: float, alpha: float = 0.01) -> AlgoSpec:
    return AlgoSpec("tdcpp", eta=eta, beta=beta, kappa=1.0 / eta, schedule=StepSchedule(alpha=alpha))


PRESETS = {
    "gtd2": "btd with eta=0",
    "tdc_fast": "tdcpp with beta=0, kappa=1/eta, f=identity",
    "tdcpp_original": "tdcpp with kappa=1/eta, f=identity",
}


@dataclass(frozen=True, eq=False)
class LearnerState:
    lam: np.ndarray
    xi: np.ndarray
    step_index: int = 0

    @classmethod
    def initial(cls, xi0: np.ndarray, batch: int | None = None) -> "LearnerState":
        xi0 = np.asarray(xi0, dtype=float)
        if batch is not None:
            xi0 = np.tile(xi0, (batch, 1))
        return cls(np.zeros_like(xi0), xi0.copy(), 0)

    @property
    def nonfinite(self):
        """True (per batch row) once any weight has overflowed or become NaN."""
        bad = ~(np.isfinite(self.lam).all(axis=-1) & np.isfinite(self.xi).all(axis=-1))
        return bad


class FollowOn(NamedTuple):
    """Emphatic follow-on trace and the importance ratio of the previous step."""

    value: np.ndarray | float = 0.0
    rho_prev: np.ndarray | float = 1.0


# --------------------------------------------------------------------------
# step functions


def _col(x):
    """Broadcast per-row scalars against (..., n) vectors."""
    x = np.asarray(x, dtype=float)
    return x[..., None] if x.ndim else x


def _dot(u, v):
    return np.einsum("...i,...i->...", u, v)


def td_step(state: LearnerState, t: Transition, alpha) -> LearnerState:
    delta = t.td_error(state.xi)
    xi = state.xi + _col(alpha) * _col(t.rho * delta) * t.phi
    return LearnerState(state.lam, xi, state.step_index + 1)


def btd_step(state: LearnerState, t: Transition, alpha, eta: float) -> LearnerState:
    lam, xi = state.lam, state.xi
    delta = t.td_error(xi)
    p_lam = _dot(t.phi, lam)
    pn_lam = _dot(t.phi_next, lam)
    rg = t.rho * t.gamma
    lam_coef = (-1.0 + eta) * p_lam - eta * rg * pn_lam + t.rho * delta
    xi_coef = (-eta + eta * eta) * p_lam - eta * eta * rg * pn_lam + eta * t.rho * delta + p_lam
    a = _col(alpha)
    new_lam = lam + a * (_col(lam_coef) * t.phi)
    new_xi = xi + a * (_col(xi_coef) * t.phi - _col(rg * p_lam) * t.phi_next)
    return LearnerState(new_lam, new_xi, state.step_index + 1)


def tdc_slow_step(state: LearnerState, t: Transition, alpha, beta: float) -> LearnerState:
    """TDC with the slower (value) update scaled by the constant ``beta``."""
    lam, xi = state.lam, state.xi
    delta = t.td_error(xi)
    p_lam = _dot(t.phi, lam)
    rd = t.rho * delta
    a = _col(alpha)
    new_lam = lam + a * (_col(-p_lam + rd) * t.phi)
    new_xi = xi + a * beta * (_col(p_lam + rd) * t.phi - _col(t.rho * t.gamma * p_lam) * t.phi_next)
    return LearnerState(new_lam, new_xi, state.step_index + 1)


def tdc2_step(state: LearnerState, t: Transition, alpha, eta: float) -> LearnerState:
    lam, xi = state.lam, state.xi
    delta = t.td_error(xi)
    p_lam = _dot(t.phi, lam)
    rd = t.rho * delta
    a = _col(alpha)
    new_lam = lam + a * (_col(-eta * p_lam + rd) * t.phi)
    new_xi = xi + a * (_col(p_lam - eta * p_lam + rd) * t.phi - _col(t.rho * t.gamma * p_lam) * t.phi_next)
    return LearnerState(new_lam, new_xi, state.step_index + 1)


_KE_SNAP = 8 * np.finfo(float).eps


def tdcpp_step(
    state: LearnerState,
    t: Transition,
    alpha,
    eta: float,
    beta: float,
    kappa: float,
    f: RegFn = RegFn(),
) -> LearnerState:
    """Generalized TDC++ with regularizer ``f`` on the auxiliary weights.

    ``kappa = 1/eta`` with the identity regularizer recovers the original
    TDC++; additionally setting ``beta = 0`` gives single-time-scale TDC.
    """
    if eta <= 0:
        raise InvalidHyper("tdcpp requires eta > 0")
    lam, xi = state.lam, state.xi
    delta = t.td_error(xi)
    p_lam = _dot(t.phi, lam)
    rd = t.rho * delta
    f_lam = apply_reg_fn(f, lam)
    a = _col(alpha)
    new_lam = lam + a * eta * (_col(-p_lam + rd) * t.phi - beta * f_lam)
    ke = kappa * eta
    # kappa = 1/eta cannot always be represented so that kappa * eta == 1; snap
    # products within a few ulps of 1 so the reduction to TDC++ holds exactly
    if abs(1.0 - ke) <= _KE_SNAP:
        ke = 1.0
    new_xi = xi + a * (
        _col(rd) * t.phi
        - _col(t.rho * t.gamma * p_lam) * t.phi_next
        - ke * beta * f_lam
        + _col((1.0 - ke) * (p_lam - rd)) * t.phi
    )
    return LearnerState(new_lam, new_xi, state.step_index + 1)


def etd_step(state: LearnerState, t: Transition, alpha, follow_on: FollowOn) -> tuple[LearnerState, FollowOn]:
    """Emphatic TD(0) with unit interest (baseline, not a backstepping design)."""
    F = t.gamma * np.asarray(follow_on.rho_prev) * np.asarray(follow_on.value) + 1.0
    delta = t.td_error(state.xi)
    xi = state.xi + _col(alpha) * _col(F * t.rho * delta) * t.phi
    return LearnerState(state.lam, xi, state.step_index + 1), FollowOn(F, t.rho)


def step(spec: AlgoSpec, state: LearnerState, t: Transition, alpha, aux=None):
    """Dispatch one update for ``spec``; returns ``(state, aux)``.

    ``aux`` is the ETD follow-on trace and ``None`` for every other family.
    """
    fam = spec.family
    if fam == "td":
        return td_step(state, t, alpha), None
    if fam == "etd":
        return etd_step(state, t, alpha, FollowOn() if aux is None else aux)
    if fam == "btd":
        return btd_step(state, t, alpha, spec.eta), None
    if fam == "tdc_slow":
        return tdc_slow_step(state, t, alpha, spec.beta), None
    if fam == "tdc2":
        return tdc2_step(state, t, alpha, spec.eta), None
    return tdcpp_step(state, t, alpha, spec.eta, spec.beta, spec.kappa, spec.reg_fn), None


def expected_update(spec: AlgoSpec, transitions: Transition, weights: np.ndarray, lam, xi):
    """Exact expected update direction E[(lam', xi') - (lam, xi)] / alpha.

    ``transitions``/``weights`` come from ``tdcore.enumerate_transitions``.
    """
    if spec.family == "etd":
        raise InvalidHyper("etd has no memoryless expected update")
    k = np.asarray(weights).shape[0]
    lam = np.asarray(lam, dtype=float)
    xi = np.asarray(xi, dtype=float)
    state = LearnerState(np.broadcast_to(lam, (k, lam.size)), np.broadcast_to(xi, (k, xi.size)))
    new, _ = step(spec, state, transitions, 1.0)
    d_lam = weights @ (new.lam - state.lam)
    d_xi = weights @ (new.xi - state.xi)
    return d_lam, d_xi

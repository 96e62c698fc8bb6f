"""Hyperparameter conditions and numerical stability tests for the closed loops.

Minimum eigenvalues of the (possibly nonsymmetric) matrices A and C are
taken on their symmetric parts, which is what the quadratic-form arguments
behind the conditions use.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numkit
from .errors import SingularC, SingularMatrix
from .learners import RegFn, apply_reg_fn
from .odelab import OdeSystem
from .tdcore import KeyMatrices

HURWITZ_MARGIN = 1e-9


@dataclass(frozen=True)
class ConditionReport:
    condition_id: str
    satisfied: bool
    threshold: float
    value: float
    detail: str = ""
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("threshold", "value"):
            d[key] = _json_float(d[key])
        d["extras"] = {k: _json_float(v) if isinstance(v, float) else v for k, v in self.extras.items()}
        return d


def _json_float(x: float):
    return None if x is None or not math.isfinite(x) else float(x)


def _lmin_sym(m: np.ndarray) -> float:
    return numkit.eig_sym_extreme(numkit.sym_part(m))[0]


def _lmax_sym(m: np.ndarray) -> float:
    return numkit.eig_sym_extreme(numkit.sym_part(m))[1]


def check_eta_tdc(km: KeyMatrices, eta: float) -> ConditionReport:
    """eta > max(0, -lambda_min(C^-1 (A + A^T)/2)) for single-time-scale TDC and TDC2."""
    try:
        c_inv = numkit.inverse(km.C)
    except SingularMatrix as exc:
        raise SingularC("C is singular; the eta condition is undefined") from exc
    spec = numkit.eig_general(c_inv @ numkit.sym_part(km.A))
    # C^-1 S is similar to a symmetric matrix, so its spectrum is real up to rounding
    scale = max(1.0, float(np.max(np.abs(spec.values))))
    real = spec.eigen_real[np.abs(spec.eigen_imag) <= 1e-8 * scale]
    lam_min = float(np.min(real if real.size else spec.eigen_real))
    threshold = max(0.0, -lam_min)
    ok = eta > threshold
    return ConditionReport(
        "eta_tdc",
        bool(ok),
        threshold,
        float(eta),
        f"eta={eta:g} {'>' if ok else '<='} max(0, -lambda_min(C^-1 symA)) = {threshold:.6g}",
        {"lambda_min": lam_min},
    )


def check_beta_tdc_slow(km: KeyMatrices, beta: float) -> ConditionReport:
    """0 < beta < -lambda_min(C)/lambda_min(A) when lambda_min(A) < 0, otherwise beta > 0."""
    la = _lmin_sym(km.A)
    lc = _lmin_sym(km.C)
    if la < 0:
        upper = -lc / la
        ok = 0.0 < beta < upper
        detail = f"requires 0 < beta < -lambda_min(C)/lambda_min(symA) = {upper:.6g}"
    else:
        upper = math.inf
        ok = beta > 0.0
        detail = "lambda_min(symA) >= 0, requires beta > 0"
    return ConditionReport(
        "beta_tdc_slow", bool(ok), upper, float(beta), detail, {"lambda_min_A": la, "lambda_min_C": lc}
    )


def check_tdcpp(km: KeyMatrices, eta: float, beta: float, kappa: float) -> ConditionReport:
    """beta + kappa * lambda_min(A) > lambda_min(C), together with eta > 0."""
    la = _lmin_sym(km.A)
    lc = _lmin_sym(km.C)
    lhs = beta + kappa * la
    ok = eta > 0 and lhs > lc
    # reported threshold is the smallest admissible beta for this kappa
    threshold = lc - kappa * la
    detail = f"beta + kappa*lambda_min(symA) = {lhs:.6g} vs lambda_min(C) = {lc:.6g}; eta={eta:g}"
    return ConditionReport(
        "tdcpp", bool(ok), threshold, float(beta), detail, {"lambda_min_A": la, "lambda_min_C": lc, "lhs": lhs}
    )


def check_nonlinear(km: KeyMatrices, eta: float, beta: float, kappa: float, c: float = 1.0) -> ConditionReport:
    """kappa and beta bounds for TDC++ with a regularizer of growth constant ``c``.

    The kappa bound is printed as the product -lambda_min(C)*lambda_min(symA);
    a ratio -lambda_min(C)/lambda_min(symA) is the likely intent. ``satisfied``
    follows the product reading and ``extras['alternate_satisfied']`` the
    ratio reading.
    """
    la = _lmin_sym(km.A)
    lc = _lmin_sym(km.C)
    beta_bound = _lmax_sym(km.C + kappa * km.A) / c
    beta_ok = beta < beta_bound
    if la < 0:
        k_product = -lc * la
        k_ratio = -lc / la
        kp_ok = 0.0 < kappa < k_product
        kr_ok = 0.0 < kappa < k_ratio
    else:
        k_product = k_ratio = math.inf
        kp_ok = kr_ok = kappa > 0.0
    ok = eta > 0 and kp_ok and beta_ok
    alt = eta > 0 and kr_ok and beta_ok
    detail = (
        f"product reading: 0 < kappa < {k_product:.6g} ({kp_ok}); "
        f"ratio reading: 0 < kappa < {k_ratio:.6g} ({kr_ok}); "
        f"beta < lambda_max(sym(C + kappa A))/c = {beta_bound:.6g} ({beta_ok})"
    )
    return ConditionReport(
        "nonlinear",
        bool(ok),
        k_product,
        float(kappa),
        detail,
        {
            "alternate_satisfied": bool(alt),
            "kappa_bound_ratio": k_ratio,
            "beta_bound": beta_bound,
            "beta": float(beta),
        },
    )


def is_hurwitz(M) -> tuple[bool, float]:
    """(all eigenvalue real parts < -1e-9, largest real part)."""
    max_re = numkit.eig_general(M).max_real
    return bool(max_re < -HURWITZ_MARGIN), max_re


# --------------------------------------------------------------------------
# Lyapunov sampling


@dataclass(frozen=True)
class LyapunovResult:
    passed: bool
    max_vdot: float
    witness: np.ndarray | None
    samples: int
    detail: str

    def __bool__(self) -> bool:
        return self.passed


def sphere_points(count: int, dim: int, seed: int = 0) -> np.ndarray:
    """Low-discrepancy points on the unit sphere in R^dim (Halton + Gaussian map)."""
    from scipy.stats import norm, qmc

    u = qmc.Halton(d=dim, scramble=True, seed=seed).random(count)
    g = norm.ppf(np.clip(u, 1e-12, 1.0 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def lyapunov_sample_check(
    sys: OdeSystem,
    km: KeyMatrices,
    eta: float,
    beta: float,
    kappa: float,
    samples: int = 10_000,
    radii: tuple[float, ...] = (0.1, 1.0, 10.0),
    tol: float = 1e-12,
    seed: int = 0,
) -> LyapunovResult:
    """Sample V' for V = |lambda|^2/(2 eta) + |x - kappa lambda|^2/2 along ``sys``.

    ``samples`` points are spread across the radii (in the joint (lambda, x)
    space). Passing only means no counterexample was found.
    """
    n = km.n
    per = max(1, samples // len(radii))
    pts = sphere_points(per, 2 * n, seed)
    worst = -math.inf
    witness = None
    total = 0
    for r in radii:
        for p in r * pts:
            lam, x = p[:n], p[n:]
            y = np.concatenate([lam, x + km.xi_star])
            dy = sys.rhs(y)
            z = x - kappa * lam
            grad_lam = lam / eta - kappa * z
            vdot = float(grad_lam @ dy[:n] + z @ dy[n:])
            total += 1
            if vdot > worst:
                worst = vdot
                witness = np.concatenate([lam, x])
    passed = worst <= tol
    detail = (
        f"no counterexample found in {total} samples" if passed else f"V' = {worst:.3g} > 0 at witness"
    )
    return LyapunovResult(passed, worst, None if passed else witness, total, detail)


def vdot_formula(km: KeyMatrices, lam: np.ndarray, beta: float, kappa: float, f: RegFn = RegFn()) -> float:
    """Closed form V' = -lambda^T (C + kappa A) lambda - beta lambda^T f(lambda) (x-independent)."""
    lam = np.asarray(lam, dtype=float)
    return float(-lam @ (km.C + kappa * km.A) @ lam - beta * lam @ apply_reg_fn(f, lam))

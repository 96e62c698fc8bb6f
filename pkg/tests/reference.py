"""Independent transcriptions of the baseline update rules, used as test oracles.

The scalar versions use plain Python sums. The ``*_vec`` versions use the
same dot-product primitive as the package so that algebraic reductions can
be compared at the level of a few rounding errors.
"""

from __future__ import annotations

import numpy as np


def _dot(u, v):
    return sum(float(a) * float(b) for a, b in zip(u, v))


def gtd2(lam, xi, phi, phi_next, r, rho, gamma, alpha):
    delta = r + gamma * _dot(phi_next, xi) - _dot(phi, xi)
    p = _dot(phi, lam)
    new_lam = [l + alpha * ((rho * delta - p) * f) for l, f in zip(lam, phi)]
    new_xi = [x + alpha * (p * f - rho * gamma * p * g) for x, f, g in zip(xi, phi, phi_next)]
    return np.array(new_lam), np.array(new_xi)


def tdc_fast(lam, xi, phi, phi_next, r, rho, gamma, alpha, eta):
    """Single-time-scale TDC: the auxiliary step is eta times the value step."""
    delta = r + gamma * _dot(phi_next, xi) - _dot(phi, xi)
    p = _dot(phi, lam)
    new_lam = [l + alpha * eta * ((-p + rho * delta) * f) for l, f in zip(lam, phi)]
    new_xi = [x + alpha * (rho * delta * f - rho * gamma * p * g) for x, f, g in zip(xi, phi, phi_next)]
    return np.array(new_lam), np.array(new_xi)


def tdcpp_original(lam, xi, phi, phi_next, r, rho, gamma, alpha, eta, beta):
    """TDC++ with the regularizer entering the value update as -beta * lam."""
    delta = r + gamma * _dot(phi_next, xi) - _dot(phi, xi)
    p = _dot(phi, lam)
    new_lam = [l + alpha * eta * ((-p + rho * delta) * f - beta * l) for l, f in zip(lam, phi)]
    new_xi = [
        x + alpha * (rho * delta * f - rho * gamma * p * g - beta * l) for x, f, g, l in zip(xi, phi, phi_next, lam)
    ]
    return np.array(new_lam), np.array(new_xi)


def btd(lam, xi, phi, phi_next, r, rho, gamma, alpha, eta):
    delta = r + gamma * _dot(phi_next, xi) - _dot(phi, xi)
    p = _dot(phi, lam)
    pn = _dot(phi_next, lam)
    new_lam = [l + alpha * (((-1 + eta) * p - eta * rho * gamma * pn) * f + rho * delta * f) for l, f in zip(lam, phi)]
    new_xi = [
        x
        + alpha
        * (((-eta + eta**2) * p - eta**2 * rho * gamma * pn) * f + eta * rho * delta * f + (p * f - rho * gamma * p * g))
        for x, f, g in zip(xi, phi, phi_next)
    ]
    return np.array(new_lam), np.array(new_xi)


def _vdot(u, v):
    return np.einsum("...i,...i->...", u, v)


def tdc_fast_vec(lam, xi, phi, phi_next, r, rho, gamma, alpha, eta):
    delta = r + gamma * _vdot(phi_next, xi) - _vdot(phi, xi)
    p = _vdot(phi, lam)
    new_lam = lam + alpha * eta * ((-p + rho * delta) * phi)
    new_xi = xi + alpha * (rho * delta * phi - rho * gamma * p * phi_next)
    return new_lam, new_xi


def tdcpp_original_vec(lam, xi, phi, phi_next, r, rho, gamma, alpha, eta, beta):
    delta = r + gamma * _vdot(phi_next, xi) - _vdot(phi, xi)
    p = _vdot(phi, lam)
    new_lam = lam + alpha * eta * ((-p + rho * delta) * phi - beta * lam)
    new_xi = xi + alpha * (rho * delta * phi - rho * gamma * p * phi_next - beta * lam)
    return new_lam, new_xi


def gtd2_vec(lam, xi, phi, phi_next, r, rho, gamma, alpha):
    delta = r + gamma * _vdot(phi_next, xi) - _vdot(phi, xi)
    p = _vdot(phi, lam)
    new_lam = lam + alpha * ((rho * delta - p) * phi)
    new_xi = xi + alpha * (p * phi - rho * gamma * p * phi_next)
    return new_lam, new_xi

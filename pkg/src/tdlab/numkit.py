"""Dense real linear algebra and RK4 integration for desk-scale problems.

Matrices and vectors are plain ``float64`` numpy arrays. The routines here
are deliberately self-contained (no LAPACK eigen-solvers) so results are
deterministic and easy to audit; matrices in this package never exceed a
few dozen rows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NoConvergence, NonFiniteState, NotSymmetric, SingularMatrix

DIVERGENCE_SENTINEL = 1e12
MAX_EIG_DIM = 64


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate and copy ``m`` into a finite 2-D float array."""
    a = np.array(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def as_vector(v, name: str = "vector") -> np.ndarray:
    a = np.array(v, dtype=float)
    if a.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


# --------------------------------------------------------------------------
# linear solve


def solve_linear(m, rhs) -> np.ndarray:
    """Solve ``m @ y = rhs`` by Gaussian elimination with scaled partial pivoting.

    One step of iterative refinement is applied to the result.

    Raises
    ------
    SingularMatrix
        If a pivot, relative to its row scale, falls below 1e-12.
    """
    a = as_matrix(m, "m")
    b = as_vector(rhs, "rhs")
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"m must be square, got {a.shape}")
    if b.shape != (n,):
        raise ValueError(f"rhs has dim {b.shape[0]}, expected {n}")
    lu, perm = _lu_factor(a)
    y = _lu_solve(lu, perm, b)
    resid = b - a @ y
    y = y + _lu_solve(lu, perm, resid)
    return y


def _lu_factor(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[0]
    lu = a.copy()
    perm = np.arange(n)
    scale = np.max(np.abs(lu), axis=1)
    if np.any(scale == 0.0):
        raise SingularMatrix("matrix has an all-zero row")
    for k in range(n):
        ratios = np.abs(lu[k:, k]) / scale[k:]
        p = k + int(np.argmax(ratios))
        if ratios[p - k] < 1e-12:
            raise SingularMatrix(f"pivot {k} below 1e-12 after row scaling")
        if p != k:
            lu[[k, p]] = lu[[p, k]]
            scale[[k, p]] = scale[[p, k]]
            perm[[k, p]] = perm[[p, k]]
        lu[k + 1 :, k] /= lu[k, k]
        lu[k + 1 :, k + 1 :] -= np.outer(lu[k + 1 :, k], lu[k, k + 1 :])
    return lu, perm


def _lu_solve(lu: np.ndarray, perm: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lu.shape[0]
    y = b[perm].copy()
    for i in range(1, n):
        y[i] -= lu[i, :i] @ y[:i]
    for i in range(n - 1, -1, -1):
        y[i] = (y[i] - lu[i, i + 1 :] @ y[i + 1 :]) / lu[i, i]
    return y


def inverse(m) -> np.ndarray:
    a = as_matrix(m)
    n = a.shape[0]
    eye = np.eye(n)
    return np.column_stack([solve_linear(a, eye[:, j]) for j in range(n)])


# --------------------------------------------------------------------------
# general eigenvalues


@dataclass(frozen=True)
class Spectrum:
    eigen_real: np.ndarray
    eigen_imag: np.ndarray

    def __post_init__(self):
        if self.eigen_real.shape != self.eigen_imag.shape:
            raise ValueError("real and imaginary parts must pair up")

    @property
    def values(self) -> np.ndarray:
        return self.eigen_real + 1j * self.eigen_imag

    @property
    def max_real(self) -> float:
        return float(np.max(self.eigen_real))

    @property
    def min_real(self) -> float:
        return float(np.min(self.eigen_real))

    def __len__(self) -> int:
        return len(self.eigen_real)


def eig_general(m) -> Spectrum:
    """Eigenvalues of a real square matrix.

    Balancing, Householder reduction to upper Hessenberg form, then the
    Francis double-shift QR iteration with deflation.
    """
    a = as_matrix(m, "m")
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"m must be square, got {a.shape}")
    if n > MAX_EIG_DIM:
        raise ValueError(f"eig_general is limited to n <= {MAX_EIG_DIM}")
    if n == 0:
        return Spectrum(np.zeros(0), np.zeros(0))
    # scale by a power of two into a safe range so tiny or huge entries
    # cannot underflow or overflow inside the shifted QR sweeps
    peak = float(np.max(np.abs(a)))
    scale = 2.0 ** np.round(np.log2(peak)) if peak > 0 else 1.0
    h = hessenberg(balance(a / scale))
    wr, wi = _hqr(h)
    wr, wi = wr * scale, wi * scale
    order = np.lexsort((wi, wr))
    return Spectrum(wr[order], wi[order])


def balance(m: np.ndarray) -> np.ndarray:
    """Similarity-scale rows/columns by powers of two to equalize their norms."""
    a = np.array(m, dtype=float)
    n = a.shape[0]
    radix = 2.0
    sqrdx = radix * radix
    done = False
    while not done:
        done = True
        for i in range(n):
            c = np.sum(np.abs(a[:, i])) - abs(a[i, i])
            r = np.sum(np.abs(a[i, :])) - abs(a[i, i])
            if c == 0.0 or r == 0.0:
                continue
            g = r / radix
            f = 1.0
            s = c + r
            while c < g:
                f *= radix
                c *= sqrdx
            g = r * radix
            while c > g:
                f /= radix
                c /= sqrdx
            if (c + r) / f < 0.95 * s:
                done = False
                a[i, :] /= f
                a[:, i] *= f
    return a


def hessenberg(m: np.ndarray) -> np.ndarray:
    """Householder similarity reduction to upper Hessenberg form."""
    h = np.array(m, dtype=float)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x.copy()
        v[0] += np.copysign(alpha, x[0])
        vn = np.linalg.norm(v)
        if vn == 0.0:
            continue
        v /= vn
        h[k + 1 :, :] -= 2.0 * np.outer(v, v @ h[k + 1 :, :])
        h[:, k + 1 :] -= 2.0 * np.outer(h[:, k + 1 :] @ v, v)
        h[k + 2 :, k] = 0.0
    return h


def _hqr(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # 1-based indexing (padded) keeps the classic EISPACK/NR loop structure intact.
    n = h.shape[0]
    a = np.zeros((n + 1, n + 1))
    a[1:, 1:] = h
    wr = np.zeros(n + 1)
    wi = np.zeros(n + 1)
    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i, j])
    nn = n
    t = 0.0
    total_its = 0
    max_its = 100 * n
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1, ll - 1]) + abs(a[ll, ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll, ll - 1]) + s == s:
                    a[ll, ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn, nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1, nn - 1]
            w = a[nn, nn - 1] * a[nn - 1, nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = np.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + np.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break
            if total_its >= max_its:
                raise NoConvergence(f"QR iteration exceeded {max_its} sweeps")
            if its in (10, 20):
                # exceptional shift
                t += x
                for i in range(1, nn + 1):
                    a[i, i] -= x
                s = abs(a[nn, nn - 1]) + abs(a[nn - 1, nn - 2])
                y = x = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total_its += 1
            m = nn - 2
            while m >= l:
                z = a[m, m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1, m] + a[m, m + 1]
                q = a[m + 1, m + 1] - z - r - s
                r = a[m + 2, m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m, m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1, m - 1]) + abs(z) + abs(a[m + 1, m + 1]))
                if u + v == v:
                    break
                m -= 1
            for i in range(m + 2, nn + 1):
                a[i, i - 2] = 0.0
                if i != m + 2:
                    a[i, i - 3] = 0.0
            for k in range(m, nn):
                if k != m:
                    p = a[k, k - 1]
                    q = a[k + 1, k - 1]
                    r = a[k + 2, k - 1] if k != nn - 1 else 0.0
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = np.copysign(np.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k, k - 1] = -a[k, k - 1]
                else:
                    a[k, k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                # row transformation
                cols = slice(k, nn + 1)
                pr = a[k, cols] + q * a[k + 1, cols]
                if k != nn - 1:
                    pr = pr + r * a[k + 2, cols]
                    a[k + 2, cols] -= pr * z
                a[k + 1, cols] -= pr * y
                a[k, cols] -= pr * x
                # column transformation
                mmin = min(nn, k + 3)
                rows = slice(l, mmin + 1)
                pc = x * a[rows, k] + y * a[rows, k + 1]
                if k != nn - 1:
                    pc = pc + z * a[rows, k + 2]
                    a[rows, k + 2] -= pc * r
                a[rows, k + 1] -= pc * q
                a[rows, k] -= pc
    return wr[1:].copy(), wi[1:].copy()


# --------------------------------------------------------------------------
# symmetric extremes


def eig_sym(m, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    a = as_matrix(m, "m")
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"m must be square, got {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9 * max(scale, np.finfo(float).tiny):
        raise NotSymmetric("matrix is not symmetric; pass (m + m.T) / 2")
    a = 0.5 * (a + a.T)
    thresh = tol * max(1.0, np.linalg.norm(a))
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(np.diag(a)))
        if off <= thresh:
            return np.sort(np.diag(a))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                h = a[q, q] - a[p, p]
                g = 100.0 * abs(apq)
                if abs(a[p, p]) + g == abs(a[p, p]) and abs(a[q, q]) + g == abs(a[q, q]):
                    a[p, q] = a[q, p] = 0.0
                    continue
                if abs(h) + g == abs(h):
                    tt = apq / h
                else:
                    theta = 0.5 * h / apq
                    tt = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(tt * tt + 1.0)
                s = tt * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
    raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")


def eig_sym_extreme(m) -> tuple[float, float]:
    """(lambda_min, lambda_max) of a symmetric matrix."""
    vals = eig_sym(m)
    return float(vals[0]), float(vals[-1])


def sym_part(m) -> np.ndarray:
    a = as_matrix(m)
    return 0.5 * (a + a.T)


# --------------------------------------------------------------------------
# ODE integration


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_samples, dim)
    diverged: bool

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def __iter__(self):
        return iter(zip(self.times, self.states))


def rk4_integrate(
    rhs: Callable[[np.ndarray], np.ndarray],
    y0,
    t_end: float,
    dt: float,
    sentinel: float = DIVERGENCE_SENTINEL,
) -> Trajectory:
    """Classical fourth-order Runge-Kutta for an autonomous system.

    Every step is recorded, including ``t=0`` and ``t_end`` (the final step
    is shortened if ``t_end`` is not a multiple of ``dt``). Integration stops
    early, with ``diverged=True``, once any component exceeds ``sentinel``.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if t_end < dt:
        raise ValueError("t_end must be at least dt")
    y = as_vector(y0, "y0").copy()
    n_steps = int(np.ceil(t_end / dt - 1e-9))
    times = np.empty(n_steps + 1)
    states = np.empty((n_steps + 1, y.size))
    times[0] = 0.0
    states[0] = y
    t = 0.0
    diverged = False

    def f(v):
        out = np.asarray(rhs(v), dtype=float)
        if not np.all(np.isfinite(out)):
            raise NonFiniteState(f"rhs returned non-finite values at t={t:g}")
        return out

    count = 0
    for i in range(1, n_steps + 1):
        h = min(dt, t_end - t) if i == n_steps else dt
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t_end if i == n_steps else i * dt
        times[i] = t
        states[i] = y
        count = i
        if np.max(np.abs(y)) > sentinel:
            diverged = True
            break
    return Trajectory(times[: count + 1].copy(), states[: count + 1].copy(), diverged)

"""Maximum likelihood fitting with boundary handling and status codes.

Status codes:

==== ==========================================================================
00   optimizer converged; no issues
01   optimizer converged; the information matrix is singular or indefinite
10   optimizer did not converge; estimates are finite
11   optimizer did not converge; the information matrix is singular or indefinite
20   some estimates are +/-inf (observed statistic on the support boundary)
21   as 20, and the remaining information matrix is singular or indefinite
30   every estimate is +/-inf; the MLE does not exist; no covariance computed
==== ==========================================================================

Boundary coordinates are found before optimizing: a coordinate is at its
maximum (minimum) when the pooled observed statistic equals the pooled
support maximum (minimum).  The remaining coordinates are then maximized
with the boundary ones held at ``sign * L``, which is the finite stand-in for
the limiting likelihood.  Their Hessian rows and columns are zeroed, so the
Moore-Penrose inverse gives them zero variance.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .likelihood import (
    PooledData,
    build_pooled,
    gradient_pooled,
    hessian_pooled,
    loglik_and_gradient,
    loglik_pooled,
)
from .tables import TableCache
from .terms import ModelSpec

STATUS_MESSAGES = {
    "00": "converged; no issues",
    "01": "converged; information matrix singular or not positive definite",
    "10": "did not converge; estimates are finite",
    "11": "did not converge; information matrix singular or not positive definite",
    "20": "some estimates replaced by +/-inf (boundary of the support)",
    "21": "some estimates replaced by +/-inf; remaining information matrix singular",
    "30": "all estimates are +/-inf; the MLE does not exist",
}
FAILED_STATUSES = ("20", "21", "30")

AT_MIN, AT_MAX, INTERIOR = "at-min", "at-max", "interior"

PINV_RCOND = 1e-10
BOUNDARY_RULE = ("a coordinate is on the boundary when its pooled observed statistic equals "
                 "the pooled minimum or maximum of its (transformed) column over the supports")
PSD_RTOL = 1e-10


@dataclass
class FitOptions:
    init: np.ndarray | None = None
    gtol: float = 1e-8
    maxiter: int = 200
    large_value: float = 1e5

    def __post_init__(self):
        if self.gtol <= 0 or self.maxiter <= 0 or self.large_value <= 0:
            raise ValueError("fit tolerances and limits must be positive")


@dataclass(eq=False)
class FitResult:
    theta: np.ndarray
    vcov: np.ndarray | None
    loglik: float
    gradient: np.ndarray
    boundary: tuple[str, ...]
    status: str
    converged: bool
    iterations: int
    names: list[str]
    model: ModelSpec
    data: PooledData = field(repr=False)
    large_value: float = 1e5

    @property
    def k(self) -> int:
        return len(self.theta)

    @property
    def message(self) -> str:
        return STATUS_MESSAGES[self.status]

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.theta)))

    @property
    def theta_substituted(self) -> np.ndarray:
        """Estimates with +/-inf replaced by the large finite stand-in."""
        return _substitute(self.theta, self.large_value)

    @property
    def n_obs(self) -> int:
        return self.data.dyads

    @property
    def model_fingerprint(self) -> str:
        return hashlib.sha256(
            f"{self.model.formula()}|{int(self.model.directed)}".encode()
        ).hexdigest()

    @property
    def data_fingerprint(self) -> str:
        return self.data.fingerprint

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.model_fingerprint.encode())
        h.update(self.data_fingerprint.encode())
        h.update(np.asarray(self.theta, "<f8").tobytes())
        if self.vcov is not None:
            h.update(np.asarray(self.vcov, "<f8").tobytes())
        h.update(np.float64(self.loglik).tobytes())
        h.update(f"{self.status}|{self.iterations}|{self.boundary}".encode())
        return h.hexdigest()

    def coef_table(self) -> list[dict]:
        se, z, p = standard_errors(self)
        return [
            {
                "term": name,
                "estimate": float(self.theta[j]),
                "se": float(se[j]),
                "z": float(z[j]),
                "p": float(p[j]),
                "boundary": self.boundary[j],
            }
            for j, name in enumerate(self.names)
        ]

    def summary(self) -> str:
        lines = [f"model: {self.model.formula()}", f"status {self.status}: {self.message}"]
        lines.append(f"{'term':<28}{'estimate':>12}{'se':>10}{'z':>9}{'p':>9}")
        for row in self.coef_table():
            lines.append(
                f"{row['term']:<28}{row['estimate']:>12.4f}{row['se']:>10.4f}"
                f"{row['z']:>9.3f}{row['p']:>9.4f}"
            )
        lines.append(f"log-likelihood: {self.loglik:.4f}")
        return "\n".join(lines)


def _substitute(theta: np.ndarray, large: float) -> np.ndarray:
    t = np.array(theta, dtype=np.float64)
    inf = ~np.isfinite(t)
    t[inf] = np.sign(t[inf]) * large
    return t


def check_boundary(data: PooledData) -> tuple[str, ...]:
    """Per-coordinate boundary flag of the pooled observed statistics.

    A column that is constant over every support is reported as interior;
    it is unidentified and shows up as a singular information matrix.
    """
    lo = np.zeros(data.k)
    hi = np.zeros(data.k)
    for net in data.networks:
        lo += net.table.Q.min(axis=0)
        hi += net.table.Q.max(axis=0)
    obs = data.observed
    tol = 1e-9 * np.maximum(1.0, np.abs(hi) + np.abs(lo))
    flags = []
    for j in range(data.k):
        if hi[j] - lo[j] <= tol[j]:
            flags.append(INTERIOR)
        elif obs[j] >= hi[j] - tol[j]:
            flags.append(AT_MAX)
        elif obs[j] <= lo[j] + tol[j]:
            flags.append(AT_MIN)
        else:
            flags.append(INTERIOR)
    return tuple(flags)


# --- optimizer -------------------------------------------------------------------


@dataclass
class _OptResult:
    x: np.ndarray
    f: float
    g: np.ndarray
    converged: bool
    iterations: int


def bfgs_minimize(fg, x0, gtol=1e-8, maxiter=200) -> _OptResult:
    """BFGS with an Armijo backtracking line search.

    ``fg(x)`` returns ``(f, grad)``.  Convergence means ``max|grad| < gtol``.
    """
    x = np.array(x0, dtype=np.float64)
    f, g = fg(x)
    n = x.size
    hinv = np.eye(n)
    first = True
    for it in range(maxiter):
        if np.max(np.abs(g)) < gtol:
            return _OptResult(x, f, g, True, it)
        p = -hinv @ g
        slope = g @ p
        if not slope < 0:
            hinv = np.eye(n)
            p, slope = -g, -(g @ g)
        t = 1.0
        if first:
            t = min(1.0, 1.0 / max(np.max(np.abs(p)), 1e-300))
        accepted = False
        for _ in range(60):
            x_new = x + t * p
            f_new, g_new = fg(x_new)
            if np.isfinite(f_new) and f_new <= f + 1e-4 * t * slope:
                accepted = True
                break
            # decrease below the resolution of f: fall back to the gradient norm
            if (np.isfinite(f_new) and f_new - f <= 8 * np.finfo(float).eps * abs(f)
                    and np.max(np.abs(g_new)) < np.max(np.abs(g))):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # no further decrease representable; accept only if already stationary
            return _OptResult(x, f, g, bool(np.max(np.abs(g)) < gtol), it)
        s = x_new - x
        y = g_new - g
        sy = s @ y
        if sy > 1e-14 * max(1.0, np.sqrt((s @ s) * (y @ y))):
            if first:
                hinv = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            v = np.eye(n) - rho * np.outer(s, y)
            hinv = v @ hinv @ v.T + rho * np.outer(s, s)
            first = False
        x, f, g = x_new, f_new, g_new
    return _OptResult(x, f, g, bool(np.max(np.abs(g)) < gtol), maxiter)


# --- fitting ---------------------------------------------------------------------


def _information_ok(info: np.ndarray) -> bool:
    if info.size == 0:
        return True
    ev = np.linalg.eigvalsh((info + info.T) / 2)
    top = max(np.max(np.abs(ev)), np.finfo(float).tiny)
    return bool(ev.min() > PSD_RTOL * top)


def fit_pooled(data: PooledData, opts: FitOptions | None = None) -> FitResult:
    """Maximize the pooled likelihood of prepared data.  Never raises on
    numerical trouble; the outcome is encoded in ``status``."""
    opts = opts or FitOptions()
    k = data.k
    flags = check_boundary(data)
    fixed = np.array([f != INTERIOR for f in flags])
    free = ~fixed
    sign = np.array([1.0 if f == AT_MAX else -1.0 if f == AT_MIN else 0.0 for f in flags])

    theta0 = np.zeros(k) if opts.init is None else np.asarray(opts.init, dtype=np.float64).copy()
    if theta0.shape != (k,):
        raise ValueError(f"initial theta has shape {theta0.shape}, expected ({k},)")
    theta0 = np.where(np.isfinite(theta0), theta0, 0.0)
    theta0[fixed] = sign[fixed] * opts.large_value

    converged, iterations = True, 0
    theta = theta0
    if free.any():
        def fg(x):
            t = theta0.copy()
            t[free] = x
            ll, g = loglik_and_gradient(t, data)
            return -ll, -g[free]

        res = bfgs_minimize(fg, theta0[free], opts.gtol, opts.maxiter)
        iterations = res.iterations
        if not res.converged:
            jitter = np.random.default_rng(0).normal(scale=0.1, size=int(free.sum()))
            res2 = bfgs_minimize(fg, jitter, opts.gtol, opts.maxiter)
            iterations += res2.iterations
            if res2.converged or res2.f < res.f:
                res = res2
        converged = res.converged
        theta = theta0.copy()
        theta[free] = res.x

    ll = loglik_pooled(theta, data)
    grad = gradient_pooled(theta, data)
    theta_hat = theta.copy()
    theta_hat[fixed] = sign[fixed] * np.inf

    if not free.any():
        return FitResult(theta_hat, None, ll, grad, flags, "30", converged, iterations,
                         data.model.names, data.model, data, opts.large_value)

    hess = hessian_pooled(theta, data)
    hess[fixed, :] = 0.0
    hess[:, fixed] = 0.0
    info = -hess
    vcov = np.linalg.pinv(info, rcond=PINV_RCOND, hermitian=True)
    vcov = (vcov + vcov.T) / 2
    ok = _information_ok(info[np.ix_(free, free)])
    if fixed.any():
        status = "20" if ok else "21"
    elif converged:
        status = "00" if ok else "01"
    else:
        status = "10" if ok else "11"
    return FitResult(theta_hat, vcov, ll, grad, flags, status, converged, iterations,
                     data.model.names, data.model, data, opts.large_value)


def fit_mle(sample, model: ModelSpec, opts: FitOptions | None = None,
            cache: TableCache | None = None) -> FitResult:
    """Fit ``model`` to a sample of ``(Graph, AttributeTable)`` pairs."""
    return fit_pooled(build_pooled(sample, model, cache), opts)


def vcov_of(fit: FitResult) -> np.ndarray:
    if fit.status == "30" or fit.vcov is None:
        raise ValueError("no variance-covariance matrix: every estimate diverged (status 30)")
    return fit.vcov


def standard_errors(fit: FitResult) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Standard errors, Wald z statistics and two-sided normal p-values.

    Boundary coordinates get a zero standard error and NaN z and p.  With
    status 30 everything is NaN except the zero standard errors.
    """
    k = fit.k
    if fit.vcov is None:
        return np.zeros(k), np.full(k, np.nan), np.full(k, np.nan)
    se = np.sqrt(np.clip(np.diag(fit.vcov), 0.0, None))
    z = np.full(k, np.nan)
    ok = np.isfinite(fit.theta) & (se > 0)
    z[ok] = fit.theta[ok] / se[ok]
    p = np.full(k, np.nan)
    p[ok] = 2 * stats.norm.sf(np.abs(z[ok]))
    return se, z, p

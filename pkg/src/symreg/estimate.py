"""Maximum likelihood for symmetric and log-symmetric linear regression.

The model is ``y = X beta + phi * eps`` with ``eps ~ S(0, 1)``.  With
``z = (y - X beta)/phi`` and ``w`` the kernel weight, the log-likelihood is
``-n log(phi) + sum g(z)`` and the Fisher information is block diagonal:

    K_bb = delta_20000 / phi**2 * X'X,   K_pp = n (delta_20002 - 1) / phi**2.

Fisher scoring therefore updates

    beta <- beta + (X'X)^{-1} X' W e / delta_20000
    phi  <- phi  + (e'We/n - phi**2) / (phi (delta_20002 - 1))

starting from least squares.  The scale step is taken on ``log(phi)`` (same
fixed point, positivity for free), and both steps are halved until the
log-likelihood does not decrease.  For laws whose weight does not increase
with ``|z|`` (normal scale mixtures such as Student-t, and their relatives),
a fit that scoring leaves short of the stopping rule is finished by
reweighted least squares, an EM step with the same fixed points.

:func:`fit_batch` runs the iteration for many responses sharing one design
at once; :func:`fit` and :func:`fit_restricted` are the single-response
entry points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg

from .design import DesignPartition
from .distcore import DistributionKernel, kernel

__all__ = [
    "ConvergenceError",
    "ModelSpec",
    "FitResult",
    "BatchFit",
    "fit_batch",
    "fit",
    "fit_restricted",
    "fit_logsymmetric",
    "loglik",
    "score",
    "standard_errors",
    "aicc",
]

MAX_ITER = 200
LOGLIK_RTOL = 1e-10
GRAD_TOL = 1e-6
PHI_FLOOR = 1e-12
MAX_HALVINGS = 40
MIN_LENGTH = 1.0 / 64.0


class ConvergenceError(ArithmeticError):
    """Fisher scoring could not find an ascent step.

    Attributes
    ----------
    trace : list of float
        Log-likelihood after each accepted iteration.
    """

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


@dataclass(frozen=True)
class ModelSpec:
    """Data, error law and (optionally) the hypothesis to be tested.

    Parameters
    ----------
    response : array_like, shape (n,)
        Observed response.  With ``log_scale=True`` it must be positive and
        the symmetric model is fitted to its logarithm.
    X : array_like, shape (n, p)
        Full-rank design matrix.
    family : str or DistributionKernel
        Error law, e.g. ``"student-t:4"``.
    test : int or sequence of int, optional
        Tested coefficients (see :class:`~symreg.design.DesignPartition`).
    beta10 : array_like, optional
        Null values of the tested coefficients (zeros by default).
    """

    response: np.ndarray
    X: np.ndarray
    family: DistributionKernel
    test: tuple[int, ...] | None = None
    beta10: np.ndarray | None = None
    log_scale: bool = False
    names: tuple[str, ...] | None = None

    def __init__(self, response, X, family, test=None, beta10=None, log_scale=False, names=None):
        response = np.array(response, dtype=float).ravel()
        X = np.array(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        if X.shape[0] != response.size:
            raise ValueError(f"response has {response.size} rows, design has {X.shape[0]}")
        if not np.all(np.isfinite(response)):
            raise ValueError("response contains non-finite values")
        if log_scale:
            bad = np.flatnonzero(~(response > 0))
            if bad.size:
                raise ValueError(f"log-symmetric model needs a positive response; rows {bad.tolist()} are not")
        if test is not None:
            test = tuple(range(int(test))) if np.isscalar(test) else tuple(int(j) for j in test)
        if beta10 is not None:
            beta10 = np.atleast_1d(np.asarray(beta10, dtype=float))
        response.setflags(write=False)
        X.setflags(write=False)
        set_ = object.__setattr__
        set_(self, "response", response)
        set_(self, "X", X)
        set_(self, "family", kernel(family))
        set_(self, "test", test)
        set_(self, "beta10", beta10)
        set_(self, "log_scale", bool(log_scale))
        set_(self, "names", tuple(names) if names is not None else None)

    @cached_property
    def y(self) -> np.ndarray:
        """Response on the symmetric scale."""
        return np.log(self.response) if self.log_scale else self.response

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @cached_property
    def partition(self) -> DesignPartition:
        if self.test is None:
            raise ValueError("no tested coefficients specified")
        return DesignPartition(self.X, self.test, self.beta10, names=self.names)

    def replace_response(self, response) -> "ModelSpec":
        return ModelSpec(response, self.X, self.family, self.test, self.beta10, self.log_scale, self.names)


@dataclass(frozen=True)
class FitResult:
    """Maximum likelihood fit of one response.

    For a restricted fit ``beta_hat`` is the full coefficient vector with the
    tested block held at its null value; ``beta2_tilde``, ``phi_tilde`` and
    ``loglik_tilde`` name the fitted quantities in that case.
    """

    beta_hat: np.ndarray
    phi_hat: float
    loglik: float
    weights: np.ndarray
    residuals: np.ndarray
    standardized: np.ndarray
    iterations: int
    converged: bool
    degenerate: bool = False
    restricted: bool = False
    trace: tuple[float, ...] = ()
    median: np.ndarray | None = None
    log_jacobian: float = 0.0

    @property
    def beta2_tilde(self):
        return self.beta_hat if self.restricted else None

    @property
    def phi_tilde(self):
        return self.phi_hat if self.restricted else None

    @property
    def loglik_tilde(self):
        return self.loglik if self.restricted else None

    @property
    def loglik_response(self) -> float:
        """Log-likelihood of the original positive response (log-symmetric fits)."""
        return self.loglik + self.log_jacobian

    @property
    def multiplicative_error(self):
        """Fitted ``xi_l = exp(z_l)`` with ``t_l = median_l * xi_l**phi`` (log-symmetric fits)."""
        return None if self.median is None else np.exp(self.standardized)


@dataclass
class BatchFit:
    """Fits of the columns of a response matrix against a common design."""

    beta: np.ndarray  # (k, R)
    phi: np.ndarray  # (R,)
    loglik: np.ndarray  # (R,)
    iterations: np.ndarray  # (R,)
    converged: np.ndarray  # (R,) bool
    degenerate: np.ndarray  # (R,) bool
    trace: list | None = None

    @property
    def ok(self) -> np.ndarray:
        return self.converged & ~self.degenerate


def _loglik_cols(law, E, phi):
    n = E.shape[0]
    return -n * np.log(phi) + law.g(E / phi).sum(axis=0)


def fit_batch(
    X,
    Y,
    law,
    *,
    max_iter: int = MAX_ITER,
    rtol: float = LOGLIK_RTOL,
    gtol: float = GRAD_TOL,
    keep_trace: bool = False,
) -> BatchFit:
    """Fisher scoring for each column of ``Y`` against design ``X``.

    Parameters
    ----------
    X : ndarray, shape (n, k)
        Design; ``k = 0`` fits the scale only.
    Y : ndarray, shape (n,) or (n, R)
        Responses (offsets already subtracted).
    law : DistributionKernel

    Returns
    -------
    BatchFit
        A column is converged when the relative change of the
        log-likelihood is below ``rtol`` and the score, standardized by the
        Fisher information, is below ``gtol`` in every coordinate.
    """
    law = kernel(law)
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, R = Y.shape
    if X.ndim == 1:
        X = X[:, None]
    k = X.shape[1]
    d20000 = law.delta_20000
    v = law.delta_20002 - 1.0
    phi_std = math.sqrt(n * v)

    if k:
        Q, Rf = linalg.qr(X, mode="economic")
        beta = linalg.solve_triangular(Rf, Q.T @ Y)
        E = Y - X @ beta
    else:
        Q = Rf = None
        beta = np.zeros((0, R))
        E = Y.copy()
    scale = np.maximum(np.sqrt(np.mean(Y * Y, axis=0)), 1.0)
    phi0 = np.sqrt(np.mean(E * E, axis=0))
    degenerate = phi0 <= PHI_FLOOR * scale
    # iterate on responses standardized by the starting scale, which makes
    # the whole trajectory equivariant under y -> c y
    unit = np.where(degenerate, 1.0, phi0)
    Y = Y / unit
    beta = beta / unit
    floor = PHI_FLOOR * scale / unit
    lphi = np.where(degenerate, np.log(np.maximum(phi0 / unit, floor)), 0.0)
    ll = _loglik_cols(law, E / unit, np.exp(lphi))

    converged = np.zeros(R, dtype=bool)
    iterations = np.zeros(R, dtype=int)
    dll = np.full(R, np.inf)
    active = np.flatnonzero(~degenerate & np.isfinite(ll))
    trace = [ll.copy()] if keep_trace else None
    # step length carried across iterations: shrunk when consecutive
    # standardized scores point in opposite directions (overshoot)
    length = np.ones(R)
    prev = np.zeros((k + 1, R))

    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        Ya = Y[:, active]
        ba = beta[:, active]
        pa = np.exp(lphi[active])
        Ea = Ya - X @ ba if k else Ya
        Za = Ea / pa
        Wa = law.weight(Za)
        WZ = Wa * Za
        # score standardized by the Fisher information
        g_phi = (np.sum(WZ * Za, axis=0) - n) / phi_std
        if k:
            qwz = Q.T @ WZ
            g_beta = np.max(np.abs(qwz), axis=0) / math.sqrt(d20000)
            grad = np.maximum(g_beta, np.abs(g_phi))
        else:
            grad = np.abs(g_phi)
        cur = np.vstack([qwz / math.sqrt(d20000), g_phi]) if k else g_phi[None, :]
        flip = np.sum(cur * prev[:, active], axis=0) < 0
        length[active] = np.where(flip, np.maximum(0.5 * length[active], MIN_LENGTH),
                                  np.minimum(1.0, 1.25 * length[active]))
        prev[:, active] = cur
        done = (dll[active] < rtol) & (grad < gtol)
        converged[active[done]] = True
        iterations[active] = it - 1
        keep = ~done
        active = active[keep]
        if active.size == 0:
            break
        Ya, ba, pa, lpa = Ya[:, keep], ba[:, keep], pa[keep], lphi[active]
        step_phi = (np.mean(WZ[:, keep] * Za[:, keep], axis=0) - 1.0) / v
        step_beta = pa * linalg.solve_triangular(Rf, qwz[:, keep]) / d20000 if k else None
        old = ll[active]
        t = length[active].copy()
        pending = np.ones(active.size, dtype=bool)
        new_b = ba.copy()
        new_lp = lpa.copy()
        new_ll = np.full(active.size, -np.inf)
        for _ in range(MAX_HALVINGS):
            idx = np.flatnonzero(pending)
            cand_lp = lpa[idx] + t[idx] * step_phi[idx]
            cand_phi = np.exp(cand_lp)
            if k:
                cand_b = ba[:, idx] + t[idx] * step_beta[:, idx]
                cand_E = Ya[:, idx] - X @ cand_b
            else:
                cand_E = Ya[:, idx]
            cand_ll = _loglik_cols(law, cand_E, cand_phi)
            good = np.isfinite(cand_ll) & (cand_ll >= old[idx] - 1e-15 * np.abs(old[idx]))
            gi = idx[good]
            new_lp[gi] = cand_lp[good]
            new_ll[gi] = cand_ll[good]
            if k:
                new_b[:, gi] = cand_b[:, good]
            pending[gi] = False
            if not pending.any():
                break
            t[pending] *= 0.5
        stuck = pending
        if stuck.any():
            # no ascent direction within machine precision: the point is
            # a maximum to working accuracy, or the likelihood is broken
            new_lp[stuck] = lpa[stuck]
            new_ll[stuck] = old[stuck]
            if k:
                new_b[:, stuck] = ba[:, stuck]
        beta[:, active] = new_b
        lphi[active] = new_lp
        ll[active] = new_ll
        dll[active] = np.abs(new_ll - old) / np.maximum(1.0, np.abs(old))
        low = np.exp(new_lp) <= floor[active]
        if low.any():
            hit = active[low]
            degenerate[hit] = True
            lphi[hit] = np.log(floor[hit])
        if stuck.any():
            # a column that cannot move and is not stationary has failed
            stop = stuck & ~low
            active_mask = np.ones(active.size, dtype=bool)
            active_mask[stop] = False
            iterations[active[stop]] = it
            active = active[active_mask & ~low]
        else:
            active = active[~low]
        if keep_trace:
            trace.append(ll.copy())
    else:
        iterations[active] = max_iter
    if law.weight_nonincreasing:
        todo = np.flatnonzero(~converged & ~degenerate & np.isfinite(ll))
        if todo.size:
            history = _reweight(X, Y, law, beta, lphi, ll, todo, converged, iterations, max_iter, rtol, gtol,
                                floor)
            if keep_trace and history:
                base = trace[-1]
                for step in range(max(len(h) for h in history.values())):
                    row = base.copy()
                    for j, h in history.items():
                        if h:
                            row[j] = h[min(step, len(h) - 1)]
                    trace.append(row)
    log_unit = np.log(unit)
    if trace is not None:
        trace = [t - n * log_unit for t in trace]
    return BatchFit(
        beta=beta * unit,
        phi=np.exp(lphi + log_unit),
        loglik=ll - n * log_unit,
        iterations=iterations,
        converged=converged,
        degenerate=degenerate,
        trace=trace,
    )


def _reweight(X, Y, law, beta, lphi, ll, cols, converged, iterations, max_iter, rtol, gtol, floor):
    """Reweighted least squares from the current iterate, column by column.

    When the weight does not increase with ``|z|`` this is an EM
    (minorize-maximize) step: the log-likelihood cannot decrease and the
    fixed points are those of scoring.  It finishes fits on which scoring
    oscillates at rounding level or stalls near a cusp.  State arrays are
    updated in place; returns the log-likelihood path of each column.
    """
    n, k = X.shape
    d20000 = law.delta_20000
    phi_std = math.sqrt(n * (law.delta_20002 - 1.0))
    Q = linalg.qr(X, mode="economic")[0] if k else None
    history = {}
    for j in cols:
        y = Y[:, j]
        b = beta[:, j].copy()
        phi = math.exp(lphi[j])
        cur = float(ll[j])
        dll = math.inf
        path = []
        for _ in range(max_iter):
            e = y - X @ b if k else y
            z = e / phi
            w = law.weight(z)
            grad = abs(np.sum(w * z * z) - n) / phi_std
            if k:
                grad = max(grad, float(np.max(np.abs(Q.T @ (w * z)))) / math.sqrt(d20000))
            if dll < rtol and grad < gtol:
                converged[j] = True
                break
            if k:
                sw = np.sqrt(w)
                try:
                    nb = linalg.lstsq(X * sw[:, None], y * sw)[0]
                except (linalg.LinAlgError, ValueError):
                    break
                e = y - X @ nb
            else:
                nb = b
            nphi = math.sqrt(np.sum(w * e * e) / n)
            if not (np.all(np.isfinite(nb)) and math.isfinite(nphi) and nphi > floor[j]):
                break
            new = float(_loglik_cols(law, e[:, None], np.array([nphi]))[0])
            if not math.isfinite(new) or new < cur - 1e-12 * abs(cur):
                break
            dll = abs(new - cur) / max(1.0, abs(cur))
            b, phi, cur = nb, nphi, new
            path.append(cur)
        beta[:, j] = b
        lphi[j] = math.log(phi)
        ll[j] = cur
        iterations[j] += len(path)
        history[j] = path
    return history


def _single(spec: ModelSpec, X, offset, restricted: bool, beta_full) -> FitResult:
    law = spec.family
    y = spec.y
    bf = fit_batch(X, y - offset, law, keep_trace=True)
    beta_k = bf.beta[:, 0]
    phi = float(bf.phi[0])
    beta = beta_full(beta_k)
    resid = y - spec.X @ beta
    z = resid / phi
    trace = tuple(float(t[0]) for t in bf.trace)
    if not np.isfinite(bf.loglik[0]):
        raise ConvergenceError("log-likelihood is not finite at the starting values", trace)
    ro = lambda a: (a.setflags(write=False), a)[1]  # noqa: E731
    return FitResult(
        beta_hat=ro(beta),
        phi_hat=phi,
        loglik=float(bf.loglik[0]),
        weights=ro(np.asarray(law.weight(z), dtype=float)),
        residuals=ro(resid),
        standardized=ro(z),
        iterations=int(bf.iterations[0]),
        converged=bool(bf.converged[0]) and not bool(bf.degenerate[0]),
        degenerate=bool(bf.degenerate[0]),
        restricted=restricted,
        trace=trace,
    )


def fit(spec: ModelSpec) -> FitResult:
    """Unrestricted maximum likelihood fit.

    Returns ``converged=False`` after 200 iterations, and
    ``degenerate=True`` (with the scale at its floor) for a perfect fit.
    """
    return _single(spec, spec.X, 0.0, False, lambda b: b.copy())


def fit_restricted(spec: ModelSpec) -> FitResult:
    """Fit under the null: tested coefficients fixed at ``beta10``.

    The nuisance coefficients and the scale are estimated from the response
    ``y - X1 beta10`` on design ``X2``; with every coefficient tested only
    the scale is estimated.
    """
    part = spec.partition
    return _single(
        spec, part.X2, part.offset, True, lambda b2: part.full_beta(part.beta10, b2)
    )


def fit_logsymmetric(spec: ModelSpec) -> FitResult:
    """Fit a log-symmetric model for a positive response ``t``.

    ``log t`` follows the symmetric model, so the fit is the symmetric fit
    of ``log t``.  ``median`` holds ``exp(X beta)``, the fitted medians of
    ``t``, and ``loglik_response`` adds the Jacobian ``-sum(log t)``.
    """
    if not spec.log_scale:
        spec = ModelSpec(spec.response, spec.X, spec.family, spec.test, spec.beta10, True, spec.names)
    res = fit(spec)
    return FitResult(
        **{**res.__dict__, "median": np.exp(spec.X @ res.beta_hat), "log_jacobian": -float(np.sum(spec.y))}
    )


def loglik(spec: ModelSpec, beta, phi: float) -> float:
    """``-n log(phi) + sum g((y - X beta)/phi)`` on the symmetric scale."""
    if not phi > 0:
        raise ValueError(f"phi must be positive, got {phi!r}")
    z = (spec.y - spec.X @ np.asarray(beta, dtype=float)) / phi
    return float(-spec.n * math.log(phi) + np.sum(spec.family.g(z)))


def score(spec: ModelSpec, beta, phi: float):
    """Score vector ``(U_beta, U_phi)`` at ``(beta, phi)``."""
    e = spec.y - spec.X @ np.asarray(beta, dtype=float)
    z = e / phi
    w = spec.family.weight(z)
    u_beta = spec.X.T @ (w * e) / phi**2
    u_phi = (np.sum(w * z * z) - spec.n) / phi
    return u_beta, float(u_phi)


def standard_errors(spec: ModelSpec, result: FitResult):
    """Asymptotic standard errors from the inverse Fisher information.

    Returns ``(se_beta, se_phi)``.
    """
    law = spec.family
    Rf = linalg.qr(spec.X, mode="r")[0][: spec.p]
    rinv = linalg.solve_triangular(Rf, np.eye(spec.p))
    diag = np.sum(rinv * rinv, axis=1)
    se_beta = result.phi_hat * np.sqrt(diag / law.delta_20000)
    se_phi = result.phi_hat / math.sqrt(spec.n * (law.delta_20002 - 1.0))
    return se_beta, se_phi


def aicc(result, n: int, n_params: int) -> float:
    """Corrected AIC, ``-2 l + 2k + 2k(k + 1)/(n - k - 1)``.

    ``result`` is a :class:`FitResult` or a log-likelihood value.
    """
    ll = result.loglik if isinstance(result, FitResult) else float(result)
    k = int(n_params)
    if n - k - 1 <= 0:
        raise ValueError(f"AICc needs n - k - 1 > 0, got n={n}, k={k}")
    return -2.0 * ll + 2.0 * k + 2.0 * k * (k + 1) / (n - k - 1)

"""Wald, likelihood ratio, score and gradient statistics and their corrections.

For ``H0: beta_1 = beta_10`` with ``q`` tested coefficients, hats denote the
unrestricted fit and tildes the restricted one, ``e~ = y - X beta~`` and
``R = X1 - X2 (X2'X2)^{-1} X2'X1``:

    S_W  = delta_20000 / phi^^2 (b1^ - b10)' R'R (b1^ - b10)
    S_LR = 2 (l^ - l~)
    S_R  = e~'W~X1 (R'R)^{-1} X1'W~e~ / (phi~^2 delta_20000)
    S_T  = e~'W~X1 (b1^ - b10) / phi~^2

The corrected statistics are

    S_LR* = S_LR (1 - a_LR)
    S_R*  = S_R  [1 - (c_R + b_R S_R)]
    S_T*  = S_T  [1 - (c_T + b_T S_T)]

with coefficients of order 1/n that depend only on the design (through the
rho sums of :mod:`symreg.design`) and on the error law (through the d/b/c
constants of :mod:`symreg.distcore`).  The cubic terms ``a_R`` and ``a_T``
vanish identically in these models.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg, stats

from .design import DesignPartition, RhoSet
from .distcore import CorrectionConstants, UnsupportedCorrection, correction_constants, kernel
from .estimate import BatchFit, ConvergenceError, FitResult, ModelSpec, fit, fit_restricted

__all__ = [
    "CorrectionCoefficients",
    "TestReport",
    "correction_coefficients",
    "statistics",
    "statistics_batch",
    "bartlett_lr",
    "bartlett_type_score",
    "bartlett_type_gradient",
    "chisq_pvalue",
    "run_tests",
    "STAT_NAMES",
]

RAW = ("s_w", "s_lr", "s_r", "s_t")
CORRECTED = ("s_lr_star", "s_r_star", "s_t_star")
STAT_NAMES = RAW + CORRECTED


@dataclass(frozen=True)
class CorrectionCoefficients:
    """Correction coefficients and the A terms they are built from.

    ``A_R11 = A_R1 + A_R1bp`` and ``A_R22 = A_R2 + A_R2bp`` (likewise for
    the gradient), where the ``bp`` terms come from estimating the scale and
    are zero when it is known.
    """

    a_lr: float
    a_r: float
    b_r: float
    c_r: float
    a_t: float
    b_t: float
    c_t: float
    A_lr: float
    A_lr_bp: float
    A_R1: float
    A_R2: float
    A_R1_bp: float
    A_R2_bp: float
    A_T1: float
    A_T2: float
    A_T1_bp: float
    A_T2_bp: float

    def as_dict(self):
        return asdict(self)


def _lr_terms(n, p, q, rho: RhoSet, k: CorrectionConstants, phi_known: bool):
    a = k.d0 / (n * q) * (rho.rho_ZZ - rho.rho_Z2Z2)
    a_bp = 0.0 if phi_known else k.d1 / n + k.d2 * (2 * p - q) / (2 * n)
    return a, a_bp


def _score_terms(n, p, q, rho: RhoSet, k: CorrectionConstants, phi_known: bool):
    a1 = 12 * k.b0 / n * (rho.rho_ZZ2 - rho.rho_Z2Z2)
    a2 = -9 * k.b0 / n * (rho.rho_ZZ - 2 * rho.rho_ZZ2 + rho.rho_Z2Z2)
    if phi_known:
        return a1, a2, 0.0, 0.0
    a1_bp = 12 * k.b1 / n * q * (p - q) - 6 * k.b2 / n * q
    a2_bp = -12 * k.b3 / n * q * (q + 2)
    return a1, a2, a1_bp, a2_bp


def _gradient_terms(n, p, q, rho: RhoSet, k: CorrectionConstants, phi_known: bool):
    a1 = 6 * k.c0 / n * (rho.rho_ZZ2 - rho.rho_Z2Z2)
    a2 = -3 * k.c0 / n * (rho.rho_ZZ - 2 * rho.rho_ZZ2 + rho.rho_Z2Z2)
    if phi_known:
        return a1, a2, 0.0, 0.0
    a1_bp = 6 * k.c1 / n * q * (p - q) + 6 * k.c2 / n * q
    a2_bp = -3 * k.c1 / n * q * (q + 2)
    return a1, a2, a1_bp, a2_bp


def _polynomial(q, a1, a2, a3=0.0):
    # cubic, quadratic and linear coefficients of a Bartlett-type factor
    a = a3 / (12 * q * (q + 2) * (q + 4))
    b = (a2 - 2 * a3) / (12 * q * (q + 2))
    c = (a1 - a2 + a3) / (12 * q)
    return a, b, c


def correction_coefficients(
    partition: DesignPartition,
    constants,
    *,
    phi_known: bool = False,
    rho: RhoSet | None = None,
) -> CorrectionCoefficients:
    """All correction coefficients for a design and error law.

    ``constants`` is a :class:`CorrectionConstants` or anything
    :func:`~symreg.distcore.kernel` accepts.
    """
    if not isinstance(constants, CorrectionConstants):
        constants = correction_constants(kernel(constants))
    n, p, q = partition.n, partition.p, partition.q
    rho = partition.projections() if rho is None else rho
    A_lr, A_lr_bp = _lr_terms(n, p, q, rho, constants, phi_known)
    r1, r2, r1_bp, r2_bp = _score_terms(n, p, q, rho, constants, phi_known)
    t1, t2, t1_bp, t2_bp = _gradient_terms(n, p, q, rho, constants, phi_known)
    a_r, b_r, c_r = _polynomial(q, r1 + r1_bp, r2 + r2_bp)
    a_t, b_t, c_t = _polynomial(q, t1 + t1_bp, t2 + t2_bp)
    return CorrectionCoefficients(
        a_lr=A_lr + A_lr_bp,
        a_r=a_r, b_r=b_r, c_r=c_r,
        a_t=a_t, b_t=b_t, c_t=c_t,
        A_lr=A_lr, A_lr_bp=A_lr_bp,
        A_R1=r1, A_R2=r2, A_R1_bp=r1_bp, A_R2_bp=r2_bp,
        A_T1=t1, A_T2=t2, A_T1_bp=t1_bp, A_T2_bp=t2_bp,
    )  # fmt: skip


def bartlett_lr(s_lr, partition, rho=None, constants=None, phi_known=False, family=None):
    """Bartlett-corrected LR statistic; returns ``(s_lr_star, a_lr)``."""
    cc = correction_coefficients(partition, constants if constants is not None else family,
                                 phi_known=phi_known, rho=rho)
    return np.asarray(s_lr) * (1.0 - cc.a_lr), cc.a_lr


def bartlett_type_score(s_r, partition, rho=None, constants=None, phi_known=False, family=None):
    """Bartlett-type corrected score statistic; returns ``(s_r_star, (a, b, c))``."""
    cc = correction_coefficients(partition, constants if constants is not None else family,
                                 phi_known=phi_known, rho=rho)
    s = np.asarray(s_r)
    return s * (1.0 - (cc.c_r + cc.b_r * s + cc.a_r * s * s)), (cc.a_r, cc.b_r, cc.c_r)


def bartlett_type_gradient(s_t, partition, rho=None, constants=None, phi_known=False, family=None):
    """Bartlett-type corrected gradient statistic; returns ``(s_t_star, (a, b, c))``."""
    cc = correction_coefficients(partition, constants if constants is not None else family,
                                 phi_known=phi_known, rho=rho)
    s = np.asarray(s_t)
    return s * (1.0 - (cc.c_t + cc.b_t * s + cc.a_t * s * s)), (cc.a_t, cc.b_t, cc.c_t)


def chisq_pvalue(statistic, q: int):
    """Upper-tail chi-squared probability; negative statistics count as 0."""
    if q < 1:
        raise ValueError("q must be at least 1")
    s = np.maximum(np.asarray(statistic, dtype=float), 0.0)
    out = stats.chi2.sf(s, q)
    return float(out) if out.ndim == 0 else out


def statistics_batch(partition: DesignPartition, law, Y, unrestricted: BatchFit, restricted: BatchFit):
    """Raw statistics for every column of ``Y``.

    ``unrestricted`` is the batch fit of ``Y`` on ``X`` (columns in original
    order) and ``restricted`` the batch fit of ``Y - X1 beta10`` on ``X2``.
    Returns a dict of ``(R,)`` arrays keyed by ``s_w``, ``s_lr``, ``s_r``,
    ``s_t``.
    """
    law = kernel(law)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    q = partition.q
    d = unrestricted.beta[list(partition.test)] - partition.beta10[:, None]
    rtr = partition.r_matrix()
    phi_h = unrestricted.phi
    s_w = law.delta_20000 * np.einsum("ir,ij,jr->r", d, rtr, d) / phi_h**2
    s_lr = 2.0 * (unrestricted.loglik - restricted.loglik)
    phi_t = restricted.phi
    e_t = Y - partition.offset[:, None]
    if partition.p > q:
        e_t = e_t - partition.X2 @ restricted.beta
    w_t = law.weight(e_t / phi_t)
    u = partition.X1.T @ (w_t * e_t)
    sol = linalg.cho_solve(partition.rtr_cholesky, u)
    s_r = np.einsum("ir,ir->r", u, sol) / (phi_t**2 * law.delta_20000)
    s_t = np.einsum("ir,ir->r", u, d) / phi_t**2
    return {"s_w": s_w, "s_lr": s_lr, "s_r": s_r, "s_t": s_t}


def _as_batch(res: FitResult, part: DesignPartition, restricted: bool) -> BatchFit:
    beta = res.beta_hat
    if restricted:
        beta = part.split_beta(beta)[1]
    return BatchFit(
        beta=np.asarray(beta, dtype=float)[:, None],
        phi=np.array([res.phi_hat]),
        loglik=np.array([res.loglik]),
        iterations=np.array([res.iterations]),
        converged=np.array([res.converged]),
        degenerate=np.array([res.degenerate]),
    )


def statistics(unrestricted: FitResult, restricted: FitResult, partition: DesignPartition, law, y,
               *, force: bool = False):
    """The four raw statistics from a pair of single fits.

    Raises
    ------
    ConvergenceError
        If either fit did not converge, unless ``force`` is set.
    """
    if not force:
        for label, res in (("unrestricted", unrestricted), ("restricted", restricted)):
            if not res.converged:
                why = "degenerate (zero residual scale)" if res.degenerate else \
                    f"not converged after {res.iterations} iterations"
                raise ConvergenceError(f"{label} fit {why}; pass force=True to compute anyway",
                                       res.trace)
    out = statistics_batch(
        partition, law, y, _as_batch(unrestricted, partition, False), _as_batch(restricted, partition, True)
    )
    return tuple(float(out[k][0]) for k in RAW)


def apply_corrections(raw: dict, cc: CorrectionCoefficients) -> dict:
    """Corrected statistics from raw ones (arrays or scalars)."""
    s_lr, s_r, s_t = (np.asarray(raw[k]) for k in ("s_lr", "s_r", "s_t"))
    return {
        "s_lr_star": s_lr * (1.0 - cc.a_lr),
        "s_r_star": s_r * (1.0 - (cc.c_r + cc.b_r * s_r + cc.a_r * s_r**2)),
        "s_t_star": s_t * (1.0 - (cc.c_t + cc.b_t * s_t + cc.a_t * s_t**2)),
    }


@dataclass(frozen=True)
class TestReport:
    """Statistics, correction coefficients and chi-squared p-values for one test.

    ``coefficients`` is ``None`` when no closed-form constants exist for the
    law; the corrected statistics are then NaN.  ``bootstrap`` maps raw
    statistic names to :class:`~symreg.resample.BootstrapResult`.
    """

    __test__ = False  # not a pytest class

    q: int
    s_w: float
    s_lr: float
    s_r: float
    s_t: float
    s_lr_star: float
    s_r_star: float
    s_t_star: float
    coefficients: CorrectionCoefficients | None
    pvalues: dict
    correction_clamped: bool
    family: str
    tested: tuple
    beta10: tuple
    unrestricted: FitResult | None = None
    restricted: FitResult | None = None
    bootstrap: dict | None = None

    def to_json(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else float(x)

        out = {
            "family": self.family,
            "q": self.q,
            "tested": list(self.tested),
            "null": [float(v) for v in self.beta10],
            "statistics": {k: num(getattr(self, k)) for k in STAT_NAMES},
            "pvalues": {k: num(v) for k, v in self.pvalues.items()},
            "coefficients": None,
            "flags": {"correction_clamped": self.correction_clamped},
        }
        if self.coefficients is not None:
            c = self.coefficients
            out["coefficients"] = {
                "a_lr": c.a_lr,
                "a_r": c.a_r, "b_r": c.b_r, "c_r": c.c_r,
                "a_t": c.a_t, "b_t": c.b_t, "c_t": c.c_t,
            }  # fmt: skip
        if self.unrestricted is not None:
            out["fits"] = {
                "unrestricted": {"beta": self.unrestricted.beta_hat.tolist(), "phi": self.unrestricted.phi_hat,
                                 "loglik": self.unrestricted.loglik, "iterations": self.unrestricted.iterations},
                "restricted": {"beta": self.restricted.beta_hat.tolist(), "phi": self.restricted.phi_hat,
                               "loglik": self.restricted.loglik, "iterations": self.restricted.iterations},
            }
        if self.bootstrap:
            out["bootstrap"] = {k: v.to_json() for k, v in self.bootstrap.items()}
        return out


def run_tests(spec: ModelSpec, *, phi_known: bool = False, force: bool = False,
              unrestricted: FitResult | None = None, restricted: FitResult | None = None) -> TestReport:
    """Fit both models and compute every analytic statistic for ``spec``."""
    part = spec.partition
    law = spec.family
    fu = fit(spec) if unrestricted is None else unrestricted
    fr = fit_restricted(spec) if restricted is None else restricted
    raw = dict(zip(RAW, statistics(fu, fr, part, law, spec.y, force=force)))
    try:
        cc = correction_coefficients(part, correction_constants(law), phi_known=phi_known)
        corr = {k: float(v) for k, v in apply_corrections(raw, cc).items()}
    except UnsupportedCorrection:
        cc = None
        corr = {k: math.nan for k in CORRECTED}
    allstats = {**raw, **corr}
    clamped = any(corr[k] < 0 for k in CORRECTED if math.isfinite(corr[k]))
    pvals = {k: (chisq_pvalue(v, part.q) if math.isfinite(v) else math.nan) for k, v in allstats.items()}
    return TestReport(
        q=part.q,
        **allstats,
        coefficients=cc,
        pvalues=pvals,
        correction_clamped=clamped,
        family=law.spec,
        tested=part.test,
        beta10=tuple(part.beta10.tolist()),
        unrestricted=fu,
        restricted=fr,
    )

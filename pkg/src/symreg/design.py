"""Design-matrix algebra for a partitioned linear hypothesis.

The hypothesis fixes ``q`` of the ``p`` regression coefficients,
``H0: beta_1 = beta_10``.  :class:`DesignPartition` stores the design with
the tested columns moved to the leading block ``X1`` and the nuisance
columns in ``X2``.  Everything the corrections need from the design is a
function of the diagonals of the hat matrices

    Z  = X  (X'X)^{-1}   X'
    Z2 = X2 (X2'X2)^{-1} X2'

which are computed from thin QR factors rather than explicit inverses.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg

__all__ = ["SingularDesignError", "DesignPartition", "RhoSet", "projections", "r_matrix"]

RANK_TOL = 1e-10


class SingularDesignError(ValueError):
    """The design matrix is not of full column rank, or ``n <= p``."""


@dataclass(frozen=True)
class RhoSet:
    """Hat-matrix diagonals and the n-scaled sums built from them.

    Attributes
    ----------
    rho_ZZ, rho_Z2Z2, rho_ZZ2 : float
        ``n * sum(z**2)``, ``n * sum(z2**2)`` and ``n * sum(z * z2)``.
    z_diag, z2_diag : ndarray
        Diagonals of ``Z`` and ``Z2`` (``z2_diag`` is zero when ``q = p``).
    """

    rho_ZZ: float
    rho_Z2Z2: float
    rho_ZZ2: float
    z_diag: np.ndarray
    z2_diag: np.ndarray

    @classmethod
    def from_diagonals(cls, z_diag, z2_diag) -> "RhoSet":
        z = np.asarray(z_diag, dtype=float)
        z2 = np.asarray(z2_diag, dtype=float)
        n = z.size
        return cls(
            rho_ZZ=float(n * np.dot(z, z)),
            rho_Z2Z2=float(n * np.dot(z2, z2)),
            rho_ZZ2=float(n * np.dot(z, z2)),
            z_diag=z,
            z2_diag=z2,
        )


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    n, p = X.shape
    if n <= p:
        raise SingularDesignError(f"need n > p, got n={n}, p={p}")
    if not np.all(np.isfinite(X)):
        raise SingularDesignError("design matrix contains non-finite values")
    _, r, piv = linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    if diag[0] == 0:
        raise SingularDesignError(f"design column {names[piv[0]]!r} is identically zero")
    sv = linalg.svdvals(X)
    if sv[-1] < RANK_TOL * sv[0]:
        # pivoting pushes dependent columns to the end of the factorization
        k = int(np.argmax(diag < RANK_TOL * diag[0])) if np.any(diag < RANK_TOL * diag[0]) else p - 1
        raise SingularDesignError(
            f"design matrix is rank deficient (condition {sv[0] / max(sv[-1], 1e-300):.3g}); "
            f"column {names[piv[k]]!r} is a linear combination of the others"
        )


class DesignPartition:
    """Design matrix split into tested (``X1``) and nuisance (``X2``) columns.

    Parameters
    ----------
    X : array_like, shape (n, p)
        Full-rank design.
    test : int or sequence of int
        Either the number ``q`` of leading columns under test, or the column
        indices of the tested coefficients in any order.
    beta10 : array_like, optional
        Hypothesised values of the tested coefficients, in the order of
        ``test``.  Defaults to zeros.
    names : sequence of str, optional
        Column labels used in error messages.

    Notes
    -----
    ``order`` is the permutation that moves the tested columns first:
    ``X[:, order] == hstack([X1, X2])``.
    """

    def __init__(self, X, test, beta10=None, names: Sequence[str] | None = None):
        X = np.array(X, dtype=float, copy=True)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2:
            raise ValueError("design matrix must be two-dimensional")
        n, p = X.shape
        names = list(names) if names is not None else [f"x{j}" for j in range(p)]
        if len(names) != p:
            raise ValueError("names must match the number of columns")
        if np.isscalar(test):
            idx = list(range(int(test)))
        else:
            idx = [int(j) for j in test]
        if not idx:
            raise ValueError("at least one coefficient must be tested (q >= 1)")
        if len(set(idx)) != len(idx) or min(idx) < 0 or max(idx) >= p:
            raise ValueError(f"tested columns {idx} are not distinct indices in [0, {p})")
        _check_rank(X, names)
        if beta10 is None:
            beta10 = np.zeros(len(idx))
        beta10 = np.atleast_1d(np.asarray(beta10, dtype=float))
        if beta10.shape != (len(idx),):
            raise ValueError(f"beta10 must have length q={len(idx)}")
        rest = [j for j in range(p) if j not in idx]
        self.X = X
        self.X.setflags(write=False)
        self.names = names
        self.test = tuple(idx)
        self.order = np.array(idx + rest)
        self.beta10 = beta10
        self.beta10.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return len(self.test)

    @cached_property
    def X1(self) -> np.ndarray:
        return self.X[:, list(self.test)]

    @cached_property
    def X2(self) -> np.ndarray:
        return self.X[:, self.order[self.q :]]

    @cached_property
    def offset(self) -> np.ndarray:
        """``X1 @ beta10``, the known part of the mean under the null."""
        return self.X1 @ self.beta10

    def full_beta(self, beta1, beta2) -> np.ndarray:
        """Assemble coefficients in the original column order.

        ``beta1`` and ``beta2`` may carry a trailing replicate axis.
        """
        beta1 = np.asarray(beta1, dtype=float)
        beta2 = np.asarray(beta2, dtype=float)
        out = np.empty((self.p,) + beta1.shape[1:])
        out[self.order[: self.q]] = beta1
        out[self.order[self.q :]] = beta2
        return out

    def split_beta(self, beta):
        """Inverse of :meth:`full_beta`: return ``(beta1, beta2)``."""
        beta = np.asarray(beta, dtype=float)
        return beta[self.order[: self.q]], beta[self.order[self.q :]]

    @cached_property
    def _rho(self) -> RhoSet:
        q_full = linalg.qr(self.X, mode="economic")[0]
        z = np.einsum("ij,ij->i", q_full, q_full)
        if self.q == self.p:
            z2 = np.zeros(self.n)
        else:
            q2 = linalg.qr(self.X2, mode="economic")[0]
            z2 = np.einsum("ij,ij->i", q2, q2)
        return RhoSet.from_diagonals(z, z2)

    def projections(self) -> RhoSet:
        return self._rho

    @cached_property
    def _rtr(self) -> np.ndarray:
        # QR of [X2, X1]: the trailing triangle R22 satisfies R22'R22 = R'R
        r = linalg.qr(np.hstack([self.X2, self.X1]), mode="r")[0]
        r22 = r[self.p - self.q : self.p, self.p - self.q : self.p]
        out = r22.T @ r22
        out = 0.5 * (out + out.T)
        out.setflags(write=False)
        return out

    def r_matrix(self) -> np.ndarray:
        """``R'R`` with ``R = X1 - X2 (X2'X2)^{-1} X2' X1``."""
        return self._rtr

    @cached_property
    def rtr_cholesky(self):
        return linalg.cho_factor(self._rtr)

    def __repr__(self) -> str:
        return f"DesignPartition(n={self.n}, p={self.p}, q={self.q}, test={self.test})"


def projections(partition: DesignPartition) -> RhoSet:
    """Hat-matrix diagonals and rho sums for ``partition``."""
    return partition.projections()


def r_matrix(partition: DesignPartition) -> np.ndarray:
    """``R'R`` for ``partition``; equals ``X'X`` when every coefficient is tested."""
    return partition.r_matrix()

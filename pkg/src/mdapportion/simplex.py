"""Bounded-variable revised simplex with dual extraction.

Solves ``min c.x  s.t.  A x = b,  lb <= x <= ub`` with finite lower bounds.
Two phases: artificial variables (one per row) are driven to zero first,
then the true objective is optimised from that basis. Row duals ``pi`` and
reduced costs ``c - A^T pi`` are read from the final basis.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 64
BLAND_AFTER = 50


class SimplexError(RuntimeError):
    pass


@dataclass
class SimplexResult:
    status: str  # "optimal" | "infeasible" | "unbounded" | "iteration_limit"
    x: np.ndarray
    duals: np.ndarray
    reduced_costs: np.ndarray
    objective: float
    basis: np.ndarray
    iterations: int

    @property
    def success(self) -> bool:
        return self.status == "optimal"


class _Tableau:
    """Working state of one simplex run over columns ``[A | artificials]``."""

    def __init__(self, A, b, lb, ub, x, basis):
        self.A = A
        self.At = sparse.csr_matrix(A.T)
        csc = sparse.csc_matrix(A)
        self._ptr, self._idx, self._val = csc.indptr, csc.indices, csc.data
        self.b = b
        self.lb = lb
        self.ub = ub
        self.x = x
        self.basis = basis
        self.is_basic = np.zeros(A.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.refactor()

    def refactor(self):
        B = np.zeros((self.A.shape[0], len(self.basis)))
        for k, j in enumerate(self.basis):
            B[:, k] = self.column(j)
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise SimplexError("singular basis") from exc
        nonbasic = ~self.is_basic
        xn = np.where(nonbasic, self.x, 0.0)
        rhs = self.b - self.At.T @ xn
        self.x[self.basis] = self.Binv @ rhs

    def column(self, j: int) -> np.ndarray:
        col = np.zeros(self.A.shape[0])
        lo, hi = self._ptr[j], self._ptr[j + 1]
        col[self._idx[lo:hi]] = self._val[lo:hi]
        return col

    def run(self, c, max_iter, counter):
        m, n = self.A.shape
        since_refactor = 0
        stall = 0
        best_obj = np.inf
        for _ in range(max_iter):
            pi = c[self.basis] @ self.Binv
            d = c - self.At @ pi
            at_lb = self.x <= self.lb + FEAS_TOL
            at_ub = self.x >= self.ub - FEAS_TOL
            fixed = self.ub - self.lb <= FEAS_TOL
            eligible = ~self.is_basic & ~fixed & (((d < -DUAL_TOL) & at_lb) | ((d > DUAL_TOL) & at_ub))
            # a nonbasic variable strictly between bounds can move either way
            between = ~self.is_basic & ~at_lb & ~at_ub
            eligible |= between & (np.abs(d) > DUAL_TOL)
            if not eligible.any():
                return "optimal"
            bland = stall >= BLAND_AFTER
            cand = np.flatnonzero(eligible)
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            s = 1.0 if d[q] < 0 else -1.0  # +1: increase x_q
            lo, hi = self._ptr[q], self._ptr[q + 1]
            w = self.Binv[:, self._idx[lo:hi]] @ self._val[lo:hi]
            delta = -s * w
            xb = self.x[self.basis]
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            theta = self.ub[q] - self.lb[q]
            if s > 0:
                theta = self.ub[q] - self.x[q]
            else:
                theta = self.x[q] - self.lb[q]
            leave = -1
            with np.errstate(divide="ignore", invalid="ignore"):
                dec = delta < -PIVOT_TOL
                inc = delta > PIVOT_TOL
                limits = np.full(m, np.inf)
                limits[dec] = (xb[dec] - lbb[dec]) / -delta[dec]
                limits[inc] = (ubb[inc] - xb[inc]) / delta[inc]
            limits = np.maximum(limits, 0.0)
            if limits.size:
                tmin = limits.min()
                if tmin < theta:
                    ties = np.flatnonzero(limits <= tmin + 1e-12)
                    if bland:
                        leave = int(ties[np.argmin(self.basis[ties])])
                    else:
                        leave = int(ties[np.argmax(np.abs(delta[ties]))])
                    theta = limits[leave]
            if not np.isfinite(theta):
                return "unbounded"
            self.x[self.basis] = xb + theta * delta
            self.x[q] += s * theta
            counter[0] += 1
            if leave >= 0:
                out = self.basis[leave]
                # snap the leaving variable onto the bound it reached
                self.x[out] = self.lb[out] if delta[leave] < 0 else self.ub[out]
                self.is_basic[out] = False
                self.is_basic[q] = True
                self.basis[leave] = q
                since_refactor += 1
                if since_refactor >= REFACTOR_EVERY:
                    self.refactor()
                    since_refactor = 0
                else:
                    piv = w[leave]
                    row = self.Binv[leave] / piv
                    self.Binv -= np.outer(w, row)
                    self.Binv[leave] = row
            obj = float(c @ self.x)
            if obj < best_obj - 1e-12:
                best_obj = obj
                stall = 0
            else:
                stall += 1
        return "iteration_limit"


def solve(c, A, b, lb, ub, max_iter: int = 200_000, x0=None) -> SimplexResult:
    """Minimise ``c.x`` subject to ``A x = b`` and ``lb <= x <= ub``.

    ``x0`` optionally gives a starting value for every variable; each entry
    must sit on one of its finite bounds.
    """
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    m, n = A.shape
    if np.any(ub < lb - FEAS_TOL):
        empty = np.zeros(n)
        return SimplexResult("infeasible", empty, np.zeros(m), np.zeros(n), np.nan, np.arange(0), 0)
    if x0 is None:
        x0 = lb.copy()
    else:
        x0 = np.asarray(x0, dtype=float).copy()
        on_bound = (np.abs(x0 - lb) <= FEAS_TOL) | (np.abs(x0 - ub) <= FEAS_TOL)
        if x0.shape != lb.shape or not on_bound.all():
            raise ValueError("every starting value must lie on a finite bound")
    resid = b - A @ x0
    sign = np.where(resid >= 0, 1.0, -1.0)
    Afull = np.hstack([A, np.diag(sign)])
    lbf = np.concatenate([lb, np.zeros(m)])
    ubf = np.concatenate([ub, np.full(m, np.inf)])
    xf = np.concatenate([x0, np.abs(resid)])
    basis = np.arange(n, n + m)
    tab = _Tableau(Afull, b, lbf, ubf, xf, basis)
    counter = [0]

    c1 = np.concatenate([np.zeros(n), np.ones(m)])
    status = tab.run(c1, max_iter, counter)
    if status != "optimal":
        raise SimplexError(f"phase 1 ended with status {status}")
    tab.refactor()
    infeas = float(tab.x[n:].sum())
    if infeas > 1e-7 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return SimplexResult("infeasible", tab.x[:n].copy(), np.zeros(m), np.zeros(n), np.nan, tab.basis.copy(), counter[0])

    # fix artificials at zero and pivot them out of the basis where possible
    tab.ub[n:] = 0.0
    tab.x[n:] = np.clip(tab.x[n:], 0.0, 0.0)
    _drive_out_artificials(tab, n)

    c2 = np.concatenate([c, np.zeros(m)])
    status = tab.run(c2, max_iter, counter)
    tab.refactor()
    x = tab.x[:n].copy()
    pi = c2[tab.basis] @ tab.Binv
    d = c - pi @ A
    return SimplexResult(status, x, pi, d, float(c @ x), tab.basis.copy(), counter[0])


def _drive_out_artificials(tab: _Tableau, n: int) -> None:
    for r in range(len(tab.basis)):
        if tab.basis[r] < n:
            continue
        row = (tab.At @ tab.Binv[r])[:n]
        row[tab.is_basic[:n]] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) <= 1e-7:
            continue  # redundant row; the artificial stays basic at zero
        out = tab.basis[r]
        tab.is_basic[out] = False
        tab.is_basic[j] = True
        tab.basis[r] = j
        tab.refactor()

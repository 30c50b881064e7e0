"""Linear relaxation of the seat-step program, its duals and certificates.

For each supported tuple ``e`` and step ``t`` a variable ``y[e, t] in [0, 1]``
buys the ``t``-th seat of ``e`` at cost ``log(t / V_e)``. Seats per tuple are
``x_e = sum_t y[e, t]``; slice sums of ``x`` must hit the marginals and each
``x_e`` must lie in ``[I_e, U_e]``.

Only steps up to ``T_e = min(H, U_e + 1, min_i m_{e_i} + 1)`` are
materialised. Higher steps can never be bought, and because step costs grow
with ``t`` the dual constraint of step ``T_e`` implies those of every step
above it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import simplex
from .divisor import clamped_round_set
from .errors import ApportionmentError, Infeasible, NotARounding
from .model import MarginalSpec, VoteTensor

DUAL_EPS = 1e-7
WINDOW_SLACK = 1e-9
INT_TOL = 1e-9


@dataclass
class ApportionLP:
    votes: VoteTensor
    spec: MarginalSpec
    support: np.ndarray  # (k, d) index tuples of E(V)
    steps: np.ndarray  # materialised steps T_e per support tuple
    col_tuple: np.ndarray  # support position of every y column
    col_step: np.ndarray  # step t of every y column
    costs: np.ndarray
    row_offsets: tuple[int, ...]  # first marginal row of each dimension
    lower_rows: np.ndarray  # support positions with an x_e >= I_e row
    upper_rows: np.ndarray  # support positions with an x_e <= U_e row
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    lb: np.ndarray = field(repr=False)
    ub: np.ndarray = field(repr=False)
    c: np.ndarray = field(repr=False)

    @property
    def n_support(self) -> int:
        return len(self.support)

    @property
    def full_shape(self) -> tuple[int, int]:
        """(|E(V)|, H + 1): tuples times (one x plus H step variables) each."""
        return self.n_support, self.spec.house_size + 1

    @property
    def n_full_variables(self) -> int:
        k, per = self.full_shape
        return k * per

    @property
    def n_columns(self) -> int:
        return len(self.col_tuple)

    @property
    def n_marginal_rows(self) -> int:
        return sum(len(m) for m in self.spec.marginals)

    @property
    def support_votes(self) -> np.ndarray:
        return self.votes.values[tuple(self.support.T)].astype(float)

    @property
    def support_lower(self) -> np.ndarray:
        return self.spec.lower[tuple(self.support.T)]

    @property
    def support_upper(self) -> np.ndarray:
        return np.minimum(self.spec.upper[tuple(self.support.T)], self.spec.house_size)

    def element_rows(self) -> np.ndarray:
        """(k, d) marginal row index of each support tuple's elements."""
        return self.support + np.asarray(self.row_offsets)[None, :]

    def dump(self, path) -> None:
        """Write a plain-text row/column listing for cross-checking elsewhere."""
        dims = self.votes.dims
        lines = [f"# columns {self.n_columns} rows {self.A.shape[0]} house {self.spec.house_size}"]
        for j in range(self.n_columns):
            e = tuple(self.support[self.col_tuple[j]])
            label = ",".join(dims[i][k] for i, k in enumerate(e))
            lines.append(f"col y[{label};{self.col_step[j]}] cost {self.costs[j]:.12g} bounds 0 1")
        for r in range(self.A.shape[0]):
            nz = np.flatnonzero(self.A[r])
            terms = " ".join(f"{self.A[r, j]:+g}*c{j}" for j in nz)
            lines.append(f"row {r}: {terms} = {self.b[r]:.12g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_lp(votes: VoteTensor, spec: MarginalSpec) -> ApportionLP:
    """Materialise the relaxation for ``votes`` under ``spec``."""
    d = votes.ndim
    H = spec.house_size
    support = np.argwhere(votes.values > 0)
    k = len(support)
    V = votes.values[tuple(support.T)].astype(float) if k else np.zeros(0)
    lower = spec.lower[tuple(support.T)] if k else np.zeros(0, dtype=np.int64)
    upper = np.minimum(spec.upper[tuple(support.T)], H) if k else np.zeros(0, dtype=np.int64)
    ms = [np.asarray(m) for m in spec.marginals]
    min_marg = np.full(k, H, dtype=np.int64)
    for i in range(d):
        min_marg = np.minimum(min_marg, np.asarray(ms[i])[support[:, i]].astype(np.int64))
    steps = np.minimum(np.minimum(min_marg + 1, upper + 1), H).astype(np.int64)
    steps = np.maximum(steps, 1)

    col_tuple = np.repeat(np.arange(k), steps)
    starts = np.concatenate([[0], np.cumsum(steps)[:-1]]) if k else np.zeros(0, dtype=np.int64)
    col_step = np.arange(len(col_tuple)) - np.repeat(starts, steps) + 1
    costs = np.log(col_step / V[col_tuple]) if k else np.zeros(0)

    offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum([len(m) for m in ms])[:-1]]))
    n_marg = sum(len(m) for m in ms)
    lower_rows = np.flatnonzero(lower > 0)
    upper_rows = np.flatnonzero(upper < steps)
    n_rows = n_marg + len(lower_rows) + len(upper_rows)
    n_y = len(col_tuple)
    n_cols = n_y + len(lower_rows) + len(upper_rows)

    A = np.zeros((n_rows, n_cols))
    cols = np.arange(n_y)
    for i in range(d):
        A[offsets[i] + support[col_tuple, i], cols] = 1.0
    b = np.zeros(n_rows)
    b[:n_marg] = np.concatenate([np.asarray(m, dtype=float) for m in ms])
    r = n_marg
    slack = n_y
    for p in lower_rows:
        A[r, :n_y][col_tuple == p] = 1.0
        A[r, slack] = -1.0  # surplus
        b[r] = lower[p]
        r += 1
        slack += 1
    for p in upper_rows:
        A[r, :n_y][col_tuple == p] = 1.0
        A[r, slack] = 1.0
        b[r] = upper[p]
        r += 1
        slack += 1
    lb = np.zeros(n_cols)
    ub = np.concatenate([np.ones(n_y), np.full(n_cols - n_y, np.inf)])
    c = np.concatenate([costs, np.zeros(n_cols - n_y)])
    return ApportionLP(
        votes, spec, support, steps, col_tuple, col_step, costs, offsets,
        lower_rows, upper_rows, A, b, lb, ub, c,
    )


@dataclass
class PrimalDualPair:
    lp: ApportionLP
    y: np.ndarray
    x: np.ndarray
    Lambda: tuple[np.ndarray, ...]
    omega_minus: np.ndarray
    omega_plus: np.ndarray
    beta: np.ndarray
    objective: float
    backend: str = "simplex"

    @property
    def dual_objective(self) -> float:
        lp = self.lp
        val = sum(float(np.dot(np.asarray(m, dtype=float), lam)) for m, lam in zip(lp.spec.marginals, self.Lambda))
        val += float(np.dot(lp.support_lower, self.omega_minus))
        val += float(np.dot(lp.support_upper, self.omega_plus))
        val += float(self.beta.sum())
        return val

    @property
    def multipliers(self) -> tuple[np.ndarray, ...]:
        return tuple(np.exp(lam) for lam in self.Lambda)

    def x_tensor(self) -> np.ndarray:
        out = np.zeros(self.lp.votes.shape)
        out[tuple(self.lp.support.T)] = self.x
        return out

    def scaled_votes(self) -> np.ndarray:
        """``V_e * prod_i lambda_{e_i}`` per support tuple, via logs."""
        lp = self.lp
        logs = np.log(lp.support_votes)
        for i, lam in enumerate(self.Lambda):
            logs = logs + lam[lp.support[:, i]]
        return np.exp(logs)

    def fractional(self, tol: float = INT_TOL) -> np.ndarray:
        """Support positions whose seat value is not integral."""
        return np.flatnonzero(np.abs(self.x - np.round(self.x)) > tol)


def crash_start(lp: ApportionLP) -> np.ndarray | None:
    """Bound-feasible starting point: step variables on up to a rounding of a rough fair share.

    Only shortens phase 1 of the simplex; any residual is absorbed by the
    artificial variables, so a poor guess costs time but never correctness.
    """
    from .fairshare import fair_share

    try:
        share = fair_share(lp.votes, lp.spec.marginals, tolerance=1e-3, max_sweeps=200)
    except ApportionmentError:
        return None
    f = share.values[tuple(lp.support.T)]
    cap = np.minimum(lp.support_upper, lp.steps)
    k = np.clip(np.floor(f + 1e-9).astype(np.int64), lp.support_lower, cap)
    # largest remainders within each slice of the first dimension
    targets = np.asarray(lp.spec.marginals[0])
    order = np.argsort(-(f - np.floor(f)), kind="stable")
    for j, m in enumerate(targets):
        missing = int(m) - int(k[lp.support[:, 0] == j].sum())
        if missing <= 0:
            continue
        for p in order:
            if missing == 0:
                break
            if lp.support[p, 0] == j and k[p] < cap[p]:
                k[p] += 1
                missing -= 1
    x0 = np.zeros(lp.A.shape[1])
    x0[: len(lp.col_tuple)] = (lp.col_step <= k[lp.col_tuple]).astype(float)
    return x0


def solve_lp(lp: ApportionLP, backend: str = "simplex") -> PrimalDualPair:
    """Solve the relaxation and read duals off the optimal basis.

    ``backend="simplex"`` uses the in-package revised simplex;
    ``backend="highs"`` delegates to SciPy's dual simplex for large instances.
    Raises :class:`Infeasible` when no fractional solution exists.
    """
    if backend == "simplex":
        res = simplex.solve(lp.c, lp.A, lp.b, lp.lb, lp.ub, x0=crash_start(lp))
        if res.status == "infeasible":
            raise Infeasible("the relaxation of the apportionment program is infeasible")
        if res.status != "optimal":
            raise simplex.SimplexError(f"simplex ended with status {res.status}")
        z, pi = res.x, res.duals
    elif backend == "highs":
        from scipy.optimize import linprog
        from scipy.sparse import csr_matrix

        bounds = np.column_stack([lp.lb, np.where(np.isinf(lp.ub), np.nan, lp.ub)])
        bounds = [(lo, None if np.isnan(hi) else hi) for lo, hi in bounds]
        res = linprog(lp.c, A_eq=csr_matrix(lp.A), b_eq=lp.b, bounds=bounds, method="highs-ds")
        if res.status == 2:
            raise Infeasible("the relaxation of the apportionment program is infeasible")
        if res.status != 0:
            raise simplex.SimplexError(res.message)
        z, pi = res.x, res.eqlin.marginals
    else:
        raise ValueError(f"unknown LP backend {backend!r}")
    return _pair_from_solution(lp, np.asarray(z, dtype=float), np.asarray(pi, dtype=float), backend)


def _pair_from_solution(lp: ApportionLP, z, pi, backend) -> PrimalDualPair:
    n_y = lp.n_columns
    y = np.clip(z[:n_y], 0.0, 1.0)
    x = np.bincount(lp.col_tuple, weights=y, minlength=lp.n_support)
    n_marg = lp.n_marginal_rows
    Lambda = tuple(
        pi[off : off + len(m)].copy() for off, m in zip(lp.row_offsets, lp.spec.marginals)
    )
    omega_minus = np.zeros(lp.n_support)
    omega_minus[lp.lower_rows] = pi[n_marg : n_marg + len(lp.lower_rows)]
    omega_plus = np.zeros(lp.n_support)
    omega_plus[lp.upper_rows] = pi[n_marg + len(lp.lower_rows) :]
    reduced = lp.c[:n_y] - pi @ lp.A[:, :n_y]
    beta = np.where(y >= 1.0 - 1e-9, np.minimum(reduced, 0.0), 0.0)
    objective = float(lp.costs @ y)
    return PrimalDualPair(lp, y, x, Lambda, omega_minus, omega_plus, beta, objective, backend)


@dataclass
class KKTReport:
    violations: dict[str, float]
    tol: float

    @property
    def passed(self) -> bool:
        return all(v <= self.tol for v in self.violations.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.violations.items() if v > self.tol]

    def lines(self) -> list[str]:
        return [
            f"{k:<28} {v:.3e} {'ok' if v <= self.tol else 'FAIL'}" for k, v in self.violations.items()
        ]


def verify_kkt(pair: PrimalDualPair, lp: ApportionLP | None = None, tol: float = DUAL_EPS) -> KKTReport:
    """Check primal feasibility and the optimality conditions over all H steps.

    Steps beyond the materialised ones have ``y = 0`` and ``beta = 0``; their
    dual feasibility is evaluated explicitly rather than assumed.
    """
    lp = pair.lp if lp is None else lp
    H = lp.spec.house_size
    k = lp.n_support
    V = lp.support_votes
    I = lp.support_lower.astype(float)
    U = lp.support_upper.astype(float)
    lam_sum = np.zeros(k)
    for i, lam in enumerate(pair.Lambda):
        lam_sum += lam[lp.support[:, i]]
    base = lam_sum + pair.omega_minus + pair.omega_plus

    Y = np.zeros((k, H))
    B = np.zeros((k, H))
    Y[lp.col_tuple, lp.col_step - 1] = pair.y
    B[lp.col_tuple, lp.col_step - 1] = pair.beta
    t = np.arange(1, H + 1)
    cost = np.log(t[None, :] / V[:, None]) if k else np.zeros((0, H))
    slack = base[:, None] + B - cost

    v: dict[str, float] = {}
    x = Y.sum(axis=1)
    marg_err = 0.0
    for i, m in enumerate(lp.spec.marginals):
        s = np.bincount(lp.support[:, i], weights=x, minlength=len(m))
        marg_err = max(marg_err, float(np.max(np.abs(s - np.asarray(m, dtype=float)), initial=0.0)))
    v["primal marginals"] = marg_err
    v["primal bounds"] = float(max(np.max(I - x, initial=0.0), np.max(x - U, initial=0.0), 0.0))
    v["primal 0<=y<=1"] = float(max(np.max(-Y, initial=0.0), np.max(Y - 1, initial=0.0), 0.0))
    v["(18) dual feasibility"] = float(max(np.max(slack, initial=0.0), 0.0))
    v["(19) y complementarity"] = float(np.max(np.abs(Y * slack), initial=0.0))
    v["(20) omega- slackness"] = float(np.max(np.abs(pair.omega_minus * (x - I)), initial=0.0))
    v["(21) omega- >= 0"] = float(max(np.max(-pair.omega_minus, initial=0.0), 0.0))
    v["(22) omega+ slackness"] = float(np.max(np.abs(pair.omega_plus * (U - x)), initial=0.0))
    v["(23) omega+ <= 0"] = float(max(np.max(pair.omega_plus, initial=0.0), 0.0))
    v["(24) beta slackness"] = float(np.max(np.abs(B * (Y - 1)), initial=0.0))
    v["(25) beta <= 0"] = float(max(np.max(B, initial=0.0), 0.0))
    primal = float((Y * np.where(Y > 0, cost, 0.0)).sum())
    v["duality gap"] = abs(primal - pair.dual_objective) / max(1.0, abs(primal))
    return KKTReport(v, tol)


def step_structure_ok(pair: PrimalDualPair, tol: float = INT_TOL) -> bool:
    """Per tuple, bought steps are a run of ones followed by at most one fraction."""
    for p in range(pair.lp.n_support):
        ys = pair.y[pair.lp.col_tuple == p]
        frac = 0
        for j, val in enumerate(ys):
            if val >= 1 - tol:
                if frac or (j and ys[j - 1] < 1 - tol):
                    return False
            elif val > tol:
                frac += 1
                if frac > 1:
                    return False
            else:
                if np.any(ys[j:] > tol):
                    return False
                break
    return True


@dataclass(frozen=True)
class ProportionalityCertificate:
    multipliers: tuple[np.ndarray, ...]
    windows: dict[tuple[int, ...], frozenset[int]]


def _near_integer_round_set(t: float, lower: int, upper: int) -> frozenset[int]:
    r = round(t)
    if r > 0 and abs(t - r) <= WINDOW_SLACK * max(1.0, abs(t)):
        return clamped_round_set(Fraction(int(r)), lower, upper)
    return clamped_round_set(Fraction(t), lower, upper)


def certificate(pair: PrimalDualPair) -> ProportionalityCertificate:
    """Per-tuple windows ``clamp(round(V_e prod lambda), I_e, U_e)`` from the duals."""
    lp = pair.lp
    scaled = pair.scaled_votes()
    I, U = lp.support_lower, lp.support_upper
    windows = {
        tuple(int(a) for a in lp.support[p]): _near_integer_round_set(float(scaled[p]), int(I[p]), int(U[p]))
        for p in range(lp.n_support)
    }
    return ProportionalityCertificate(pair.multipliers, windows)


def window_violations(pair: PrimalDualPair, seats: np.ndarray) -> list[tuple[int, ...]]:
    """Support tuples whose seat count lies outside its certified window."""
    cert = certificate(pair)
    return [e for e, win in cert.windows.items() if int(seats[e]) not in win]


def is_box_rounding(pair: PrimalDualPair, seats: np.ndarray) -> bool:
    xs = seats[tuple(pair.lp.support.T)]
    lo = np.floor(pair.x + INT_TOL)
    hi = np.ceil(pair.x - INT_TOL)
    zero_ok = np.all(np.where(pair.lp.votes.values == 0, seats == 0, True))
    return bool(np.all((xs >= lo) & (xs <= hi)) and zero_ok)


def certify_rounding(pair: PrimalDualPair, spec: MarginalSpec | None, candidate: np.ndarray) -> bool:
    """True iff every entry of ``candidate`` lies in its certified window.

    ``candidate`` must be a floor/ceiling rounding of the LP optimum, else
    :class:`NotARounding` is raised.
    """
    candidate = np.asarray(candidate)
    if not is_box_rounding(pair, candidate):
        raise NotARounding("candidate tensor is not a floor/ceiling rounding of the LP optimum")
    return not window_violations(pair, candidate)


def solve_apportionment_lp(votes: VoteTensor, spec: MarginalSpec, backend: str = "simplex") -> PrimalDualPair:
    return solve_lp(build_lp(votes, spec), backend)


def floor_rounding(pair: PrimalDualPair) -> np.ndarray:
    out = np.zeros(pair.lp.votes.shape, dtype=np.int64)
    out[tuple(pair.lp.support.T)] = np.floor(pair.x + INT_TOL).astype(np.int64)
    return out


def ceil_rounding(pair: PrimalDualPair) -> np.ndarray:
    out = np.zeros(pair.lp.votes.shape, dtype=np.int64)
    out[tuple(pair.lp.support.T)] = np.ceil(pair.x - INT_TOL).astype(np.int64)
    return out

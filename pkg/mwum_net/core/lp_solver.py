"""Dense two-phase simplex with Bland's rule.

Small exact-ish LPs only: every capacity and workload program in this
package has at most a few hundred variables.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import Infeasible, NoConvergence, Unbounded
from utils.config import LP_TOL

logger = logging.getLogger(__name__)

LE, GE, EQ = "<=", ">=", "="
SENSES = (LE, GE, EQ)
MAX_PIVOTS = 100000


@dataclass(frozen=True, eq=False)
class LinearProgram:
    """min (or max) c^T x s.t. A x (sense) b, lo <= x <= hi."""
    objective: np.ndarray
    A: np.ndarray
    senses: Tuple[str, ...]
    b: np.ndarray
    bounds: Tuple[Tuple[float, float], ...] = field(default=())
    maximize: bool = False

    def __post_init__(self):
        objective = np.asarray(self.objective, dtype=float).reshape(-1)
        A = np.asarray(self.A, dtype=float)
        if A.size == 0:
            A = A.reshape(0, objective.size)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        senses = tuple(self.senses)
        bounds = tuple(self.bounds) or tuple((0.0, math.inf) for _ in range(objective.size))
        if A.ndim != 2 or A.shape != (b.size, objective.size):
            raise ValueError(f"constraint matrix shape {A.shape} does not match "
                             f"{b.size} rows and {objective.size} variables")
        if len(senses) != b.size or any(s not in SENSES for s in senses):
            raise ValueError(f"need one sense from {SENSES} per row")
        if len(bounds) != objective.size:
            raise ValueError("need one (lo, hi) bound pair per variable")
        for lo, hi in bounds:
            if lo > hi or lo == math.inf or hi == -math.inf:
                raise ValueError(f"invalid bounds ({lo}, {hi})")
        if not (np.all(np.isfinite(objective)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("LP data must be finite")
        object.__setattr__(self, "objective", objective)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "senses", senses)
        object.__setattr__(self, "bounds", tuple((float(lo), float(hi)) for lo, hi in bounds))

    @property
    def num_vars(self) -> int:
        return self.objective.size

    @property
    def num_rows(self) -> int:
        return self.b.size


@dataclass(frozen=True, eq=False)
class LPSolution:
    value: float
    x: np.ndarray
    duals: np.ndarray
    pivots: int


class _StandardForm:
    """Map from the user's variables to nonnegative standard-form columns.

    Each original variable becomes either lo + x' or hi - x' or x+ - x-;
    finite upper bounds on shifted variables become extra <= rows.
    """

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self.columns: List[Tuple[int, float]] = []   # (original var, sign)
        self.offset = np.zeros(lp.num_vars)
        extra_rows: List[Tuple[int, float]] = []
        for j, (lo, hi) in enumerate(lp.bounds):
            if math.isfinite(lo):
                self.offset[j] = lo
                self.columns.append((j, 1.0))
                if math.isfinite(hi):
                    extra_rows.append((len(self.columns) - 1, hi - lo))
            elif math.isfinite(hi):
                self.offset[j] = hi
                self.columns.append((j, -1.0))
            else:
                self.columns.append((j, 1.0))
                self.columns.append((j, -1.0))

        n = len(self.columns)
        expand = np.zeros((lp.num_vars, n))
        for k, (j, sign) in enumerate(self.columns):
            expand[j, k] = sign
        self.expand = expand

        A = lp.A @ expand
        b = lp.b - lp.A @ self.offset
        senses = list(lp.senses)
        for k, bound in extra_rows:
            row = np.zeros(n)
            row[k] = 1.0
            A = np.vstack([A, row])
            b = np.append(b, bound)
            senses.append(LE)
        self.num_user_rows = lp.num_rows
        self.A, self.b, self.senses = A, b, senses

        sign = -1.0 if lp.maximize else 1.0
        self.cost = sign * (lp.objective @ expand)
        self.constant = float(lp.objective @ self.offset)

    def recover(self, z: np.ndarray) -> np.ndarray:
        return self.offset + self.expand @ z


def _pivot(tableau: np.ndarray, basis: List[int], row: int, col: int) -> None:
    tableau[row] /= tableau[row, col]
    for i in range(tableau.shape[0]):
        if i != row and tableau[i, col] != 0.0:
            tableau[i] -= tableau[i, col] * tableau[row]
    basis[row] = col


def _run_simplex(tableau: np.ndarray, basis: List[int], cost: np.ndarray,
                 allowed: int, tol: float, pivots: int) -> int:
    """Minimize cost over the first `allowed` columns; Bland's rule."""
    m = tableau.shape[0]
    while True:
        cB = cost[basis]
        reduced = cost[:allowed] - cB @ tableau[:, :allowed]
        entering = next((j for j in range(allowed) if reduced[j] < -tol), None)
        if entering is None:
            return pivots
        column = tableau[:, entering]
        best_row, best_ratio = None, math.inf
        for i in range(m):
            if column[i] > tol:
                ratio = tableau[i, -1] / column[i]
                if (ratio < best_ratio - tol
                        or (abs(ratio - best_ratio) <= tol and basis[i] < basis[best_row])):
                    best_row, best_ratio = i, ratio
        if best_row is None:
            raise Unbounded("objective is unbounded on the feasible region")
        _pivot(tableau, basis, best_row, entering)
        pivots += 1
        if pivots > MAX_PIVOTS:
            raise NoConvergence(f"simplex exceeded {MAX_PIVOTS} pivots")


def solve_lp(lp: LinearProgram, tol: float = LP_TOL) -> LPSolution:
    """Solve an LP to a vertex optimum; duals are d(value)/d(b) per user row."""
    sf = _StandardForm(lp)
    A, b = sf.A.copy(), sf.b.copy()
    m, n = A.shape
    senses = list(sf.senses)

    flipped = b < 0
    A[flipped] *= -1
    b[flipped] *= -1
    for i in np.flatnonzero(flipped):
        senses[i] = {LE: GE, GE: LE, EQ: EQ}[senses[i]]

    slack_cols = [i for i in range(m) if senses[i] != EQ]
    art_rows = [i for i in range(m) if senses[i] != LE]
    num_slack, num_art = len(slack_cols), len(art_rows)
    width = n + num_slack + num_art
    tableau = np.zeros((m, width + 1))
    tableau[:, :n] = A
    tableau[:, -1] = b
    basis = [-1] * m
    for k, i in enumerate(slack_cols):
        tableau[i, n + k] = 1.0 if senses[i] == LE else -1.0
        if senses[i] == LE:
            basis[i] = n + k
    for k, i in enumerate(art_rows):
        tableau[i, n + num_slack + k] = 1.0
        basis[i] = n + num_slack + k
    first_art = n + num_slack

    pivots = 0
    if num_art:
        phase_one = np.zeros(width)
        phase_one[first_art:] = 1.0
        pivots = _run_simplex(tableau, basis, phase_one, width, tol, pivots)
        infeasibility = float(phase_one[basis] @ tableau[:, -1])
        if infeasibility > tol * max(1.0, float(np.abs(b).max(initial=0.0))):
            raise Infeasible(f"no feasible point (phase one residual {infeasibility:.3e})")
        for i in range(m):
            if basis[i] >= first_art:
                candidates = np.flatnonzero(np.abs(tableau[i, :first_art]) > tol)
                if candidates.size:
                    _pivot(tableau, basis, i, int(candidates[0]))
                    pivots += 1
        logger.debug("Phase one finished after %d pivots", pivots)

    phase_two = np.zeros(width)
    phase_two[:n] = sf.cost
    pivots = _run_simplex(tableau, basis, phase_two, first_art, tol, pivots)

    z = np.zeros(width)
    z[basis] = tableau[:, -1]
    z = np.maximum(z[:n], 0.0)
    x = sf.recover(z)

    full = np.zeros((m, width))
    full[:, :n] = A
    for k, i in enumerate(slack_cols):
        full[i, n + k] = 1.0 if senses[i] == LE else -1.0
    for k, i in enumerate(art_rows):
        full[i, first_art + k] = 1.0
    y = np.linalg.solve(full[:, basis].T, phase_two[basis]) if m else np.zeros(0)
    y = np.where(flipped, -y, y)
    if lp.maximize:
        y = -y
    duals = y[:sf.num_user_rows]

    value = float(lp.objective @ x)
    logger.debug("LP solved: value=%.12g pivots=%d", value, pivots)
    return LPSolution(value=value, x=x, duals=duals, pivots=pivots)


def build_lp(objective: Sequence[float], rows: Sequence[Tuple[Sequence[float], str, float]],
             bounds: Optional[Sequence[Tuple[float, float]]] = None,
             maximize: bool = False) -> LinearProgram:
    """Convenience constructor from (coefficients, sense, rhs) rows."""
    objective = np.asarray(objective, dtype=float)
    if rows:
        A = np.array([r[0] for r in rows], dtype=float)
        senses = tuple(r[1] for r in rows)
        b = np.array([r[2] for r in rows], dtype=float)
    else:
        A, senses, b = np.zeros((0, objective.size)), (), np.zeros(0)
    return LinearProgram(objective=objective, A=A, senses=senses, b=b,
                         bounds=tuple(bounds or ()), maximize=maximize)

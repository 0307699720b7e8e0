"""Bounded-variable revised primal simplex.

The engine solves

    min c'x   s.t.   A x = b,   l <= x <= u

where the rows already include one slack column per constraint (built by
``milp._standard_form``).  Phase 1 minimises the total bound violation of
the basic variables instead of introducing artificial columns; that makes
warm starts cheap: after a branch-and-bound bound change only the variables
that became infeasible need to be repaired.

The basis is held as a sparse LU factorisation (SuperLU) plus a product-form
eta file; unit-commitment bases are extremely sparse, so FTRAN/BTRAN touch
kilobytes instead of the megabytes a dense inverse streams.  Pricing works
on the sparse transpose.  Dantzig pricing is used by default; Bland's rule
takes over after a run of degenerate steps and is dropped once the
objective moves again, which terminates degenerate cycling without paying
Bland's slow convergence everywhere.

``solve`` accepts changed bounds and rhs between calls (the matrix is
fixed), can restart from the engine's previous basis (``warm=True``), or
from a stored snapshot via ``load_state``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

AT_LOWER = 0
AT_UPPER = 1
BASIC = 2
FREE_NB = 3

# Converts accumulated work units (rough flop counts) into the
# deterministic "nominal seconds" reported as solve_time everywhere.
WORK_RATE = 2.0e8


class NumericalInstabilityError(RuntimeError):
    """Pivoting stalled beyond the anti-cycling safeguard."""


@dataclass
class LPOutcome:
    status: str  # 'optimal' | 'infeasible' | 'unbounded'
    x: np.ndarray
    objective: float
    reduced_costs: np.ndarray
    duals: np.ndarray
    basis: np.ndarray
    vstat: np.ndarray
    iterations: int
    work: float


class _Factor:
    """Sparse LU of the basis plus product-form eta updates."""

    def __init__(self, lu, m: int):
        self.lu = lu
        self.m = m
        self.etas: list[tuple[int, np.ndarray, np.ndarray, float]] = []

    def ftran(self, v: np.ndarray) -> np.ndarray:
        x = self.lu.solve(v) if self.lu is not None else v.copy()
        for r, idx, vals, piv in self.etas:
            xr = x[r] / piv
            if xr != 0.0:
                x[idx] -= xr * vals
            x[r] = xr
        return x

    def btran(self, c: np.ndarray) -> np.ndarray:
        y = c.copy()
        for r, idx, vals, piv in reversed(self.etas):
            dot = y[idx] @ vals
            y[r] = (y[r] - dot + y[r] * piv) / piv
        if self.lu is not None:
            y = self.lu.solve(y, trans="T")
        return y

    def push(self, r: int, w: np.ndarray, piv: float) -> None:
        idx = np.flatnonzero(w)
        self.etas.append((r, idx, w[idx].copy(), piv))

    @property
    def n_etas(self) -> int:
        return len(self.etas)


class SimplexEngine:
    """Reusable solver for one constraint matrix; bounds/rhs vary."""

    # magnitudes below this are numerical noise at our tolerances
    DROP_TOL = 1e-13

    def __init__(self, A: sp.csc_matrix, b: np.ndarray, c: np.ndarray,
                 feas_tol: float = 1e-7, opt_tol: float = 1e-9,
                 bland_after: int = 500, refactor_every: int = 80):
        A = A.tocsc()
        self.A = A
        self.At = A.T.tocsr()
        self.b = np.asarray(b, dtype=float)
        self.c = np.asarray(c, dtype=float)
        self.m, self.n = A.shape
        self.feas_tol = feas_tol
        self.opt_tol = opt_tol
        self.bland_after = bland_after
        self.refactor_every = refactor_every
        self.max_iter = 2000 + 80 * (self.m + self.n)
        self._indptr = A.indptr
        self._indices = A.indices
        self._data = A.data
        # persistent state reused by warm solves
        self.basis: np.ndarray | None = None
        self.vstat: np.ndarray | None = None
        self._factor: _Factor | None = None
        self.state_serial = 0

    # ------------------------------------------------------------------
    def _column_dense(self, j: int) -> np.ndarray:
        v = np.zeros(self.m)
        s, e = self._indptr[j], self._indptr[j + 1]
        v[self._indices[s:e]] = self._data[s:e]
        return v

    def _factorise(self, basis: np.ndarray) -> _Factor:
        if self.m == 0:
            return _Factor(None, 0)
        B = self.A[:, basis].tocsc()
        lu = spla.splu(B)
        return _Factor(lu, self.m)

    def _ftran_col(self, factor: _Factor, j: int) -> np.ndarray:
        w = factor.ftran(self._column_dense(j))
        w[np.abs(w) < self.DROP_TOL] = 0.0
        return w

    def _repair_basis(self, basis, vstat, lb, ub):
        """Greedy rebuild after a singular factorisation: keep as many of
        the given basis columns as stay numerically independent, fill the
        remaining rows with their slack columns."""
        m = self.m
        n_struct = self.n - m
        new_basis = np.arange(n_struct, self.n, dtype=np.int64)
        Binv = np.eye(m)
        free_row = np.ones(m, dtype=bool)  # rows still holding their slack
        vstat = vstat.copy()
        for j in basis:
            j = int(j)
            if j >= n_struct:
                if free_row[j - n_struct]:
                    free_row[j - n_struct] = False
                continue
            s, e = self._indptr[j], self._indptr[j + 1]
            w = Binv[:, self._indices[s:e]] @ self._data[s:e]
            wa = np.where(free_row, np.abs(w), 0.0)
            r = int(np.argmax(wa))
            if wa[r] < 1e-7:
                # dependent on what we already kept: leave it nonbasic
                vstat[j] = (AT_LOWER if np.isfinite(lb[j]) else
                            (AT_UPPER if np.isfinite(ub[j]) else FREE_NB))
                continue
            piv = w[r]
            brow = Binv[r] / piv
            w[r] = 0.0
            Binv -= np.outer(w, brow)
            Binv[r] = brow
            new_basis[r] = j
            free_row[r] = False
        vstat[:] = np.where(vstat == BASIC, AT_LOWER, vstat)
        vstat[new_basis] = BASIC
        bad = (vstat == AT_LOWER) & ~np.isfinite(lb)
        vstat[bad] = np.where(np.isfinite(ub[bad]), AT_UPPER, FREE_NB)
        return new_basis, vstat

    def _cold_state(self, lb, ub):
        n_struct = self.n - self.m
        basis = np.arange(n_struct, self.n, dtype=np.int64)
        vstat = np.empty(self.n, dtype=np.int8)
        lo_f = np.isfinite(lb[:n_struct])
        hi_f = np.isfinite(ub[:n_struct])
        vstat[:n_struct] = np.where(lo_f, AT_LOWER,
                                    np.where(hi_f, AT_UPPER, FREE_NB))
        vstat[n_struct:] = BASIC
        return basis, vstat

    def load_state(self, basis: np.ndarray, vstat: np.ndarray) -> float:
        """Adopt a stored basis snapshot; returns the refactorising work."""
        try:
            factor = self._factorise(basis)
        except RuntimeError:
            self.basis = None
            self.vstat = None
            self._factor = None
            return 0.0
        self.basis = basis.copy()
        self.vstat = vstat.copy()
        self._factor = factor
        self.state_serial += 1
        return 60.0 * self.m / WORK_RATE

    def _nonbasic_values(self, lb, ub, vstat) -> np.ndarray:
        x = np.zeros(self.n)
        low = vstat == AT_LOWER
        up = vstat == AT_UPPER
        x[low] = lb[low]
        x[up] = ub[up]
        x[~np.isfinite(x)] = 0.0
        return x

    def _reset_x(self, factor, basis, lb, ub, vstat, b) -> np.ndarray:
        x = self._nonbasic_values(lb, ub, vstat)
        x[basis] = 0.0
        x[basis] = factor.ftran(b - self.A @ x)
        return x

    # ------------------------------------------------------------------
    def solve(self, lb: np.ndarray, ub: np.ndarray, b: np.ndarray = None,
              warm: bool = False) -> LPOutcome:
        lb = np.asarray(lb, dtype=float)
        ub = np.asarray(ub, dtype=float)
        b = self.b if b is None else np.asarray(b, dtype=float)
        m = self.m
        work = 10.0 * (m + 1)
        iter_work = 40.0 * m + 10.0
        factor_work = 60.0 * m + 10.0

        if warm and self.basis is not None and self._factor is not None:
            basis = self.basis
            vstat = self.vstat.copy()
            vstat[basis] = BASIC
            factor = self._factor
        else:
            basis, vstat = self._cold_state(lb, ub)
            factor = self._factorise(basis)
        x = self._reset_x(factor, basis, lb, ub, vstat, b)

        piv_tol = 1e-7
        degen = 0  # consecutive degenerate pivots
        verify_left = 5
        cold_restarts = 0
        ban_events = 0
        n_iter = 0
        movable = (ub - lb) > 0.0
        banned = np.zeros(self.n, dtype=bool)  # fragile-pivot columns

        def refresh():
            nonlocal factor, x, cold_restarts, basis, vstat
            try:
                factor = self._factorise(basis)
            except RuntimeError:
                cold_restarts += 1
                if cold_restarts > 6:
                    raise NumericalInstabilityError(
                        "repeatedly singular basis") from None
                basis, vstat = self._repair_basis(basis, vstat, lb, ub)
                factor = self._factorise(basis)
            x = self._reset_x(factor, basis, lb, ub, vstat, b)

        while True:
            if n_iter > self.max_iter:
                raise NumericalInstabilityError(
                    f"simplex exceeded {self.max_iter} iterations")

            xb = x[basis]
            lbB = lb[basis]
            ubB = ub[basis]
            below = xb < lbB - self.feas_tol
            above = xb > ubB + self.feas_tol
            any_below = below.any()
            any_above = above.any()
            phase = 1 if (any_below or any_above) else 2

            if phase == 1:
                cost = np.zeros(self.n)
                cost[basis[below]] = -1.0
                cost[basis[above]] = 1.0
            else:
                cost = self.c

            y = factor.btran(cost[basis])
            y[np.abs(y) < self.DROP_TOL] = 0.0
            d = cost - self.At @ y
            work += iter_work + 15.0 * factor.n_etas

            is_lower = vstat == AT_LOWER
            is_upper = vstat == AT_UPPER
            is_free = vstat == FREE_NB
            elig = ((is_lower & movable & (d < -self.opt_tol))
                    | (is_upper & movable & (d > self.opt_tol))
                    | (is_free & (np.abs(d) > self.opt_tol)))
            elig &= ~banned

            if not elig.any():
                if banned.any():
                    # re-admit banned columns against a fresh factorisation
                    banned[:] = False
                    verify_left = max(verify_left, 1)
                # claimed optimal/infeasible; unless the factorisation is
                # fresh, refactorise once to confirm before terminating
                if verify_left > 0 and factor.n_etas > 0:
                    verify_left -= 1
                    refresh()
                    work += factor_work
                    n_iter += 1
                    continue
                status = 'infeasible' if phase == 1 else 'optimal'
                break

            n_iter += 1
            if factor.n_etas >= self.refactor_every:
                refresh()
                work += factor_work
                continue

            bland = degen >= self.bland_after
            if bland:
                j = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(elig, np.abs(d), -1.0)
                j = int(np.argmax(score))

            sigma = 1.0 if (is_lower[j] or (is_free[j] and d[j] < 0)) else -1.0
            w = self._ftran_col(factor, j)
            rate = -sigma * w  # movement of x_B per unit step
            feas_row = ~(below | above)

            def ratio_steps(tol):
                inc = rate > tol
                dec = rate < -tol
                steps = np.full(m, np.inf)
                msk = feas_row & inc
                steps[msk] = (ubB[msk] - xb[msk]) / rate[msk]
                msk = feas_row & dec
                steps[msk] = (lbB[msk] - xb[msk]) / rate[msk]
                if any_below:  # infeasible rows block only moving toward
                    msk = below & inc
                    steps[msk] = (lbB[msk] - xb[msk]) / rate[msk]
                if any_above:
                    msk = above & dec
                    steps[msk] = (ubB[msk] - xb[msk]) / rate[msk]
                np.clip(steps, 0.0, None, out=steps)
                return steps

            steps = ratio_steps(piv_tol)
            own = ub[j] - lb[j] if not is_free[j] else np.inf
            tmin = steps.min() if m else np.inf
            if not np.isfinite(min(own, tmin)):
                # no block at the working tolerance: confirm on the tiny
                # pivots we normally refuse before declaring a ray
                steps = ratio_steps(1e-12)
                tmin = steps.min() if m else np.inf

            if own <= tmin:
                if not np.isfinite(own):
                    if phase == 2:
                        status = 'unbounded'
                        break
                    raise NumericalInstabilityError(
                        "phase-1 ray: inconsistent bounds")
                # bound flip: entering variable runs to its other bound
                x[j] += sigma * own
                x[basis] = xb - sigma * own * w
                vstat[j] = AT_UPPER if vstat[j] == AT_LOWER else AT_LOWER
                degen = 0 if own > 1e-11 else degen + 1
                banned[:] = False
                continue

            if not np.isfinite(tmin):
                if phase == 2:
                    status = 'unbounded'
                    break
                raise NumericalInstabilityError(
                    "phase-1 ray: inconsistent bounds")

            cand = np.flatnonzero(steps <= tmin + 1e-10)
            if bland:
                r = int(cand[np.argmin(basis[cand])])
            else:
                aw = np.abs(w[cand])
                best = aw.max()
                cand2 = cand[aw >= best - 1e-12]
                r = int(cand2[np.argmin(basis[cand2])])

            if abs(w[r]) < 1e-6 and factor.n_etas > 0:
                # refuse a fragile pivot computed through a long eta chain:
                # refactorise and redo this iteration with fresh numbers
                refresh()
                work += factor_work
                continue
            if abs(w[r]) < 1e-7:
                # fragile even against a fresh factorisation: skip column
                banned[j] = True
                ban_events += 1
                if ban_events > 200:
                    raise NumericalInstabilityError(
                        "persistent fragile pivots")
                continue

            delta = steps[r]
            degen = 0 if delta > 1e-11 else degen + 1
            banned[:] = False
            leave = int(basis[r])
            x[j] += sigma * delta
            x[basis] = xb - sigma * delta * w

            # classify the bound the leaving variable hit
            if below[r] or (feas_row[r] and rate[r] < 0):
                vstat[leave] = AT_LOWER
                x[leave] = lb[leave]
            else:
                vstat[leave] = AT_UPPER
                x[leave] = ub[leave]
            basis[r] = j
            vstat[j] = BASIC
            factor.push(r, w, w[r])
            work += 8.0 * m

        obj = float(self.c @ x) if status == 'optimal' else np.inf
        y2 = factor.btran(self.c[basis])
        d2 = self.c - self.At @ y2
        self.basis = basis
        self.vstat = vstat
        self._factor = factor
        self.state_serial += 1
        return LPOutcome(status=status, x=x, objective=obj,
                         reduced_costs=d2, duals=y2, basis=basis.copy(),
                         vstat=vstat.copy(), iterations=n_iter,
                         work=work / WORK_RATE)

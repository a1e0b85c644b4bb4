"""Classical post-processing of click statistics.

Stochastic matrices act on outcome probability vectors by ``p' = P p``; the
matrices are column-stochastic (each column is the outcome distribution for
one input event), matching how every displayed post-processing acts on
POVM vectors via ``G' = P G``.  This module builds the dark-count map, the
single-photon loss map, coarse grainings, and solves the swap equation

    P_sq' . P_db = P_dc . P_sq

for ``P_dc`` as a small linear program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .detectors import MULTI, NO_CLICK, SINGLE, EventTable, POVM, enumerate_events
from .fock import BlockOperator

_ENTRY_TOL = 1e-12
_COLSUM_TOL = 1e-10
SWAP_FEASIBILITY_TOL = 1e-9


class StochasticMatrix:
    """Column-stochastic real matrix with optional event labels.

    Entries must be nonnegative up to ``1e-12`` (tiny negatives are clamped
    to zero) and every column must sum to 1 within ``1e-10``.
    """

    __slots__ = ("entries", "row_events", "col_events")

    def __init__(self, entries, row_events=None, col_events=None):
        a = np.asarray(entries, dtype=float)
        if a.ndim != 2:
            raise ValueError("entries must be a matrix")
        if a.min() < -_ENTRY_TOL:
            raise ValueError(f"negative entry {a.min():.3e} below tolerance")
        a = np.clip(a, 0.0, None)
        colsums = a.sum(axis=0)
        if np.abs(colsums - 1.0).max() > _COLSUM_TOL:
            raise ValueError(
                f"columns must sum to 1 (worst deviation {np.abs(colsums - 1.0).max():.3e})"
            )
        self.entries = a
        self.row_events = tuple(row_events) if row_events is not None else None
        self.col_events = tuple(col_events) if col_events is not None else None
        if self.row_events is not None and len(self.row_events) != a.shape[0]:
            raise ValueError("row_events length mismatch")
        if self.col_events is not None and len(self.col_events) != a.shape[1]:
            raise ValueError("col_events length mismatch")

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @classmethod
    def identity(cls, n: int, events=None) -> "StochasticMatrix":
        return cls(np.eye(n), row_events=events, col_events=events)

    def __matmul__(self, other: "StochasticMatrix") -> "StochasticMatrix":
        if self.shape[1] != other.shape[0]:
            raise ValueError("dimension mismatch in composition")
        if (
            self.col_events is not None
            and other.row_events is not None
            and self.col_events != other.row_events
        ):
            raise ValueError("event labels do not chain")
        return StochasticMatrix(
            self.entries @ other.entries,
            row_events=self.row_events,
            col_events=other.col_events,
        )


class CoarseGraining(StochasticMatrix):
    """Deterministic merge of outcomes: a 0/1 matrix with one 1 per column."""

    __slots__ = ("row_table",)

    def __init__(self, entries, row_events=None, col_events=None, row_table=None):
        super().__init__(entries, row_events=row_events, col_events=col_events)
        a = self.entries
        if not np.all((a == 0.0) | (a == 1.0)):
            raise ValueError("coarse graining entries must be 0 or 1")
        if not np.all(a.sum(axis=0) == 1.0):
            raise ValueError("each column must contain exactly one 1")
        self.row_table = row_table


def dark_count_matrix(dark_rates) -> StochasticMatrix:
    """Post-processing of all ``2^k`` click patterns by independent dark counts.

    Column ``c`` holds the distribution over observed patterns ``c'`` given
    true pattern ``c``: clicks are never erased (zero unless ``c`` is a
    subset of ``c'``), and each dark detector fires independently with its
    rate ``d_i``.  For one detector this is ``[[1-d, 0], [d, 1]]``.
    """
    d = np.atleast_1d(np.asarray(dark_rates, dtype=float))
    if (d < 0).any() or (d > 1).any():
        raise ValueError("dark rates must lie in [0, 1]")
    k = d.size
    events = enumerate_events(k)
    n = events.n_events
    p = np.zeros((n, n))
    for j, c in enumerate(events.masks):
        for i, c_out in enumerate(events.masks):
            if c & ~c_out:
                continue
            prob = 1.0
            for det in range(k):
                if (c >> det) & 1:
                    continue
                prob *= d[det] if (c_out >> det) & 1 else 1.0 - d[det]
            p[i, j] = prob
    return StochasticMatrix(p, row_events=events.labels, col_events=events.labels)


def single_photon_loss_matrix(eta) -> StochasticMatrix:
    """Loss as post-processing, valid on at most one incident photon.

    Acts on the ``k + 1`` outcomes {no-click} + singles: the no-click event
    stays put, and single click ``s`` survives with probability ``eta_s``
    or decays to no-click.  For one detector this is ``[[1, 1-eta], [0, eta]]``.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if (eta <= 0).any() or (eta > 1).any():
        raise ValueError("efficiencies must lie in (0, 1]")
    k = eta.size
    p = np.eye(k + 1)
    p[0, 1:] = 1.0 - eta
    for s in range(k):
        p[s + 1, s + 1] = eta[s]
    labels = enumerate_events(k).labels[: k + 1]
    return StochasticMatrix(p, row_events=labels, col_events=labels)


@dataclass(frozen=True)
class DarkCountConditionsReport:
    """Pass/fail of the three structural conditions a dark-count map obeys.

    1. no single-click event becomes a different single-click event,
    2. no click event becomes the no-click event,
    3. each single-click event survives at least as often as no-click does.
    """

    passed: bool
    single_to_single: tuple[tuple[int, int], ...]
    click_erased: tuple[tuple[int, int], ...]
    survival_violations: tuple[int, ...]


def validate_dark_count_pp(
    p: StochasticMatrix, events: EventTable, tol: float = 1e-9
) -> DarkCountConditionsReport:
    """Check the conditions required of a dark-count post-processing."""
    a = p.entries
    n = events.n_events
    if a.shape != (n, n):
        raise ValueError(f"matrix shape {a.shape} does not match {n} events")
    singles = events.single_indices
    cond1 = tuple(
        (s, s2) for s in singles for s2 in singles if s != s2 and a[s, s2] > tol
    )
    cond2 = tuple((0, i) for i in range(1, n) if a[0, i] > tol)
    p00 = a[0, 0]
    cond3 = tuple(s for s in singles if a[s, s] < p00 - tol)
    return DarkCountConditionsReport(
        passed=not (cond1 or cond2 or cond3),
        single_to_single=cond1,
        click_erased=cond2,
        survival_violations=cond3,
    )


def multiclick_coarse_graining(events: EventTable) -> CoarseGraining:
    """Merge all multi-click patterns into a single multi event.

    The resulting ``(n_S + 2) x 2^k`` matrix is the identity on the no-click
    and single-click events and routes every multi-click column to one row.
    """
    if events.k < 2:
        raise ValueError("coarse graining needs at least 2 detectors (no multi events)")
    singles = events.single_indices
    multis = events.multi_indices
    n_s = len(singles)
    n_in = events.n_events
    m = np.zeros((n_s + 2, n_in))
    m[0, 0] = 1.0
    for row, s in enumerate(singles, start=1):
        m[row, s] = 1.0
    for mu in multis:
        m[n_s + 1, mu] = 1.0
    row_labels = (events.labels[0],) + tuple(events.labels[s] for s in singles) + (MULTI,)
    row_classes = (NO_CLICK,) + (SINGLE,) * n_s + (MULTI,)
    table = EventTable(k=events.k, labels=row_labels, classes=row_classes, masks=())
    return CoarseGraining(
        m, row_events=row_labels, col_events=events.labels, row_table=table
    )


def apply_postprocessing(p: StochasticMatrix, povm: POVM, events: EventTable | None = None) -> POVM:
    """Post-processed measurement ``G' = P G`` (element-wise mixing)."""
    if p.shape[1] != len(povm):
        raise ValueError("matrix columns must match the POVM element count")
    if events is None:
        events = getattr(p, "row_table", None)
    if events is None:
        raise ValueError("no event table for the output POVM")
    elements = []
    for i in range(p.shape[0]):
        acc = BlockOperator.zeros(povm.layout)
        for j, el in enumerate(povm.elements):
            w = p.entries[i, j]
            if w != 0.0:
                acc = acc + w * el
        elements.append(acc)
    return POVM(povm.layout, elements, events)


@dataclass(frozen=True)
class SwapLPResult:
    """Outcome of the swap-equation linear program.

    ``residual`` is the smallest achievable worst-case violation of
    ``P_sq' . P_db = P_dc . P_sq`` over all column-stochastic ``P_dc``; a
    residual far above tolerance signals structural infeasibility rather
    than numerical noise.
    """

    feasible: bool
    matrix: StochasticMatrix | None
    residual: float
    tolerance: float = SWAP_FEASIBILITY_TOL


def solve_swap_lp(
    p_db: StochasticMatrix,
    p_sq: StochasticMatrix,
    p_sq_prime: StochasticMatrix | None = None,
    tol: float = SWAP_FEASIBILITY_TOL,
) -> SwapLPResult:
    """Find ``P_dc`` with ``P_sq' . P_db = P_dc . P_sq``, or certify failure.

    Solves ``min t`` subject to entrywise ``|P_dc . P_sq - P_sq' . P_db| <= t``
    with ``P_dc`` column-stochastic; feasible iff the optimum is within
    ``tol``.  The returned residual is re-verified independently of the
    solver.
    """
    if p_sq_prime is None:
        p_sq_prime = p_sq
    if p_sq_prime.shape[1] != p_db.shape[0]:
        raise ValueError("P_sq' columns must match P_db rows")
    if p_sq.shape[1] != p_db.shape[1]:
        raise ValueError("P_sq and P_db must act on the same input events")
    if p_sq_prime.shape[0] != p_sq.shape[0]:
        raise ValueError("P_sq' and P_sq must have the same output events")

    target = p_sq_prime.entries @ p_db.entries
    n_out, n_in = target.shape
    s = p_sq.entries
    n_var = n_out * n_out + 1  # vec(P_dc) then the residual bound t

    # |(P_dc S)[i, j] - target[i, j]| <= t, P_dc >= 0, column sums exactly 1.
    rows_ub = []
    rhs_ub = []
    for i in range(n_out):
        for j in range(n_in):
            coeff = np.zeros(n_var)
            coeff[i * n_out : (i + 1) * n_out] = s[:, j]
            coeff[-1] = -1.0
            rows_ub.append(coeff.copy())
            rhs_ub.append(target[i, j])
            coeff = -coeff
            coeff[-1] = -1.0
            rows_ub.append(coeff)
            rhs_ub.append(-target[i, j])
    rows_eq = []
    rhs_eq = []
    for col in range(n_out):
        coeff = np.zeros(n_var)
        for row in range(n_out):
            coeff[row * n_out + col] = 1.0
        rows_eq.append(coeff)
        rhs_eq.append(1.0)

    cost = np.zeros(n_var)
    cost[-1] = 1.0
    res = linprog(
        cost,
        A_ub=np.array(rows_ub),
        b_ub=np.array(rhs_ub),
        A_eq=np.array(rows_eq),
        b_eq=np.array(rhs_eq),
        bounds=[(0, None)] * n_var,
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"LP solver failed: {res.message}")
    p_dc = res.x[:-1].reshape(n_out, n_out)
    residual = float(np.abs(p_dc @ s - target).max())
    if residual > tol:
        return SwapLPResult(feasible=False, matrix=None, residual=residual, tolerance=tol)
    p_dc = np.clip(p_dc, 0.0, None)
    p_dc = p_dc / p_dc.sum(axis=0, keepdims=True)
    matrix = StochasticMatrix(
        p_dc, row_events=p_sq_prime.row_events, col_events=p_sq.row_events
    )
    residual = float(np.abs(matrix.entries @ s - target).max())
    return SwapLPResult(feasible=True, matrix=matrix, residual=residual, tolerance=tol)


def coarse_grained_dc_ansatz(
    p_db: StochasticMatrix, cg: CoarseGraining
) -> StochasticMatrix:
    """Closed-form ``P_dc`` for the multi-click coarse graining.

    Requires the dark-count map to never demote a multi-click (its
    top-right block must vanish).  The result keeps the non-multi block of
    ``P_db``, routes all multi mass into the last row via column sums, and
    satisfies ``M_cg . P_db = P_dc . M_cg`` exactly.
    """
    if cg.shape[1] != p_db.shape[0] or p_db.shape[0] != p_db.shape[1]:
        raise ValueError("coarse graining does not match the dark-count map")
    table = cg.row_table
    if table is None:
        raise ValueError("coarse graining carries no output event table")
    # Column j of cg has its single 1 in the row that event j merges into.
    merged_row = cg.entries.argmax(axis=0)
    multi_row = cg.shape[0] - 1
    non_multi_cols = np.flatnonzero(merged_row != multi_row)
    multi_cols = np.flatnonzero(merged_row == multi_row)

    a = p_db.entries
    bad = a[np.ix_(non_multi_cols, multi_cols)]
    if bad.size and np.abs(bad).max() > _ENTRY_TOL:
        i, j = np.unravel_index(np.abs(bad).argmax(), bad.shape)
        raise ValueError(
            "dark-count map demotes a multi-click: entry "
            f"[{non_multi_cols[i]}, {multi_cols[j]}] = {bad[i, j]:.3e}"
        )

    n = len(non_multi_cols)
    out = np.zeros((n + 1, n + 1))
    out[:n, :n] = a[np.ix_(non_multi_cols, non_multi_cols)]
    out[n, :n] = a[np.ix_(multi_cols, non_multi_cols)].sum(axis=0)
    out[n, n] = 1.0
    return StochasticMatrix(out, row_events=table.labels, col_events=table.labels)


def bb84_qubit_squasher() -> StochasticMatrix:
    """Post-processing of the two-detector BB84 squasher, per basis.

    Maps a double click to a uniformly random single click in the same
    basis; no-click and single clicks pass through.
    """
    fine = enumerate_events(2)
    entries = np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.5],
            [0.0, 0.0, 1.0, 0.5],
        ]
    )
    return StochasticMatrix(
        entries, row_events=fine.labels[:3], col_events=fine.labels
    )


def bb84_squashed_dark_matrix(d: float) -> StochasticMatrix:
    """The forced dark-count map on squashed BB84 outcomes at equal rates.

    This is the unique solution of the swap equation for the two-detector
    qubit squasher when both dark count rates equal ``d``.
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError("dark rate must lie in [0, 1]")
    entries = np.array(
        [
            [(1.0 - d) ** 2, 0.0, 0.0],
            [d * (1.0 - d / 2.0), 1.0 - d / 2.0, d / 2.0],
            [d * (1.0 - d / 2.0), d / 2.0, 1.0 - d / 2.0],
        ]
    )
    labels = enumerate_events(2).labels[:3]
    return StochasticMatrix(entries, row_events=labels, col_events=labels)

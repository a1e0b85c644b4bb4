"""Flag-state target measurements and weight estimation.

The flag-state squasher keeps the low photon-number blocks of a
threshold-detector POVM intact and replaces everything above the cutoff by
orthonormal classical flags, one per event.  What fraction of the state the
flags absorb is controlled by the weight outside the preserved subspace,
estimated from one observed event probability and propagated through the
noise channels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detectors import POVM, DetectionSetup, EventTable, build_threshold_povm
from .fock import (
    FLAG_LABEL,
    BlockOperator,
    SpaceLayout,
    min_eigenvalue,
    photon_label,
)

_FLAG_TOL = 1e-12


class SquashedPOVM:
    """Measurement on preserved photon blocks plus a flag block.

    Built by :func:`flag_state_target` the flag block of element ``i`` is
    exactly ``|i><i|``; derived measurements (for example the uniform-noise
    mixtures of :func:`detcert.channels.inf_norm_mixing`) relax that and are
    marked ``strict_flags=False``.
    """

    __slots__ = ("layout", "elements", "events", "strict_flags")

    def __init__(self, layout: SpaceLayout, elements, events: EventTable, strict_flags=True):
        elements = tuple(elements)
        if not layout.has(FLAG_LABEL):
            raise ValueError("layout has no flag block")
        if len(elements) != events.n_events:
            raise ValueError(f"{len(elements)} elements for {events.n_events} events")
        if layout.dim(FLAG_LABEL) != len(elements):
            raise ValueError("flag dimension must equal the event count")
        total = BlockOperator.zeros(layout)
        for i, el in enumerate(elements):
            if el.layout != layout:
                raise ValueError(f"element {i} lives on a different layout")
            lo = min_eigenvalue(el)
            if lo < -1e-10:
                raise ValueError(f"element {i} is not PSD (eigenvalue {lo:.3e})")
            if strict_flags:
                want = np.zeros((len(elements),) * 2)
                want[i, i] = 1.0
                dev = np.abs(el.block(FLAG_LABEL) - want).max()
                if dev > _FLAG_TOL:
                    raise ValueError(f"element {i} flag block deviates by {dev:.3e}")
            total = total + el
        ident = BlockOperator.identity(layout)
        dev = max(
            np.abs(total.block(lab) - ident.block(lab)).max() for lab in layout.labels
        )
        if dev > 1e-10:
            raise ValueError(f"completeness violated by {dev:.3e}")
        self.layout = layout
        self.elements = elements
        self.events = events
        self.strict_flags = strict_flags

    @property
    def flag_dim(self) -> int:
        return self.layout.dim(FLAG_LABEL)

    def __len__(self) -> int:
        return len(self.elements)


def flag_state_target(povm: POVM, cutoff: int) -> SquashedPOVM:
    """Flag-state target measurement for ``povm`` with the given cutoff.

    Element ``i`` keeps the blocks ``m <= cutoff`` of the source element and
    appends the flag ``|i><i|``; blocks above the cutoff are dropped (their
    role is taken over by the flags).
    """
    numbers = povm.layout.photon_numbers()
    if cutoff not in numbers:
        raise ValueError(f"source POVM has no block m={cutoff}")
    preserved = [photon_label(m) for m in numbers if m <= cutoff]
    n = len(povm)
    layout = SpaceLayout(
        tuple((lab, povm.layout.dim(lab)) for lab in preserved) + ((FLAG_LABEL, n),)
    )
    elements = []
    for i, el in enumerate(povm.elements):
        blocks = {lab: el.block(lab) for lab in preserved}
        flag = np.zeros((n, n))
        flag[i, i] = 1.0
        blocks[FLAG_LABEL] = flag
        elements.append(BlockOperator(layout, blocks))
    return SquashedPOVM(layout, elements, povm.events)


@dataclass(frozen=True)
class WeightBound:
    """Upper bound on the state weight outside the preserved blocks.

    Derived from one observed event probability and the extremal eigenvalues
    of the event operator compressed inside and outside the cutoff.
    """

    value: float
    event: tuple[str, ...]
    cutoff: int
    p_observed: float
    lambda_inside: float
    lambda_outside: float


def _resolve_event(events: EventTable, event) -> tuple[int, ...]:
    if isinstance(event, str):
        if event == "multi":
            idx = events.multi_indices
            if not idx:
                raise ValueError("event table has no multi-click events")
            return idx
        return (events.index_of(event),)
    if isinstance(event, (int, np.integer)):
        return (int(event),)
    out = []
    for e in event:
        out.extend(_resolve_event(events, e))
    return tuple(out)


def weight_bound(povm: POVM, event, p_observed: float, cutoff: int) -> WeightBound:
    """Bound the weight outside blocks ``m <= cutoff`` from one observation.

    ``event`` may be an index, a label, an iterable of either, or the string
    ``"multi"`` for the union of all multi-click patterns.  The bound is

        (p - lmin_inside) / (lmin_outside - lmin_inside)

    clamped to [0, 1], where the extremal eigenvalues are taken over the
    blocks at or below the cutoff and strictly above it.  The POVM must
    carry at least one block above the cutoff; a nearly equal pair of
    eigenvalues makes the event uninformative and is rejected.
    """
    if not 0.0 <= p_observed <= 1.0:
        raise ValueError("observed probability must lie in [0, 1]")
    numbers = povm.layout.photon_numbers()
    inside = [m for m in numbers if m <= cutoff]
    outside = [m for m in numbers if m > cutoff]
    if not outside:
        raise ValueError(f"POVM has no blocks above the cutoff {cutoff}")
    idx = _resolve_event(povm.events, event)
    gamma = BlockOperator.zeros(povm.layout)
    for i in idx:
        gamma = gamma + povm.elements[i]

    def block_min(ms):
        lo = None
        for m in ms:
            lab = photon_label(m)
            a = gamma.block(lab)
            a = (a + a.conj().T) / 2.0
            val = float(np.linalg.eigvalsh(a)[0])
            lo = val if lo is None else min(lo, val)
        return lo

    lam_in = block_min(inside)
    lam_out = block_min(outside)
    denom = lam_out - lam_in
    if denom <= 1e-12:
        raise ValueError(
            f"uninformative event: eigenvalue gap {denom:.3e} is not positive"
        )
    raw = (p_observed - lam_in) / denom
    return WeightBound(
        value=float(min(1.0, max(0.0, raw))),
        event=tuple(povm.events.labels[i] for i in idx),
        cutoff=cutoff,
        p_observed=p_observed,
        lambda_inside=lam_in,
        lambda_outside=lam_out,
    )


def propagate_weight(
    weight: float, p_no_dark: float, eta_min: float, eta_star: float
) -> float:
    """Weight outside the preserved blocks after the noise channels.

    ``p_no_dark`` is the probability that no detector fires a dark count
    (the no-click survival entry of the dark-count map) and
    ``eta_min / eta_star`` is the single-photon survival of the loss
    channel:  ``W' = 1 - p_no_dark * (eta_min / eta_star) * (1 - W)``.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValueError("weight must lie in [0, 1]")
    if not 0.0 <= p_no_dark <= 1.0:
        raise ValueError("p_no_dark must lie in [0, 1]")
    if not 0.0 < eta_star <= 1.0:
        raise ValueError("eta_star must lie in (0, 1]")
    if not 0.0 <= eta_min <= eta_star:
        raise ValueError("eta_min must lie in [0, eta_star]")
    return 1.0 - p_no_dark * (eta_min / eta_star) * (1.0 - weight)


def eta_star_range(eta_min: float, eta_max: float) -> tuple[float, float]:
    """Admissible common efficiencies for the loss reduction.

    The loss split stays stochastic exactly for
    ``eta_star in [eta_min / (1 - (eta_max - eta_min)), 1]``.
    """
    if not 0.0 < eta_min <= eta_max <= 1.0:
        raise ValueError("need 0 < eta_min <= eta_max <= 1")
    spread = eta_max - eta_min
    if spread >= 1.0:
        raise ValueError("efficiency spread must be below 1")
    lo = eta_min / (1.0 - spread)
    if lo > 1.0 + 1e-12:
        raise ValueError(
            f"efficiencies too spread: admissible lower bound {lo} exceeds 1"
        )
    return (min(lo, 1.0), 1.0)


@dataclass(frozen=True)
class GridMinimumWeight:
    """Smallest weight bound over a user-supplied efficiency grid.

    A search heuristic only: the minimum over a grid is not a proof that
    the bound holds for every admissible efficiency.
    """

    value: float
    eta: tuple[float, ...]
    bounds: tuple[WeightBound, ...]
    note: str = "grid minimum over supplied efficiencies, not a certified bound"


def min_weight_over_eta_grid(
    setup: DetectionSetup,
    event,
    p_observed: float,
    cutoff: int,
    eta_grid,
    build_cutoff: int | None = None,
) -> GridMinimumWeight:
    """Evaluate :func:`weight_bound` on each grid point and take the minimum.

    The POVM is rebuilt at every grid efficiency with blocks up to
    ``build_cutoff`` (default ``cutoff + 1``) so the outside compression is
    represented.
    """
    build_n = build_cutoff if build_cutoff is not None else cutoff + 1
    bounds = []
    best = None
    best_eta = None
    for eta in eta_grid:
        povm = build_threshold_povm(setup.with_eta(eta), build_n)
        wb = weight_bound(povm, event, p_observed, cutoff)
        bounds.append(wb)
        if best is None or wb.value < best.value:
            best = wb
            best_eta = tuple(np.atleast_1d(np.asarray(eta, dtype=float)).tolist())
    if best is None:
        raise ValueError("empty efficiency grid")
    return GridMinimumWeight(value=best.value, eta=best_eta, bounds=tuple(bounds))

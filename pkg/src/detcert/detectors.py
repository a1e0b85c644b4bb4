"""Click-pattern bookkeeping and threshold-detector POVM construction.

A detection setup is a passive linear-optics circuit feeding ``k`` threshold
detectors: an isometry maps the input modes into the detector modes, each
detector has an efficiency ``eta_i`` (a beam splitter of transmission
``sqrt(eta_i)`` in front of a lossless detector), and each detector reports
click or no-click.  The POVM elements are computed exactly on truncated
photon-number blocks by enumerating photon placements, with no dark counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fock import BlockOperator, SpaceLayout, min_eigenvalue, photon_label

NO_CLICK = "no-click"
SINGLE = "single"
MULTI = "multi"

MAX_DETECTORS = 4
MAX_CUTOFF = 3

_ISOMETRY_TOL = 1e-10
_ASSUMPTION_TOL = 1e-10


@dataclass(frozen=True)
class EventTable:
    """Ordered click events with class labels.

    For a fine-grained table the events are all ``2^k`` click patterns of
    ``k`` detectors, ordered by increasing click count and then by numeric
    mask.  Coarse-grained tables (for example all multi-clicks merged into
    one event) have ``masks`` set to ``None`` for merged entries.
    """

    k: int
    labels: tuple[str, ...]
    classes: tuple[str, ...]
    masks: tuple = ()

    def __post_init__(self):
        if len(self.labels) != len(self.classes):
            raise ValueError("labels and classes must have equal length")
        bad = set(self.classes) - {NO_CLICK, SINGLE, MULTI}
        if bad:
            raise ValueError(f"unknown event classes {bad}")
        if self.classes.count(NO_CLICK) != 1 or self.classes[0] != NO_CLICK:
            raise ValueError("exactly one no-click event, and it must come first")

    @property
    def n_events(self) -> int:
        return len(self.labels)

    @property
    def single_indices(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.classes) if c == SINGLE)

    @property
    def multi_indices(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.classes) if c == MULTI)

    def index_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no event labelled {label!r}") from None


def enumerate_events(k: int) -> EventTable:
    """All ``2^k`` click patterns of ``k`` detectors, in canonical order.

    Ordering is by click count (popcount) and then by numeric mask; the
    class is no-click, single or multi according to the click count.  Labels
    are the patterns as bit strings, detector 1 in the rightmost position.
    """
    if not isinstance(k, int) or not 1 <= k <= 16:
        raise ValueError(f"detector count {k} outside [1, 16]")
    masks = sorted(range(2**k), key=lambda c: (bin(c).count("1"), c))
    classes = []
    for c in masks:
        n = bin(c).count("1")
        classes.append(NO_CLICK if n == 0 else SINGLE if n == 1 else MULTI)
    labels = tuple(format(c, f"0{k}b") for c in masks)
    return EventTable(k=k, labels=labels, classes=tuple(classes), masks=tuple(masks))


@dataclass(frozen=True)
class DetectionSetup:
    """Passive linear-optics front end plus per-detector efficiencies.

    ``mode_map`` is a ``k x n_in`` complex matrix whose columns are
    orthonormal: it embeds the input modes isometrically into the detector
    modes, so photon number is conserved before loss.
    """

    k: int
    mode_map: np.ndarray
    eta: np.ndarray
    basis_tag: str | None = None

    def __post_init__(self):
        mm = np.asarray(self.mode_map, dtype=complex)
        eta = np.asarray(self.eta, dtype=float)
        if mm.ndim != 2 or mm.shape[0] != self.k:
            raise ValueError(f"mode_map must be k x n_in with k={self.k}")
        n_in = mm.shape[1]
        gram = mm.conj().T @ mm
        if np.abs(gram - np.eye(n_in)).max() > _ISOMETRY_TOL:
            raise ValueError("mode_map columns are not orthonormal (not an isometry)")
        if eta.shape != (self.k,):
            raise ValueError(f"eta must have length {self.k}")
        if (eta < 0).any() or (eta > 1).any():
            raise ValueError("efficiencies must lie in [0, 1]")
        object.__setattr__(self, "mode_map", mm)
        object.__setattr__(self, "eta", eta)

    @property
    def n_in(self) -> int:
        return self.mode_map.shape[1]

    def with_eta(self, eta) -> "DetectionSetup":
        return replace(self, eta=np.asarray(_broadcast_eta(eta, self.k), dtype=float))


def _broadcast_eta(eta, k: int):
    arr = np.atleast_1d(np.asarray(eta, dtype=float))
    if arr.size == 1:
        return np.full(k, float(arr[0]))
    if arr.size != k:
        raise ValueError(f"expected {k} efficiencies, got {arr.size}")
    return arr


def passive_bb84_setup(eta=1.0) -> DetectionSetup:
    """Polarisation BB84 with a passive 50/50 basis choice and four detectors.

    Detector order: H, V (rectilinear basis) then D, A (diagonal basis).
    """
    s = 1.0 / math.sqrt(2.0)
    mode_map = np.array(
        [
            [s, 0.0],
            [0.0, s],
            [0.5, 0.5],
            [0.5, -0.5],
        ]
    )
    return DetectionSetup(k=4, mode_map=mode_map, eta=_broadcast_eta(eta, 4))


def active_bb84_setups(eta=1.0) -> dict[str, DetectionSetup]:
    """Active BB84: one two-detector setup per basis choice."""
    s = 1.0 / math.sqrt(2.0)
    z = DetectionSetup(k=2, mode_map=np.eye(2), eta=_broadcast_eta(eta, 2), basis_tag="Z")
    x = DetectionSetup(
        k=2,
        mode_map=np.array([[s, s], [s, -s]]),
        eta=_broadcast_eta(eta, 2),
        basis_tag="X",
    )
    return {"Z": z, "X": x}


class POVM:
    """Threshold-detector measurement on photon-number blocks.

    One Hermitian PSD element per event, complete on every block.
    """

    __slots__ = ("layout", "elements", "events")

    def __init__(self, layout: SpaceLayout, elements, events: EventTable):
        elements = tuple(elements)
        if len(elements) != events.n_events:
            raise ValueError(
                f"{len(elements)} elements for {events.n_events} events"
            )
        total = BlockOperator.zeros(layout)
        for i, el in enumerate(elements):
            if el.layout != layout:
                raise ValueError(f"element {i} lives on a different layout")
            lo = min_eigenvalue(el)
            if lo < -1e-10:
                raise ValueError(
                    f"element {events.labels[i]!r} is not PSD (eigenvalue {lo:.3e})"
                )
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

    def __len__(self) -> int:
        return len(self.elements)

    def element(self, label: str) -> BlockOperator:
        return self.elements[self.events.index_of(label)]


def _occupations(n_modes: int, total: int):
    """All occupation tuples of ``n_modes`` modes with ``total`` photons."""
    if n_modes == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _occupations(n_modes - 1, total - first):
            yield (first,) + rest


def _lift_isometry(mode_map: np.ndarray, m: int):
    """Second-quantized action of the mode map on the ``m``-photon block.

    Returns ``(V, det_occs, in_occs)`` where ``V[n, t]`` is the amplitude of
    detector occupation ``n`` in the image of input occupation ``t``.
    """
    k, n_in = mode_map.shape
    in_occs = list(_occupations(n_in, m))
    det_occs = list(_occupations(k, m))
    det_index = {occ: i for i, occ in enumerate(det_occs)}
    v = np.zeros((len(det_occs), len(in_occs)), dtype=complex)
    for col, t in enumerate(in_occs):
        # Start from vacuum amplitudes over intermediate photon sectors and
        # apply (sum_i U[i, j] b_i^dag) once per photon of input mode j.
        amps = {(0,) * k: 1.0 + 0.0j}
        for j, t_j in enumerate(t):
            for _ in range(t_j):
                nxt: dict[tuple, complex] = {}
                for occ, a in amps.items():
                    for i in range(k):
                        coeff = mode_map[i, j]
                        if coeff == 0:
                            continue
                        new = list(occ)
                        new[i] += 1
                        key = tuple(new)
                        nxt[key] = nxt.get(key, 0.0) + a * coeff * math.sqrt(occ[i] + 1)
                amps = nxt
        norm = math.sqrt(math.prod(math.factorial(t_j) for t_j in t))
        for occ, a in amps.items():
            v[det_index[occ], col] = a / norm
    return v, det_occs, in_occs


def build_threshold_povm(setup: DetectionSetup, cutoff: int) -> POVM:
    """Exact threshold-detector POVM on photon blocks ``m = 0 .. cutoff``.

    Each input Fock state is pushed through the mode-map isometry; detector
    ``i`` then keeps each photon with probability ``eta_i`` and clicks iff at
    least one survives.  The ``m = 0`` blocks are independent of ``eta`` and
    give the no-click event with certainty.
    """
    if not isinstance(cutoff, int) or cutoff < 1:
        raise ValueError("cutoff must be an integer >= 1")
    if cutoff > MAX_CUTOFF:
        raise ValueError(f"cutoff {cutoff} exceeds the supported maximum {MAX_CUTOFF}")
    if setup.k > MAX_DETECTORS:
        raise ValueError(f"detector count {setup.k} exceeds {MAX_DETECTORS}")

    events = enumerate_events(setup.k)
    one_minus_eta = 1.0 - setup.eta
    blocks_per_event: list[dict[str, np.ndarray]] = [dict() for _ in events.labels]
    layout_blocks = []
    for m in range(cutoff + 1):
        v, det_occs, in_occs = _lift_isometry(setup.mode_map, m)
        dim = len(in_occs)
        layout_blocks.append((photon_label(m), dim))
        # Survival probabilities per detector occupation: detector i with n_i
        # photons stays dark with probability (1 - eta_i)^(n_i).
        dark = np.array(
            [[one_minus_eta[i] ** occ[i] for i in range(setup.k)] for occ in det_occs]
        )
        for e, mask in enumerate(events.masks):
            weights = np.ones(len(det_occs))
            for i in range(setup.k):
                col = dark[:, i]
                weights = weights * ((1.0 - col) if (mask >> i) & 1 else col)
            if not weights.any():
                continue
            block = v.conj().T @ (weights[:, None] * v)
            blocks_per_event[e][photon_label(m)] = (block + block.conj().T) / 2.0

    layout = SpaceLayout(tuple(layout_blocks))
    elements = [BlockOperator(layout, blocks) for blocks in blocks_per_event]
    return POVM(layout, elements, events)


@dataclass(frozen=True)
class SinglePhotonAssumptionReport:
    """Check that clicks cannot outnumber photons.

    Lists, per multi-click element, the largest entry of its vacuum and
    one-photon blocks, and per single-click element the largest entry of its
    vacuum block.  All must vanish for the dark-count reduction to apply.
    """

    passed: bool
    max_violation: float
    entries: tuple[tuple[str, str, float], ...] = field(repr=False)
    tolerance: float = _ASSUMPTION_TOL

    @property
    def violations(self) -> tuple[tuple[str, str, float], ...]:
        return tuple(e for e in self.entries if e[2] > self.tolerance)


def verify_single_photon_assumption(povm: POVM) -> SinglePhotonAssumptionReport:
    """Report on the no-more-clicks-than-photons structure of ``povm``."""
    events = povm.events
    entries = []
    m0, m1 = photon_label(0), photon_label(1)
    for i in events.multi_indices:
        el = povm.elements[i]
        entries.append((events.labels[i], m0, float(np.abs(el.block(m0)).max())))
        if povm.layout.has(m1):
            entries.append((events.labels[i], m1, float(np.abs(el.block(m1)).max())))
    for i in events.single_indices:
        el = povm.elements[i]
        entries.append((events.labels[i], m0, float(np.abs(el.block(m0)).max())))
    worst = max((v for _, _, v in entries), default=0.0)
    return SinglePhotonAssumptionReport(
        passed=worst <= _ASSUMPTION_TOL, max_violation=worst, entries=tuple(entries)
    )

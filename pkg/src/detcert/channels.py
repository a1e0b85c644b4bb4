"""Noise channels that absorb detector imperfections, and their certification.

Each construction realizes the statement "the imperfect measurement equals a
noise channel followed by the ideal measurement": dark counts are pushed
into a measure-and-reprepare branch on the one-photon block, unequal
efficiencies into a probabilistic split of the loss post-processing, and a
generic deviation ``q`` into a branch that surrenders part of the preserved
state to the flags.

Channels are stored structurally as sums of primitive completely positive
terms; the Choi matrix is derived on demand by pushing a full matrix-unit
basis through the structure, so certification (PSD Choi, trace
preservation, statistics equivalence over an operator basis) is independent
of how the channel was assembled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .detectors import POVM, EventTable
from .fock import (
    FLAG_LABEL,
    BlockOperator,
    DensityLike,
    SpaceLayout,
    min_eigenvalue,
    photon_label,
)
from .postprocessing import StochasticMatrix, validate_dark_count_pp
from .squashing import SquashedPOVM, eta_star_range

_M0 = photon_label(0)
_M1 = photon_label(1)


@dataclass(frozen=True)
class _KeepBlocks:
    """CP term ``rho -> weight * P rho P`` for a block projector ``P``."""

    weight: float
    projector: np.ndarray

    def __call__(self, mat: np.ndarray) -> np.ndarray:
        return self.weight * (self.projector @ mat @ self.projector)


@dataclass(frozen=True)
class _MeasurePrepare:
    """CP term ``rho -> sum_i Tr[op_i rho] prep_i`` (weights live in preps)."""

    ops: tuple
    preps: tuple

    def __call__(self, mat: np.ndarray) -> np.ndarray:
        out = np.zeros_like(self.preps[0], dtype=complex)
        for op, prep in zip(self.ops, self.preps):
            out = out + np.einsum("ij,ji->", op, mat) * prep
        return out


@dataclass(frozen=True)
class _FromChoi:
    """CP term applying a channel given by its (unnormalized) Choi matrix."""

    choi: np.ndarray
    d_in: int
    d_out: int

    def __call__(self, mat: np.ndarray) -> np.ndarray:
        j = self.choi.reshape(self.d_in, self.d_out, self.d_in, self.d_out)
        return np.einsum("ab,aibj->ij", mat, j)


class QuantumChannel:
    """Linear map assembled from stages of completely positive terms.

    A stage is a tuple of terms whose outputs are summed; stages apply in
    sequence.  The Choi matrix (input factor first) is computed once and
    cached.
    """

    __slots__ = ("input_layout", "output_layout", "stages", "_choi")

    def __init__(self, input_layout: SpaceLayout, output_layout: SpaceLayout, stages):
        self.input_layout = input_layout
        self.output_layout = output_layout
        self.stages = tuple(tuple(stage) for stage in stages)
        self._choi = None

    def apply_dense(self, mat: np.ndarray) -> np.ndarray:
        cur = np.asarray(mat, dtype=complex)
        for stage in self.stages:
            cur = sum(term(cur) for term in stage)
        return cur

    @property
    def choi(self) -> np.ndarray:
        """Choi matrix ``sum_ab |a><b| (x) Phi(|a><b|)``."""
        if self._choi is None:
            d_in = self.input_layout.total_dim
            d_out = self.output_layout.total_dim
            j = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
            unit = np.zeros((d_in, d_in), dtype=complex)
            for a in range(d_in):
                for b in range(d_in):
                    unit[a, b] = 1.0
                    image = self.apply_dense(unit)
                    unit[a, b] = 0.0
                    j[a * d_out : (a + 1) * d_out, b * d_out : (b + 1) * d_out] = image
            self._choi = j
        return self._choi

    @classmethod
    def from_choi(cls, choi, input_layout: SpaceLayout, output_layout: SpaceLayout):
        j = np.asarray(choi, dtype=complex)
        d_in, d_out = input_layout.total_dim, output_layout.total_dim
        if j.shape != (d_in * d_out, d_in * d_out):
            raise ValueError("Choi matrix shape does not match the layouts")
        term = _FromChoi(choi=j, d_in=d_in, d_out=d_out)
        return cls(input_layout, output_layout, ((term,),))


def compose(outer: QuantumChannel, inner: QuantumChannel) -> QuantumChannel:
    """The channel applying ``inner`` first and ``outer`` second."""
    if inner.output_layout != outer.input_layout:
        raise ValueError("layouts do not chain")
    return QuantumChannel(
        inner.input_layout, outer.output_layout, inner.stages + outer.stages
    )


def apply_channel(ch: QuantumChannel, rho: DensityLike) -> DensityLike:
    """Apply ``ch`` to a block-diagonal state and re-wrap the output."""
    if rho.layout != ch.input_layout:
        raise ValueError("state layout does not match the channel input")
    dense = ch.apply_dense(rho.to_dense())
    out_layout = ch.output_layout
    blocks = {}
    for lab in out_layout.labels:
        s = out_layout.slice_of(lab)
        block = dense[s, s]
        blocks[lab] = (block + block.conj().T) / 2.0
    return DensityLike(BlockOperator(out_layout, blocks))


def _flag_prep(layout: SpaceLayout, index: int) -> np.ndarray:
    d = layout.total_dim
    off = layout.offset(FLAG_LABEL)
    mat = np.zeros((d, d), dtype=complex)
    mat[off + index, off + index] = 1.0
    return mat


def _vac_prep(layout: SpaceLayout) -> np.ndarray:
    d = layout.total_dim
    off = layout.offset(_M0)
    mat = np.zeros((d, d), dtype=complex)
    mat[off, off] = 1.0
    return mat


def _embed_block(layout: SpaceLayout, label: str, block: np.ndarray) -> np.ndarray:
    d = layout.total_dim
    mat = np.zeros((d, d), dtype=complex)
    s = layout.slice_of(label)
    mat[s, s] = block
    return mat


def _embed_blocks(layout: SpaceLayout, op: BlockOperator, labels) -> np.ndarray:
    d = layout.total_dim
    mat = np.zeros((d, d), dtype=complex)
    for lab in labels:
        s = layout.slice_of(lab)
        mat[s, s] = op.block(lab)
    return mat


def bb84_simple_noise_channel(d: float) -> QuantumChannel:
    """Dark-count noise channel for lossless active BB84 on vacuum + qubit.

    With equal dark rate ``d`` in both detectors the channel keeps the qubit
    with probability ``1 - d`` and otherwise depolarizes it, while the
    vacuum is re-prepared as ``(1-d)^2`` vacuum plus ``d (1 - d/2)`` times
    the maximally mixed qubit (times 2, as an unnormalized projector).
    """
    if not 0.0 <= d <= 1.0:
        raise ValueError("dark rate must lie in [0, 1]")
    layout = SpaceLayout(((_M0, 1), (_M1, 2)))
    vac = _vac_prep(layout)
    qubit_proj = layout.projector(_M1)
    vac_branch = _MeasurePrepare(
        ops=(vac,),
        preps=((1.0 - d) ** 2 * vac + d * (1.0 - d / 2.0) * qubit_proj,),
    )
    keep_qubit = _KeepBlocks(weight=1.0 - d, projector=qubit_proj)
    depolarize = _MeasurePrepare(ops=(qubit_proj,), preps=((d / 2.0) * qubit_proj,))
    return QuantumChannel(layout, layout, ((vac_branch, keep_qubit, depolarize),))


def bb84_qubit_measurement(basis: str) -> POVM:
    """Squashed BB84 measurement on vacuum + qubit for one basis choice."""
    layout = SpaceLayout(((_M0, 1), (_M1, 2)))
    if basis == "Z":
        kets = (np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    elif basis == "X":
        s = 1.0 / math.sqrt(2.0)
        kets = (np.array([s, s]), np.array([s, -s]))
    else:
        raise ValueError(f"unknown basis {basis!r}")
    elements = [BlockOperator(layout, {_M0: np.array([[1.0]])})]
    for ket in kets:
        elements.append(BlockOperator(layout, {_M1: np.outer(ket, ket.conj())}))
    events = EventTable(
        k=2,
        labels=("no-click", f"{basis}0", f"{basis}1"),
        classes=("no-click", "single", "single"),
        masks=(),
    )
    return POVM(layout, elements, events)


def _require_one_photon_flag_layout(squashed: SquashedPOVM):
    labels = squashed.layout.photon_labels
    if labels != (_M0, _M1):
        raise ValueError(f"need blocks (m=0, m=1, flag), got {squashed.layout.labels}")
    if not squashed.strict_flags:
        raise ValueError("target measurement must have exact flag states")


def _check_squashed_assumptions(squashed: SquashedPOVM, tol: float = 1e-10):
    events = squashed.events
    for i in events.multi_indices:
        el = squashed.elements[i]
        for lab in (_M0, _M1):
            dev = float(np.abs(el.block(lab)).max())
            if dev > tol:
                raise ValueError(
                    f"multi-click element {events.labels[i]!r} has weight {dev:.3e} "
                    f"on block {lab}"
                )
    for i in events.single_indices:
        dev = float(np.abs(squashed.elements[i].block(_M0)).max())
        if dev > tol:
            raise ValueError(
                f"single-click element {events.labels[i]!r} has weight {dev:.3e} "
                "on the vacuum block"
            )


def dark_count_channel(p_db: StochasticMatrix, f_eta: SquashedPOVM) -> QuantumChannel:
    """Noise channel absorbing independent dark counts.

    On the one-photon block the channel acts as the identity with
    probability ``P[0|0]`` and otherwise measures with the squashed POVM and
    prepares a classical flag mixture whose coefficients reproduce the
    dark-count statistics.  The vacuum doubles as the no-click flag: a
    vacuum input stays vacuum unless a dark count fires, while flag inputs
    are post-processed with ``p_db`` entirely inside the flag block, so no
    weight re-enters the preserved blocks.
    """
    _require_one_photon_flag_layout(f_eta)
    _check_squashed_assumptions(f_eta)
    events = f_eta.events
    n = len(f_eta)
    if p_db.shape != (n, n):
        raise ValueError(f"dark-count map shape {p_db.shape} does not match {n} events")
    report = validate_dark_count_pp(p_db, events)
    if not report.passed:
        raise ValueError(f"dark-count conditions violated: {report}")

    layout = f_eta.layout
    p = p_db.entries
    p00 = float(p[0, 0])
    singles = events.single_indices
    multis = set(events.multi_indices)
    flag_preps = [
        _vac_prep(layout) if i == 0 else _flag_prep(layout, i) for i in range(n)
    ]

    terms = [_KeepBlocks(weight=p00, projector=layout.projector(_M1))]

    if p00 < 1.0:
        # Measure the one-photon block and flag the outcome; each prepared
        # mixture has trace 1 - P[0|0] so the branch weight is built in.
        ops = []
        preps = []
        for j in range(n):
            if j in multis:
                continue
            ops.append(_embed_block(layout, _M1, f_eta.elements[j].block(_M1)))
            prep = np.zeros((layout.total_dim,) * 2, dtype=complex)
            for m in events.multi_indices:
                prep += p[m, j] * flag_preps[m]
            if j == 0:
                for s in singles:
                    prep += p[s, 0] * flag_preps[s]
            else:
                prep += (p[j, j] - p00) * flag_preps[j]
            preps.append(prep)
        terms.append(_MeasurePrepare(ops=tuple(ops), preps=tuple(preps)))

    # Vacuum sector: outcome 0 keeps the vacuum, dark counts raise flags.
    ops = []
    preps = []
    for j in range(n):
        ops.append(_embed_block(layout, _M0, f_eta.elements[j].block(_M0)))
        prep = np.zeros((layout.total_dim,) * 2, dtype=complex)
        for i in range(n):
            if p[i, j] != 0.0:
                prep += p[i, j] * flag_preps[i]
        preps.append(prep)
    terms.append(_MeasurePrepare(ops=tuple(ops), preps=tuple(preps)))

    # Flag sector: post-process the recorded outcome, staying in flag space.
    ops = []
    preps = []
    for j in range(n):
        ops.append(_embed_block(layout, FLAG_LABEL, f_eta.elements[j].block(FLAG_LABEL)))
        prep = np.zeros((layout.total_dim,) * 2, dtype=complex)
        for i in range(n):
            if p[i, j] != 0.0:
                prep += p[i, j] * _flag_prep(layout, i)
        preps.append(prep)
    terms.append(_MeasurePrepare(ops=tuple(ops), preps=tuple(preps)))

    return QuantumChannel(layout, layout, (tuple(terms),))


def loss_split_matrix(eta, eta_star: float) -> StochasticMatrix:
    """The residual loss map in the split ``P_eta = r P_eta* + (1-r) Q``.

    ``r = eta_min / eta_star``; the returned ``Q`` keeps single click ``s``
    with probability ``eta_star (eta_s - eta_min) / (eta_star - eta_min)``.
    Entries stay in [0, 1] exactly when ``eta_star`` is admissible.
    """
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    eta_min = float(eta.min())
    if eta_star <= eta_min:
        raise ValueError("the split needs eta_star above eta_min")
    k = eta.size
    keep = eta_star * (eta - eta_min) / (eta_star - eta_min)
    if keep.max() > 1.0 + 1e-12:
        raise ValueError(
            f"eta_star {eta_star} is below the admissible range: "
            f"keep probability {keep.max():.6f} exceeds 1"
        )
    q = np.eye(k + 1)
    q[0, 1:] = 1.0 - keep
    for s in range(k):
        q[s + 1, s + 1] = keep[s]
    return StochasticMatrix(np.clip(q, 0.0, 1.0))


def loss_channel(eta, eta_star: float, f_lossless: SquashedPOVM) -> QuantumChannel:
    """Noise channel trading unequal efficiencies for a common ``eta_star``.

    Vacuum and flags pass through; the one-photon block survives with
    probability ``eta_min / eta_star`` and is otherwise measured with the
    residual-loss POVM and flagged.  ``f_lossless`` is the flag-state target
    of the unit-efficiency setup.
    """
    _require_one_photon_flag_layout(f_lossless)
    _check_squashed_assumptions(f_lossless)
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if (eta <= 0).any() or (eta > 1).any():
        raise ValueError("efficiencies must lie in (0, 1]")
    lo, hi = eta_star_range(float(eta.min()), float(eta.max()))
    if not lo - 1e-12 <= eta_star <= hi + 1e-12:
        raise ValueError(
            f"eta_star {eta_star} outside the admissible range [{lo}, {hi}]"
        )
    layout = f_lossless.layout
    events = f_lossless.events
    k = eta.size
    if len(events.single_indices) != k:
        raise ValueError("efficiency vector does not match the single-click events")
    ratio = float(eta.min()) / eta_star

    terms = [
        _KeepBlocks(weight=1.0, projector=layout.projector(_M0)),
        _KeepBlocks(weight=min(ratio, 1.0), projector=layout.projector(_M1)),
        _KeepBlocks(weight=1.0, projector=layout.projector(FLAG_LABEL)),
    ]
    if ratio < 1.0 - 1e-15:
        q = loss_split_matrix(eta, eta_star).entries
        carriers = (0,) + events.single_indices
        ops = []
        preps = []
        for row, i in enumerate(carriers):
            q_op = np.zeros((layout.dim(_M1),) * 2, dtype=complex)
            for col, j in enumerate(carriers):
                if q[row, col] != 0.0:
                    q_op += q[row, col] * f_lossless.elements[j].block(_M1)
            ops.append(_embed_block(layout, _M1, q_op))
            preps.append((1.0 - ratio) * _flag_prep(layout, i))
        terms.append(_MeasurePrepare(ops=tuple(ops), preps=tuple(preps)))

    return QuantumChannel(layout, layout, (tuple(terms),))


def generic_channel(
    f_noise: SquashedPOVM, f_ideal: SquashedPOVM, q: float
) -> QuantumChannel:
    """Noise channel for an arbitrary deviation ``q`` between two targets.

    Requires every ``F_noise_i - (1-q) F_ideal_i`` to be PSD (tolerance
    1e-9); the excess defines a POVM that the channel measures on the
    preserved blocks, surrendering weight ``q`` to the flags.
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    if f_noise.layout != f_ideal.layout:
        raise ValueError("the two measurements live on different layouts")
    if len(f_noise) != len(f_ideal):
        raise ValueError("element count mismatch")
    if not f_ideal.strict_flags:
        raise ValueError("the ideal measurement must have exact flag states")
    layout = f_ideal.layout
    preserved = layout.photon_labels
    n = len(f_ideal)
    for i in range(n):
        gap = f_noise.elements[i] - (1.0 - q) * f_ideal.elements[i]
        lo = min_eigenvalue(gap)
        if lo < -1e-9:
            raise ValueError(
                f"element {i} violates the deviation bound: "
                f"smallest eigenvalue {lo:.3e} at q={q}"
            )

    terms = [
        _KeepBlocks(weight=1.0 - q, projector=layout.projector(preserved)),
        _KeepBlocks(weight=1.0, projector=layout.projector(FLAG_LABEL)),
    ]
    if q > 1e-15:
        ops = []
        preps = []
        for i in range(n):
            excess = (f_noise.elements[i] - (1.0 - q) * f_ideal.elements[i]) * (1.0 / q)
            ops.append(_embed_blocks(layout, excess, preserved))
            preps.append(q * _flag_prep(layout, i))
        terms.append(_MeasurePrepare(ops=tuple(ops), preps=tuple(preps)))
    return QuantumChannel(layout, layout, (tuple(terms),))


def min_deviation_q(
    f_noise: SquashedPOVM,
    f_ideal: SquashedPOVM,
    psd_tol: float = 1e-9,
    width: float = 1e-10,
) -> float:
    """Smallest deviation ``q`` admissible between two measurements.

    Bisects the monotone predicate "every ``F_noise_i - (1-q) F_ideal_i``
    is PSD at tolerance ``psd_tol``" down to an interval of ``width``.
    """
    if f_noise.layout != f_ideal.layout or len(f_noise) != len(f_ideal):
        raise ValueError("measurements do not match")

    def admissible(q: float) -> bool:
        for a, b in zip(f_noise.elements, f_ideal.elements):
            if min_eigenvalue(a - (1.0 - q) * b) < -psd_tol:
                return False
        return True

    if admissible(0.0):
        return 0.0
    if not admissible(1.0):
        warnings.warn(
            "no q <= 1 satisfies the deviation bound; the noisy measurement "
            "has a support deficit (reporting q = 1)",
            stacklevel=2,
        )
        return 1.0
    lo, hi = 0.0, 1.0
    while hi - lo > width:
        mid = (lo + hi) / 2.0
        if admissible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def inf_norm_mixing(f_noise: SquashedPOVM, delta: float) -> SquashedPOVM:
    """Mix uniform noise into a measurement to absorb an operator-norm error.

    Returns ``(F_i + delta I) / (1 + n delta)`` over the ``n`` elements.  If
    every ``F_i`` is within ``delta`` of an ideal element in operator norm,
    the result dominates ``F_ideal / (1 + n delta)`` elementwise.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    n = len(f_noise)
    scale = 1.0 / (1.0 + n * delta)
    ident = BlockOperator.identity(f_noise.layout)
    elements = [scale * el + (delta * scale) * ident for el in f_noise.elements]
    return SquashedPOVM(
        f_noise.layout, elements, f_noise.events, strict_flags=False
    )


@dataclass(frozen=True)
class CPTPReport:
    """Choi-level certificate that a channel is CPTP at a tolerance."""

    min_choi_eigenvalue: float
    trace_preservation_dev: float
    hermiticity_dev: float
    tolerance: float
    passed: bool


def verify_cptp(ch: QuantumChannel, tol: float) -> CPTPReport:
    """Check PSD-ness of the Choi matrix and ``Tr_out J = I``."""
    j = ch.choi
    herm = float(np.abs(j - j.conj().T).max())
    sym = (j + j.conj().T) / 2.0
    min_eig = float(np.linalg.eigvalsh(sym)[0])
    d_in = ch.input_layout.total_dim
    d_out = ch.output_layout.total_dim
    j4 = j.reshape(d_in, d_out, d_in, d_out)
    tp = np.einsum("aibi->ab", j4)
    tp_dev = float(np.abs(tp - np.eye(d_in)).max())
    passed = min_eig >= -tol and tp_dev <= tol and herm <= tol
    return CPTPReport(
        min_choi_eigenvalue=min_eig,
        trace_preservation_dev=tp_dev,
        hermiticity_dev=herm,
        tolerance=tol,
        passed=passed,
    )


def hermitian_basis(dim: int) -> list[np.ndarray]:
    """Matrix units folded into a real basis of the Hermitian operators."""
    basis = []
    for a in range(dim):
        unit = np.zeros((dim, dim), dtype=complex)
        unit[a, a] = 1.0
        basis.append(unit)
    for a in range(dim):
        for b in range(a + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[a, b] = sym[b, a] = 1.0
            basis.append(sym)
            asym = np.zeros((dim, dim), dtype=complex)
            asym[a, b] = -1.0j
            asym[b, a] = 1.0j
            basis.append(asym)
    return basis


def _element_list(measurement):
    if isinstance(measurement, (POVM, SquashedPOVM)):
        return list(measurement.elements), measurement.events
    return list(measurement), None


@dataclass(frozen=True)
class EquivalenceReport:
    """Worst-case statistics mismatch over a full Hermitian operator basis."""

    max_residual: float
    per_event: tuple[float, ...]
    tolerance: float
    passed: bool


def verify_statistics_equivalence(
    p, f_before, f_after, ch: QuantumChannel, tol: float = 1e-9
) -> EquivalenceReport:
    """Certify ``P Tr[F_before rho] = Tr[F_after Phi(rho)]`` over a basis.

    The basis spans the full operator space of the channel input, including
    the off-diagonal Hermitian pairs, so passing here extends to every
    density matrix by linearity.
    """
    before, _ = _element_list(f_before)
    after, _ = _element_list(f_after)
    if p is None:
        p_mat = np.eye(len(after))
    elif isinstance(p, StochasticMatrix):
        p_mat = p.entries
    else:
        p_mat = np.asarray(p, dtype=float)
    if p_mat.shape != (len(after), len(before)):
        raise ValueError(
            f"post-processing shape {p_mat.shape} does not map "
            f"{len(before)} -> {len(after)} events"
        )
    before_dense = [el.to_dense() for el in before]
    after_dense = [el.to_dense() for el in after]
    dim = ch.input_layout.total_dim
    worst = np.zeros(len(after))
    for rho in hermitian_basis(dim):
        lhs = p_mat @ np.array([np.trace(el @ rho).real for el in before_dense])
        image = ch.apply_dense(rho)
        rhs = np.array([np.trace(el @ image).real for el in after_dense])
        worst = np.maximum(worst, np.abs(lhs - rhs))
    max_res = float(worst.max())
    return EquivalenceReport(
        max_residual=max_res,
        per_event=tuple(float(w) for w in worst),
        tolerance=tol,
        passed=max_res <= tol,
    )

"""Descriptor ingestion, analysis pipeline, and certificate emission.

A setup descriptor (JSON) names a detection setup, parameter ranges for the
dark count rates and efficiencies, and tolerances.  ``run_analysis`` builds
the POVMs at the range corners, constructs the dark-count and loss noise
channels, certifies them, and records every verdict with reproducible
inputs in a certificate.  Serialization is deterministic: stable key order
and fixed 17-significant-digit floats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channels import (
    bb84_qubit_measurement,
    bb84_simple_noise_channel,
    dark_count_channel,
    loss_channel,
    verify_cptp,
    verify_statistics_equivalence,
)
from .detectors import (
    DetectionSetup,
    build_threshold_povm,
    enumerate_events,
    passive_bb84_setup,
    verify_single_photon_assumption,
)
from .fock import photon_label, random_density
from .postprocessing import (
    bb84_qubit_squasher,
    coarse_grained_dc_ansatz,
    dark_count_matrix,
    multiclick_coarse_graining,
    apply_postprocessing,
    solve_swap_lp,
    validate_dark_count_pp,
)
from .squashing import (
    eta_star_range,
    flag_state_target,
    propagate_weight,
    weight_bound,
)

EXIT_OK = 0
EXIT_TOOL_ERROR = 1
EXIT_NOT_REDUCIBLE = 2

_WEIGHT_SPOT_CHECKS = 10


class DescriptorError(ValueError):
    """Malformed setup descriptor (field named in the message)."""


@dataclass(frozen=True)
class SetupDescriptor:
    """Validated description of a detection setup and parameter ranges."""

    setup: str  # "active-bb84" | "passive-bb84" | "custom"
    k: int
    eta_range: tuple[tuple[float, float], ...]  # per detector (lo, hi)
    dark_range: tuple[tuple[float, float], ...]  # per detector (lo, hi)
    cutoff: int = 1
    eta_star: float | None = None
    coarse_grain: str = "none"
    tol: float = 1e-9
    feas_tol: float = 1e-6
    seed: int = 0
    weight_in: float = 0.0
    mode_map: tuple = ()
    eta_point: tuple[float, ...] | None = None
    dark_point: tuple[float, ...] | None = None
    observed: tuple[str, float] | None = None
    corner_limit: int = 4

    def __post_init__(self):
        if self.setup not in ("active-bb84", "passive-bb84", "custom"):
            raise DescriptorError(f"setup: unknown kind {self.setup!r}")
        if self.cutoff not in (1, 2, 3):
            raise DescriptorError(f"cutoff: must be 1, 2 or 3, got {self.cutoff}")
        if self.coarse_grain not in ("none", "multiclick"):
            raise DescriptorError(f"coarse_grain: unknown mode {self.coarse_grain!r}")
        for name, ranges in (("eta_range", self.eta_range), ("dark_range", self.dark_range)):
            if len(ranges) != self.k:
                raise DescriptorError(f"{name}: expected {self.k} ranges")
            for lo, hi in ranges:
                if not (0.0 <= lo <= hi <= 1.0):
                    raise DescriptorError(f"{name}: range [{lo}, {hi}] not ordered in [0, 1]")
        if not 0.0 <= self.weight_in <= 1.0:
            raise DescriptorError("weight_in: must lie in [0, 1]")
        if self.tol <= 0 or self.feas_tol <= 0:
            raise DescriptorError("tolerances must be positive")

    @property
    def eta_lo(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.eta_range])

    @property
    def eta_hi(self) -> np.ndarray:
        return np.array([hi for _, hi in self.eta_range])

    @property
    def dark_max(self) -> np.ndarray:
        return np.array([hi for _, hi in self.dark_range])

    def to_dict(self) -> dict:
        out = {
            "setup": self.setup,
            "k": self.k,
            "eta_range": [list(r) for r in self.eta_range],
            "dark_range": [list(r) for r in self.dark_range],
            "cutoff": self.cutoff,
            "eta_star": self.eta_star,
            "coarse_grain": self.coarse_grain,
            "tol": self.tol,
            "feas_tol": self.feas_tol,
            "seed": self.seed,
            "weight_in": self.weight_in,
            "corner_limit": self.corner_limit,
        }
        if self.mode_map:
            out["mode_map"] = [
                [[z.real, z.imag] for z in row] for row in self.mode_map
            ]
        if self.eta_point is not None:
            out["eta"] = list(self.eta_point)
        if self.dark_point is not None:
            out["dark"] = list(self.dark_point)
        if self.observed is not None:
            out["observed"] = {"event": self.observed[0], "probability": self.observed[1]}
        return out


def _per_detector_ranges(value, k: int, name: str):
    if not isinstance(value, (list, tuple)):
        raise DescriptorError(f"{name}: expected a range or list of ranges")
    if len(value) == 2 and all(isinstance(v, (int, float)) for v in value):
        return tuple((float(value[0]), float(value[1])) for _ in range(k))
    out = []
    for entry in value:
        if not (isinstance(entry, (list, tuple)) and len(entry) == 2):
            raise DescriptorError(f"{name}: malformed range entry {entry!r}")
        out.append((float(entry[0]), float(entry[1])))
    if len(out) != k:
        raise DescriptorError(f"{name}: expected {k} ranges, got {len(out)}")
    return tuple(out)


def _parse_mode_map(raw, name: str = "mode_map"):
    rows = []
    for row in raw:
        parsed = []
        for entry in row:
            if isinstance(entry, (int, float)):
                parsed.append(complex(entry))
            elif isinstance(entry, (list, tuple)) and len(entry) == 2:
                parsed.append(complex(float(entry[0]), float(entry[1])))
            else:
                raise DescriptorError(f"{name}: malformed entry {entry!r}")
        rows.append(tuple(parsed))
    return tuple(rows)


def descriptor_from_dict(data: dict) -> SetupDescriptor:
    if not isinstance(data, dict):
        raise DescriptorError("descriptor must be a JSON object")
    setup = data.get("setup")
    if setup == "active-bb84":
        k = 2
    elif setup == "passive-bb84":
        k = 4
    elif setup == "custom":
        k = data.get("k")
        if not isinstance(k, int) or k < 1:
            raise DescriptorError("k: custom setups need a positive detector count")
        if "mode_map" not in data:
            raise DescriptorError("mode_map: required for custom setups")
    else:
        raise DescriptorError(f"setup: unknown kind {setup!r}")

    known = {
        "setup", "k", "mode_map", "eta_range", "dark_range", "cutoff", "eta_star",
        "coarse_grain", "tol", "feas_tol", "seed", "weight_in", "eta", "dark",
        "observed", "corner_limit", "tolerances",
    }
    unknown = set(data) - known
    if unknown:
        raise DescriptorError(f"unknown descriptor fields: {sorted(unknown)}")

    tolerances = data.get("tolerances", {})
    tol = float(data.get("tol", tolerances.get("cert", 1e-9)))
    feas_tol = float(data.get("feas_tol", tolerances.get("feasibility", 1e-6)))

    observed = None
    if "observed" in data:
        obs = data["observed"]
        if not isinstance(obs, dict) or "event" not in obs or "probability" not in obs:
            raise DescriptorError("observed: needs fields 'event' and 'probability'")
        observed = (str(obs["event"]), float(obs["probability"]))

    def _point(name):
        if name not in data:
            return None
        arr = data[name]
        if isinstance(arr, (int, float)):
            return tuple(float(arr) for _ in range(k))
        if len(arr) != k:
            raise DescriptorError(f"{name}: expected {k} values")
        return tuple(float(v) for v in arr)

    return SetupDescriptor(
        setup=setup,
        k=k,
        eta_range=_per_detector_ranges(data.get("eta_range", [1.0, 1.0]), k, "eta_range"),
        dark_range=_per_detector_ranges(data.get("dark_range", [0.0, 0.0]), k, "dark_range"),
        cutoff=int(data.get("cutoff", 1)),
        eta_star=(float(data["eta_star"]) if data.get("eta_star") is not None else None),
        coarse_grain=str(data.get("coarse_grain", "none")),
        tol=tol,
        feas_tol=feas_tol,
        seed=int(data.get("seed", 0)),
        weight_in=float(data.get("weight_in", 0.0)),
        mode_map=_parse_mode_map(data["mode_map"]) if "mode_map" in data else (),
        eta_point=_point("eta"),
        dark_point=_point("dark"),
        observed=observed,
        corner_limit=int(data.get("corner_limit", 4)),
    )


def load_descriptor(path) -> SetupDescriptor:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DescriptorError(f"cannot read descriptor: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DescriptorError(
            f"descriptor is not valid JSON (line {exc.lineno}, column {exc.colno}): {exc.msg}"
        ) from exc
    return descriptor_from_dict(data)


def build_setup(desc: SetupDescriptor, eta) -> DetectionSetup:
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if eta.size == 1:
        eta = np.full(desc.k, float(eta[0]))
    if desc.setup == "passive-bb84":
        return passive_bb84_setup(eta)
    if desc.setup == "custom":
        return DetectionSetup(
            k=desc.k, mode_map=np.array(desc.mode_map, dtype=complex), eta=eta
        )
    raise DescriptorError(f"no single-table setup for {desc.setup!r}")


def eta_corners(desc: SetupDescriptor) -> list[np.ndarray]:
    """Deterministic corner sample of the efficiency ranges.

    Always includes the all-low and all-high corners; mixed corners follow
    in binary-counter order up to ``corner_limit`` total.  Exact for
    quantities monotone in each efficiency; a heuristic sample otherwise.
    """
    lo, hi = desc.eta_lo, desc.eta_hi
    if np.array_equal(lo, hi):
        return [lo.copy()]
    corners = [lo.copy(), hi.copy()]
    for pattern in range(1, 2**desc.k - 1):
        if len(corners) >= desc.corner_limit:
            break
        corner = np.where(
            [(pattern >> i) & 1 for i in range(desc.k)], hi, lo
        )
        corners.append(corner)
    return corners[: max(2, desc.corner_limit)]


@dataclass
class Certificate:
    """Machine-readable record of every verdict of one analysis run."""

    descriptor: dict
    derived: dict
    checks: list = field(default_factory=list)
    status: str = "reducible"
    failed_requirement: str | None = None
    tool: dict = field(default_factory=lambda: {"name": "detcert", "version": __version__})

    def add_check(self, name: str, operation: str, inputs: dict, residual: float,
                  tolerance: float, passed: bool):
        self.checks.append(
            {
                "name": name,
                "operation": operation,
                "inputs": inputs,
                "residual": residual,
                "tolerance": tolerance,
                "passed": bool(passed),
            }
        )

    def downgrade(self, requirement: str):
        self.status = "not reducible under this framework"
        self.failed_requirement = requirement

    @property
    def all_passed(self) -> bool:
        return self.status == "reducible" and all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "descriptor": self.descriptor,
            "derived": self.derived,
            "checks": self.checks,
            "status": self.status,
            "failed_requirement": self.failed_requirement,
        }

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.all_passed else EXIT_NOT_REDUCIBLE


def _fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"cannot serialize {x}")
    return format(float(x), ".17g")


def canonical_json(obj, indent: int = 0) -> str:
    """Deterministic JSON: sorted keys, floats at 17 significant digits."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, (list, tuple, np.ndarray)):
        items = [canonical_json(v, indent + 1) for v in list(obj)]
        if not items:
            return "[]"
        return "[\n" + ",\n".join(inner + it for it in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        parts = []
        for key in sorted(obj):
            parts.append(f"{inner}{json.dumps(str(key))}: {canonical_json(obj[key], indent + 1)}")
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj)}")


def emit_certificate(cert: Certificate, path) -> Path:
    """Write the certificate deterministically; returns the path written."""
    out = Path(path)
    text = canonical_json(cert.to_dict()) + "\n"
    out.write_text(text)
    return out


def _certify_dark_channel(cert, desc, squashed, p_db, rng, label_suffix, inputs):
    channel = dark_count_channel(p_db, squashed)
    cptp = verify_cptp(channel, desc.tol)
    cert.add_check(
        f"dark-channel-cptp{label_suffix}", "verify_cptp", inputs,
        max(0.0, -cptp.min_choi_eigenvalue, cptp.trace_preservation_dev, cptp.hermiticity_dev),
        desc.tol, cptp.passed,
    )
    stats = verify_statistics_equivalence(p_db, squashed, squashed, channel, tol=desc.tol)
    cert.add_check(
        f"dark-channel-statistics{label_suffix}", "verify_statistics_equivalence",
        inputs, stats.max_residual, desc.tol, stats.passed,
    )
    p00 = float(p_db.entries[0, 0])
    proj = squashed.layout.projector((photon_label(0), photon_label(1)))
    worst = 0.0
    for _ in range(_WEIGHT_SPOT_CHECKS):
        rho = random_density(squashed.layout, rng)
        before = np.trace(proj @ rho.to_dense()).real
        after = np.trace(proj @ channel.apply_dense(rho.to_dense())).real
        worst = max(worst, abs(after - p00 * before))
    cert.add_check(
        f"dark-channel-weight-relation{label_suffix}", "apply_channel", inputs,
        worst, 1e-12, worst <= 1e-12,
    )
    return channel


def _certify_loss_channel(cert, desc, eta_vec, eta_star, f_lossless, f_eta,
                          f_star, rng, label_suffix, inputs):
    channel = loss_channel(eta_vec, eta_star, f_lossless)
    cptp = verify_cptp(channel, desc.tol)
    cert.add_check(
        f"loss-channel-cptp{label_suffix}", "verify_cptp", inputs,
        max(0.0, -cptp.min_choi_eigenvalue, cptp.trace_preservation_dev, cptp.hermiticity_dev),
        desc.tol, cptp.passed,
    )
    stats = verify_statistics_equivalence(None, f_eta, f_star, channel, tol=desc.tol)
    cert.add_check(
        f"loss-channel-statistics{label_suffix}", "verify_statistics_equivalence",
        inputs, stats.max_residual, desc.tol, stats.passed,
    )
    ratio = float(np.min(eta_vec)) / eta_star
    layout = f_lossless.layout
    proj0 = layout.projector(photon_label(0))
    proj1 = layout.projector(photon_label(1))
    proj01 = layout.projector((photon_label(0), photon_label(1)))
    worst = 0.0
    for _ in range(_WEIGHT_SPOT_CHECKS):
        rho = random_density(layout, rng).to_dense()
        lhs = np.trace(proj01 @ channel.apply_dense(rho)).real
        rhs = np.trace(proj0 @ rho).real + ratio * np.trace(proj1 @ rho).real
        worst = max(worst, abs(lhs - rhs))
    cert.add_check(
        f"loss-channel-weight-relation{label_suffix}", "apply_channel", inputs,
        worst, 1e-12, worst <= 1e-12,
    )
    return channel


def _analyze_flag_state(desc: SetupDescriptor, cert: Certificate) -> Certificate:
    rng = np.random.default_rng(desc.seed)
    d_max = desc.dark_max
    eta_min = float(desc.eta_lo.min())
    eta_max_hi = float(desc.eta_hi.max())
    try:
        star_lo, star_hi = eta_star_range(eta_min, eta_max_hi)
    except ValueError as exc:
        cert.downgrade(f"admissible common-efficiency interval is empty: {exc}")
        return cert
    eta_star = desc.eta_star if desc.eta_star is not None else star_hi
    cert.derived["eta_star"] = eta_star
    cert.derived["eta_star_range"] = [star_lo, star_hi]
    if not star_lo - 1e-12 <= eta_star <= star_hi + 1e-12:
        cert.downgrade(
            "common efficiency outside the admissible interval "
            f"[{star_lo}, {star_hi}] required by the loss reduction"
        )
        return cert

    cg = multiclick_coarse_graining(enumerate_events(desc.k)) if desc.coarse_grain == "multiclick" else None

    def squash(povm):
        if cg is not None:
            povm = apply_postprocessing(cg, povm)
        report = verify_single_photon_assumption(povm)
        return povm, report

    # Dark-count post-processing at the top of the rate range.
    p_fine = dark_count_matrix(d_max)
    if cg is not None:
        p_db = coarse_grained_dc_ansatz(p_fine, cg)
        swap_dev = float(
            np.abs(cg.entries @ p_fine.entries - p_db.entries @ cg.entries).max()
        )
        cert.add_check(
            "coarse-grain-swap", "coarse_grained_dc_ansatz",
            {"dark": d_max.tolist()}, swap_dev, 1e-12, swap_dev <= 1e-12,
        )
        table = cg.row_table
    else:
        p_db = p_fine
        table = enumerate_events(desc.k)
    conditions = validate_dark_count_pp(p_db, table)
    cert.add_check(
        "dark-count-conditions", "validate_dark_count_pp",
        {"dark": d_max.tolist()}, 0.0 if conditions.passed else 1.0,
        0.0, conditions.passed,
    )
    if not conditions.passed:
        cert.downgrade(
            "dark-count post-processing violates the structural conditions "
            "(single-to-single, click erasure, or survival ordering)"
        )
        return cert

    p00 = float(p_db.entries[0, 0])
    ratio = float(desc.eta_lo.min()) / eta_star
    cert.derived["p_no_dark"] = p00
    cert.derived["efficiency_ratio"] = ratio
    cert.derived["weight_in"] = desc.weight_in
    cert.derived["weight_out"] = propagate_weight(
        desc.weight_in, p00, float(desc.eta_lo.min()), eta_star
    )

    # Lossless and common-efficiency targets are corner independent.
    lossless_povm, lossless_report = squash(build_threshold_povm(build_setup(desc, 1.0), desc.cutoff))
    if not lossless_report.passed:
        cert.downgrade("threshold POVM violates the click-count assumption")
        return cert
    f_lossless = flag_state_target(lossless_povm, desc.cutoff)
    star_povm, _ = squash(build_threshold_povm(build_setup(desc, eta_star), desc.cutoff))
    f_star = flag_state_target(star_povm, desc.cutoff)

    for idx, eta_vec in enumerate(eta_corners(desc)):
        suffix = f"-corner{idx}"
        inputs = {"eta": eta_vec.tolist(), "dark": d_max.tolist(), "eta_star": eta_star}
        povm, report = squash(build_threshold_povm(build_setup(desc, eta_vec), desc.cutoff))
        cert.add_check(
            f"single-photon-assumption{suffix}", "verify_single_photon_assumption",
            inputs, report.max_violation, report.tolerance, report.passed,
        )
        if not report.passed:
            cert.downgrade("threshold POVM violates the click-count assumption")
            return cert
        f_eta = flag_state_target(povm, desc.cutoff)
        _certify_dark_channel(cert, desc, f_eta, p_db, rng, suffix, inputs)
        if np.min(eta_vec) <= 0.0:
            cert.downgrade("loss reduction needs strictly positive efficiencies")
            return cert
        _certify_loss_channel(
            cert, desc, eta_vec, eta_star, f_lossless, f_eta, f_star, rng, suffix, inputs
        )
    return cert


def _analyze_active_bb84(desc: SetupDescriptor, cert: Certificate) -> Certificate:
    d_vec = np.array(desc.dark_point) if desc.dark_point is not None else desc.dark_max
    p_db = dark_count_matrix(d_vec)
    p_sq = bb84_qubit_squasher()
    result = solve_swap_lp(p_db, p_sq, tol=desc.tol)
    cert.add_check(
        "swap-equation-lp", "solve_swap_lp", {"dark": d_vec.tolist()},
        result.residual, result.tolerance, result.feasible,
    )
    if not result.feasible:
        cert.downgrade(
            "the swap equation P_sq' P_db = P_dc P_sq has no stochastic solution "
            "for the qubit squasher (it requires equal dark count rates)"
        )
        return cert

    d = float(d_vec[0])
    eta_min = float(desc.eta_lo.min())
    eta_star = desc.eta_star if desc.eta_star is not None else 1.0
    p00 = float(result.matrix.entries[0, 0])
    cert.derived["p_no_dark"] = p00
    cert.derived["eta_star"] = eta_star
    cert.derived["efficiency_ratio"] = eta_min / eta_star
    cert.derived["weight_in"] = desc.weight_in
    cert.derived["weight_out"] = propagate_weight(desc.weight_in, p00, eta_min, eta_star)

    channel = bb84_simple_noise_channel(d)
    cptp = verify_cptp(channel, desc.tol)
    cert.add_check(
        "bb84-channel-cptp", "verify_cptp", {"dark": d},
        max(0.0, -cptp.min_choi_eigenvalue, cptp.trace_preservation_dev, cptp.hermiticity_dev),
        desc.tol, cptp.passed,
    )
    for basis in ("Z", "X"):
        povm = bb84_qubit_measurement(basis)
        stats = verify_statistics_equivalence(result.matrix, povm, povm, channel, tol=desc.tol)
        cert.add_check(
            f"bb84-channel-statistics-{basis}", "verify_statistics_equivalence",
            {"dark": d, "basis": basis}, stats.max_residual, desc.tol, stats.passed,
        )
    return cert


def run_analysis(desc: SetupDescriptor) -> Certificate:
    """Full pipeline: build, squash, post-process, construct, certify."""
    if desc.cutoff != 1:
        raise DescriptorError(
            "cutoff: the channel constructions act on vacuum + one photon + "
            "flags; analyze needs cutoff 1 (higher cutoffs serve weight estimation)"
        )
    cert = Certificate(descriptor=desc.to_dict(), derived={"seed": desc.seed})
    if desc.setup == "active-bb84":
        return _analyze_active_bb84(desc, cert)
    return _analyze_flag_state(desc, cert)


def run_weight(desc: SetupDescriptor) -> dict:
    """Weight bound from one observed event probability, plus propagation."""
    if desc.observed is None:
        raise DescriptorError("observed: the weight command needs an observed event")
    if desc.cutoff > 2:
        raise DescriptorError("cutoff: weight estimation needs cutoff <= 2")
    event, prob = desc.observed
    eta_vec = np.array(desc.eta_point) if desc.eta_point is not None else desc.eta_lo
    povm = build_threshold_povm(build_setup(desc, eta_vec), desc.cutoff + 1)
    wb = weight_bound(povm, event, prob, desc.cutoff)
    d_vec = np.array(desc.dark_point) if desc.dark_point is not None else desc.dark_max
    p00 = float(dark_count_matrix(d_vec).entries[0, 0])
    eta_star = desc.eta_star if desc.eta_star is not None else 1.0
    propagated = propagate_weight(wb.value, p00, float(eta_vec.min()), eta_star)
    return {
        "event": list(wb.event),
        "cutoff": wb.cutoff,
        "p_observed": wb.p_observed,
        "lambda_inside": wb.lambda_inside,
        "lambda_outside": wb.lambda_outside,
        "weight_bound": wb.value,
        "p_no_dark": p00,
        "eta_star": eta_star,
        "weight_propagated": propagated,
    }

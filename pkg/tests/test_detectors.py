import numpy as np
import pytest

from detcert import (
    DetectionSetup,
    active_bb84_setups,
    build_threshold_povm,
    enumerate_events,
    passive_bb84_setup,
    verify_single_photon_assumption,
)
from detcert.detectors import POVM
from detcert.fock import BlockOperator


def test_enumerate_events_k1():
    table = enumerate_events(1)
    assert table.labels == ("0", "1")
    assert table.classes == ("no-click", "single")


def test_enumerate_events_k2():
    table = enumerate_events(2)
    assert table.labels == ("00", "01", "10", "11")
    assert table.classes == ("no-click", "single", "single", "multi")


def test_enumerate_events_k4_counts():
    table = enumerate_events(4)
    assert table.n_events == 16
    assert table.classes.count("no-click") == 1
    assert table.classes.count("single") == 4
    assert table.classes.count("multi") == 11
    # ordered by click count, then numeric mask
    counts = [lab.count("1") for lab in table.labels]
    assert counts == sorted(counts)


def test_enumerate_events_rejects_bad_k():
    with pytest.raises(ValueError):
        enumerate_events(0)
    with pytest.raises(ValueError):
        enumerate_events(17)


def test_vacuum_block_is_no_click():
    povm = build_threshold_povm(passive_bb84_setup(0.7), 1)
    assert povm.elements[0].block("m=0")[0, 0] == pytest.approx(1.0)
    for el in povm.elements[1:]:
        assert np.abs(el.block("m=0")).max() == pytest.approx(0.0, abs=1e-15)


def test_single_detector_click_probability():
    setup = DetectionSetup(k=1, mode_map=np.array([[1.0]]), eta=np.array([0.8]))
    povm = build_threshold_povm(setup, 1)
    no_click, click = povm.elements
    assert click.block("m=1")[0, 0] == pytest.approx(0.8)
    assert no_click.block("m=1")[0, 0] == pytest.approx(0.2)


def test_completeness_all_blocks():
    povm = build_threshold_povm(passive_bb84_setup([0.5, 0.7, 0.9, 0.6]), 3)
    for lab in povm.layout.labels:
        total = sum(el.block(lab) for el in povm.elements)
        np.testing.assert_allclose(total, np.eye(povm.layout.dim(lab)), atol=1e-10)


def test_single_photon_blocks_match_path_oracle():
    # Independent oracle: one photon in input mode j reaches detector i with
    # amplitude U[i, j] and clicks there with probability eta_i, so the
    # single-click block is the rank-one operator eta_s u_s u_s^dag.
    eta = np.array([0.8, 0.65, 0.9, 0.75])
    setup = passive_bb84_setup(eta)
    povm = build_threshold_povm(setup, 1)
    u = setup.mode_map
    expected_no_click = np.eye(2, dtype=complex)
    for s, idx in zip(range(4), povm.events.single_indices):
        row = u[s, :]
        expected = eta[s] * np.outer(row.conj(), row)
        np.testing.assert_allclose(povm.elements[idx].block("m=1"), expected, atol=1e-12)
        expected_no_click -= expected
    np.testing.assert_allclose(povm.elements[0].block("m=1"), expected_no_click, atol=1e-12)


def test_multiclick_one_photon_blocks_vanish():
    povm = build_threshold_povm(passive_bb84_setup(0.85), 2)
    for i in povm.events.multi_indices:
        assert np.abs(povm.elements[i].block("m=1")).max() == 0.0


def test_m0_blocks_independent_of_eta():
    a = build_threshold_povm(passive_bb84_setup(0.3), 1)
    b = build_threshold_povm(passive_bb84_setup(0.95), 1)
    for ea, eb in zip(a.elements, b.elements):
        np.testing.assert_allclose(ea.block("m=0"), eb.block("m=0"), atol=1e-12)


def test_k1_matches_loss_postprocessing():
    # On at most one photon the lossy POVM is the loss map applied to the
    # lossless one.
    from detcert import single_photon_loss_matrix

    setup = DetectionSetup(k=1, mode_map=np.array([[1.0]]), eta=np.array([1.0]))
    lossless = build_threshold_povm(setup, 1)
    lossy = build_threshold_povm(setup.with_eta(0.6), 1)
    p = single_photon_loss_matrix([0.6]).entries
    for lab in ("m=0", "m=1"):
        stack = np.array([el.block(lab) for el in lossless.elements])
        mixed = np.einsum("ij,jab->iab", p, stack)
        built = np.array([el.block(lab) for el in lossy.elements])
        np.testing.assert_allclose(built, mixed, atol=1e-12)


def _random_isometry(rng, k, n_in):
    g = rng.normal(size=(k, n_in)) + 1j * rng.normal(size=(k, n_in))
    q, _ = np.linalg.qr(g)
    return q[:, :n_in]


@pytest.mark.parametrize("seed", [9, 10, 11])
def test_detector_relabelling_permutes_elements(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 5))
    n_in = int(rng.integers(1, k + 1))
    eta = rng.uniform(0.3, 1.0, k)
    setup = DetectionSetup(k=k, mode_map=_random_isometry(rng, k, n_in), eta=eta)
    perm = rng.permutation(k)
    permuted = DetectionSetup(k=k, mode_map=setup.mode_map[perm, :], eta=eta[perm])
    a = build_threshold_povm(setup, 2)
    b = build_threshold_povm(permuted, 2)
    # pattern in the permuted labelling: new detector i is old detector perm[i]
    for new_mask in b.events.masks:
        old_mask = 0
        for i in range(k):
            if (new_mask >> i) & 1:
                old_mask |= 1 << perm[i]
        old_idx = a.events.masks.index(old_mask)
        new_idx = b.events.masks.index(new_mask)
        for lab in ("m=0", "m=1", "m=2"):
            np.testing.assert_allclose(
                b.elements[new_idx].block(lab),
                a.elements[old_idx].block(lab),
                atol=1e-12,
            )


def test_active_bb84_setups_are_unitary():
    setups = active_bb84_setups(0.8)
    assert set(setups) == {"Z", "X"}
    for s in setups.values():
        np.testing.assert_allclose(
            s.mode_map @ s.mode_map.conj().T, np.eye(2), atol=1e-12
        )


def test_active_bb84_single_photon_projectors():
    # X basis: a photon reaches each detector through the balanced splitter,
    # so the click elements are eta times the |+-><+-| projectors
    eta = 0.85
    povm = build_threshold_povm(active_bb84_setups(eta)["X"], 1)
    plus = np.array([1.0, 1.0]) / np.sqrt(2)
    minus = np.array([1.0, -1.0]) / np.sqrt(2)
    np.testing.assert_allclose(
        povm.element("01").block("m=1"), eta * np.outer(plus, plus), atol=1e-12
    )
    np.testing.assert_allclose(
        povm.element("10").block("m=1"), eta * np.outer(minus, minus), atol=1e-12
    )
    np.testing.assert_allclose(
        povm.element("00").block("m=1"), (1 - eta) * np.eye(2), atol=1e-12
    )


def test_desk_scale_guards():
    setup = passive_bb84_setup(1.0)
    with pytest.raises(ValueError):
        build_threshold_povm(setup, 4)
    with pytest.raises(ValueError):
        build_threshold_povm(setup, 0)


def test_non_isometric_mode_map_rejected():
    with pytest.raises(ValueError, match="orthonormal"):
        DetectionSetup(k=2, mode_map=np.array([[1.0, 0.0], [1.0, 0.0]]), eta=np.ones(2))
    with pytest.raises(ValueError):
        DetectionSetup(k=1, mode_map=np.array([[1.0]]), eta=np.array([1.2]))


def test_assumption_report_passes_for_builtin():
    report = verify_single_photon_assumption(
        build_threshold_povm(passive_bb84_setup(0.8), 1)
    )
    assert report.passed
    assert report.max_violation <= 1e-10
    assert report.violations == ()


def test_assumption_report_catches_injected_violation():
    povm = build_threshold_povm(passive_bb84_setup(1.0), 1)
    # move some one-photon weight from a single-click to a multi-click
    # element, keeping PSD-ness and completeness intact
    s = povm.events.single_indices[0]
    m = povm.events.multi_indices[0]
    bump = 0.1 * povm.elements[s].block("m=1")
    elements = list(povm.elements)
    elements[s] = BlockOperator(
        povm.layout, {"m=1": povm.elements[s].block("m=1") - bump}
    )
    elements[m] = elements[m] + BlockOperator(povm.layout, {"m=1": bump})
    edited = POVM(povm.layout, elements, povm.events)
    report = verify_single_photon_assumption(edited)
    assert not report.passed
    offending = {label for label, _, _ in report.violations}
    assert povm.events.labels[m] in offending


def test_assumption_vacuous_for_single_detector():
    setup = DetectionSetup(k=1, mode_map=np.array([[1.0]]), eta=np.array([0.5]))
    report = verify_single_photon_assumption(build_threshold_povm(setup, 1))
    assert report.passed

import json

import numpy as np
import pytest

from detcert import cli
from detcert.report import (
    EXIT_NOT_REDUCIBLE,
    EXIT_OK,
    EXIT_TOOL_ERROR,
    Certificate,
    DescriptorError,
    canonical_json,
    descriptor_from_dict,
    emit_certificate,
    eta_corners,
    run_analysis,
    run_weight,
)

PASSIVE = {
    "setup": "passive-bb84",
    "eta_range": [0.5, 0.6],
    "dark_range": [0.0, 0.01],
    "cutoff": 1,
    "eta_star": 1.0,
    "coarse_grain": "multiclick",
    "seed": 7,
}


def test_descriptor_validation_errors():
    with pytest.raises(DescriptorError, match="setup"):
        descriptor_from_dict({"setup": "mystery"})
    with pytest.raises(DescriptorError, match="cutoff"):
        descriptor_from_dict({**PASSIVE, "cutoff": 5})
    with pytest.raises(DescriptorError, match="eta_range"):
        descriptor_from_dict({**PASSIVE, "eta_range": [0.9, 0.2]})
    with pytest.raises(DescriptorError, match="unknown descriptor fields"):
        descriptor_from_dict({**PASSIVE, "surprise": 1})
    with pytest.raises(DescriptorError, match="mode_map"):
        descriptor_from_dict({"setup": "custom", "k": 2})


def test_analysis_passive_bb84_values():
    cert = run_analysis(descriptor_from_dict(PASSIVE))
    assert cert.status == "reducible"
    assert cert.all_passed
    assert cert.derived["p_no_dark"] == pytest.approx(0.99**4, abs=1e-12)
    assert cert.derived["efficiency_ratio"] == pytest.approx(0.5, abs=1e-12)
    names = {c["name"] for c in cert.checks}
    assert any(n.startswith("dark-channel-cptp") for n in names)
    assert any(n.startswith("loss-channel-statistics") for n in names)
    assert cert.exit_code == EXIT_OK


def test_analysis_active_unequal_rates_not_reducible():
    desc = descriptor_from_dict(
        {
            "setup": "active-bb84",
            "eta_range": [1.0, 1.0],
            "dark_range": [[0.0, 0.01], [0.0, 0.02]],
            "seed": 1,
        }
    )
    cert = run_analysis(desc)
    assert cert.status == "not reducible under this framework"
    assert "P_sq' P_db = P_dc P_sq" in cert.failed_requirement
    assert cert.exit_code == EXIT_NOT_REDUCIBLE


def test_analysis_active_equal_rates_reducible():
    desc = descriptor_from_dict(
        {
            "setup": "active-bb84",
            "eta_range": [1.0, 1.0],
            "dark_range": [0.0, 0.05],
            "seed": 1,
        }
    )
    cert = run_analysis(desc)
    assert cert.all_passed
    assert cert.derived["p_no_dark"] == pytest.approx(0.95**2, abs=1e-12)


def test_analysis_degenerate_point_is_pinch():
    desc = descriptor_from_dict(
        {
            "setup": "passive-bb84",
            "eta_range": [0.7, 0.7],
            "dark_range": [0.0, 0.0],
            "eta_star": 0.7,
            "seed": 3,
        }
    )
    cert = run_analysis(desc)
    assert cert.all_passed
    assert cert.derived["p_no_dark"] == 1.0
    assert cert.derived["efficiency_ratio"] == pytest.approx(1.0)
    assert cert.derived["weight_out"] == pytest.approx(cert.derived["weight_in"])


def test_analysis_rejects_inadmissible_eta_star():
    desc = descriptor_from_dict({**PASSIVE, "eta_star": 0.5})
    cert = run_analysis(desc)
    assert cert.status != "reducible"
    assert "admissible" in cert.failed_requirement


def test_analysis_custom_setup():
    s2 = float(np.sqrt(0.5))
    desc = descriptor_from_dict(
        {
            "setup": "custom",
            "k": 3,
            "mode_map": [[[s2, 0.0]], [[0.0, 0.5]], [[0.5, 0.0]]],
            "eta_range": [0.6, 0.8],
            "dark_range": [0.0, 0.02],
            "cutoff": 1,
            "coarse_grain": "multiclick",
            "seed": 2,
        }
    )
    cert = run_analysis(desc)
    assert cert.all_passed
    assert cert.derived["efficiency_ratio"] == pytest.approx(0.6)


def test_analysis_needs_unit_cutoff():
    with pytest.raises(DescriptorError, match="cutoff"):
        run_analysis(descriptor_from_dict({**PASSIVE, "cutoff": 2}))


def test_eta_corners_include_extremes():
    desc = descriptor_from_dict(PASSIVE)
    corners = eta_corners(desc)
    assert any(np.allclose(c, 0.5) for c in corners)
    assert any(np.allclose(c, 0.6) for c in corners)
    assert len(corners) <= desc.corner_limit


def test_canonical_json_round_trip():
    payload = {
        "b": [1.0, 0.5**20, 1e-17],
        "a": {"nested": True, "x": None},
        "s": "text",
        "n": 3,
    }
    text = canonical_json(payload)
    parsed = json.loads(text)
    assert parsed["b"] == payload["b"]
    assert parsed["a"] == payload["a"]
    assert list(json.loads(text)) == sorted(payload)


def test_canonical_json_fixed_float_format():
    assert canonical_json(1 / 3) == "0.33333333333333331"
    assert canonical_json(float(np.float64(0.1))) == "0.10000000000000001"


def test_emit_certificate_round_trip(tmp_path):
    cert = run_analysis(descriptor_from_dict(PASSIVE))
    path = emit_certificate(cert, tmp_path / "cert.json")
    parsed = json.loads(path.read_text())
    assert parsed["status"] == "reducible"
    assert parsed["derived"]["p_no_dark"] == pytest.approx(0.99**4)
    # every check names the operation that reproduces its residual
    for check in parsed["checks"]:
        assert check["operation"]
        assert "inputs" in check


def test_emit_certificate_missing_directory(tmp_path):
    cert = Certificate(descriptor={}, derived={})
    with pytest.raises(OSError):
        emit_certificate(cert, tmp_path / "missing" / "cert.json")


def test_run_weight_requires_observation():
    with pytest.raises(DescriptorError, match="observed"):
        run_weight(descriptor_from_dict(PASSIVE))


def test_run_weight_values():
    desc = descriptor_from_dict(
        {**PASSIVE, "coarse_grain": "none", "observed": {"event": "multi", "probability": 0.001}}
    )
    payload = run_weight(desc)
    assert payload["lambda_inside"] == pytest.approx(0.0, abs=1e-13)
    assert payload["weight_bound"] == pytest.approx(
        0.001 / payload["lambda_outside"], abs=1e-12
    )
    assert 0.0 <= payload["weight_propagated"] <= 1.0


def _write_descriptor(tmp_path, data):
    path = tmp_path / "desc.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_cli_analyze_deterministic(tmp_path):
    desc = _write_descriptor(tmp_path, PASSIVE)
    out1, out2 = tmp_path / "c1.json", tmp_path / "c2.json"
    assert cli.main(["analyze", desc, "--out", str(out1)]) == EXIT_OK
    assert cli.main(["analyze", desc, "--out", str(out2)]) == EXIT_OK
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_swap_lp_exit_codes(tmp_path):
    good = _write_descriptor(
        tmp_path, {"setup": "active-bb84", "dark_range": [0.0, 0.05]}
    )
    assert cli.main(["swap-lp", good, "--out", str(tmp_path / "a.json")]) == EXIT_OK
    bad = str(tmp_path / "desc2.json")
    with open(bad, "w") as fh:
        json.dump(
            {"setup": "active-bb84", "dark_range": [[0.0, 0.01], [0.0, 0.02]]}, fh
        )
    assert (
        cli.main(["swap-lp", bad, "--out", str(tmp_path / "b.json")])
        == EXIT_NOT_REDUCIBLE
    )


def test_cli_rejects_malformed_descriptor(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert cli.main(["analyze", str(path)]) == EXIT_TOOL_ERROR
    missing = tmp_path / "nope.json"
    assert cli.main(["analyze", str(missing)]) == EXIT_TOOL_ERROR


def test_cli_verify_channel(tmp_path, capsys):
    desc = _write_descriptor(tmp_path, PASSIVE)
    assert cli.main(["verify-channel", desc]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["status"] == "reducible"
    assert all("channel" in c["name"] for c in payload["checks"])


def test_cli_overrides_apply(tmp_path, capsys):
    desc = _write_descriptor(tmp_path, {**PASSIVE, "eta_star": None})
    assert cli.main(["analyze", desc, "--eta-star", "0.9", "--seed", "11"]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["derived"]["eta_star"] == pytest.approx(0.9)
    assert payload["descriptor"]["seed"] == 11


def test_cli_weight(tmp_path, capsys):
    desc = _write_descriptor(
        tmp_path,
        {**PASSIVE, "coarse_grain": "none", "observed": {"event": "multi", "probability": 0.002}},
    )
    assert cli.main(["weight", desc]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload["weight_bound"] > 0


def test_cli_choi_check(tmp_path, capsys):
    desc = _write_descriptor(
        tmp_path, {"setup": "active-bb84", "dark_range": [0.0, 0.05], "seed": 0}
    )
    assert cli.main(["choi-check", desc]) == EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    for basis in ("Z", "X"):
        assert payload["bases"][basis]["verdict"] == "feasible-at-tol"
        assert payload["bases"][basis]["witness_report"]["passed"]

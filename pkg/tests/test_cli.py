import json
import logging
from pathlib import Path

import numpy as np
import pytest

from pbcert import templates
from pbcert.cli import ProblemSpec, RegionError, SpecError, export_region, main
from pbcert.polynomial import VariableSet, parse

SPECS = Path(__file__).resolve().parent.parent / "specs"
REFERENCE_H = "7.9999 - 1.2828*x3^2 - 0.2850*x1^2 - 0.5652*x2^2 - 0.6685*x1*x2"
FAST_VERIFY = {"samples": 20000, "trajectories": 20, "volume_samples": 100000, "qp_samples": 2000}


def write_spec(tmp_path, data, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data, indent=2))
    return str(path)


def check_spec(h, **extra):
    data = templates.template("example2")
    data.update(mode="check", certificate={"h": h, "c_star": 8.0}, verify=dict(FAST_VERIFY))
    data.update(extra)
    return data


# -- spec handling --------------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(templates.TEMPLATES))
def test_init_round_trip(name, tmp_path, capsys):
    out = tmp_path / f"{name}.json"
    assert main(["init", "--template", name, "--out", str(out)]) == 0
    spec = ProblemSpec.load(out)
    assert spec.vars.names == tuple(templates.template(name)["variables"])
    assert main(["init", "--template", name]) == 0
    assert capsys.readouterr().out.endswith(out.read_text())


@pytest.mark.parametrize("name", ["example1", "example2", "example3", "example4"])
def test_shipped_specs_match_templates(name):
    assert json.loads((SPECS / f"{name}.json").read_text()) == templates.template(name)


def test_template_is_a_copy():
    templates.template("example1")["f"][0] = "x1"
    assert templates.template("example1")["f"][0] == "x2"
    with pytest.raises(KeyError):
        templates.template("nope")


def test_doa_mode_ignores_input_matrix(caplog):
    data = templates.template("example3")
    data["mode"] = "doa"
    with caplog.at_level(logging.WARNING, logger="pbcert"):
        spec = ProblemSpec.from_dict(data)
    assert spec.field.g is None and spec.unsafe == []
    assert "ignoring" in caplog.text


def test_safe_mode_requires_input_matrix():
    data = templates.template("example3")
    del data["g"]
    with pytest.raises(SpecError, match="requires an input matrix"):
        ProblemSpec.from_dict(data)


def test_parse_error_points_at_the_line(tmp_path):
    data = templates.template("example1")
    data["V"] = "x1^2 + * x2"
    path = write_spec(tmp_path, data)
    with pytest.raises(SpecError) as err:
        ProblemSpec.load(path)
    msg = str(err.value)
    line = next(i for i, s in enumerate(Path(path).read_text().splitlines(), 1) if '"V"' in s)
    assert f"spec.json:{line}:" in msg and "^" in msg


def test_invalid_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "variables": ["x1"],\n  "f": [-x1]\n}\n')
    with pytest.raises(SpecError, match=r"bad.json:3:\d+"):
        ProblemSpec.load(path)


def test_unknown_keys_are_rejected():
    data = templates.template("example1")
    data["options"]["gama"] = 2.0
    with pytest.raises(SpecError, match="gama"):
        ProblemSpec.from_dict(data)


def test_wrong_field_length():
    data = templates.template("example1")
    data["f"] = ["x2"]
    with pytest.raises(SpecError, match="2 components"):
        ProblemSpec.from_dict(data)


def test_check_mode_needs_certificate():
    data = templates.template("example2")
    data["mode"] = "check"
    with pytest.raises(SpecError, match="certificate"):
        ProblemSpec.from_dict(data)


# -- region export ------------------------------------------------------------------------


def test_region_grid_minimal_resolution():
    v = VariableSet(("x1", "x2"))
    header, rows = export_region(parse("1 - x1^2 - x2^2", v), parse("x1^2 + x2^2", v), [],
                                 [[-1, 1], [-1, 1]], 2)
    assert header == ["x1", "x2", "h", "V"]
    assert rows.shape == (4, 4)
    np.testing.assert_allclose(rows[:, 2], -1.0)


def test_region_grid_unsafe_columns():
    v = VariableSet(("x1", "x2"))
    q = [parse("(x1 - 3)^2 + x2^2 - 1", v), parse("x1 + 5", v)]
    header, rows = export_region(parse("1 - x1^2", v), None, q, [[-1, 1], [-1, 1]], 3)
    assert header == ["x1", "x2", "h", "q1", "q2"]
    assert rows.shape == (9, 5)


def test_region_export_refuses_four_variables():
    v = VariableSet.standard(4)
    with pytest.raises(RegionError, match="at most 3"):
        export_region(parse("1 - x1^2", v), None, [], [[-1, 1]] * 4, 5)
    with pytest.raises(RegionError):
        export_region(parse("1 - x1^2", VariableSet(("x1",))), None, [], [[-1, 1]], 1)


def test_export_region_command(tmp_path, capsys):
    spec = write_spec(tmp_path, check_spec(REFERENCE_H))
    out = tmp_path / "grid.csv"
    assert main(["export-region", spec, "--resolution", "2", "--box=-1,1,-1,1,-1,1", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x1,x2,x3,h,V" and len(lines) == 9


# -- checking given certificates --------------------------------------------------------------


def test_reference_three_state_certificate_checks(tmp_path, capsys):
    assert main(["check", write_spec(tmp_path, check_spec(REFERENCE_H))]) == 0
    assert "barrier" in capsys.readouterr().out


def test_sign_flipped_certificate_fails(tmp_path, capsys):
    flipped = REFERENCE_H.replace("- 1.2828*x3^2", "+ 1.2828*x3^2")
    assert main(["check", write_spec(tmp_path, check_spec(flipped))]) == 2
    assert "FAIL bounded_region" in capsys.readouterr().out


def test_sublevel_certificate_checks(tmp_path, capsys):
    assert main(["check", write_spec(tmp_path, check_spec("8 - x1^2 - x2^2 - x3^2"))]) == 0


def test_missing_certificate_file_is_an_error(tmp_path, capsys):
    spec = write_spec(tmp_path, templates.template("example2"))
    assert main(["check", spec, "--certificate", str(tmp_path / "absent.json")]) == 1
    assert "error" in capsys.readouterr().err


def test_usage_error_exits_with_generic_status(capsys):
    with pytest.raises(SystemExit) as err:
        main(["run"])
    assert err.value.code == 1


# -- full runs ---------------------------------------------------------------------------------


def _run(tmp_path, name, out="out", **opts):
    data = templates.template(name)
    data["verify"] = dict(FAST_VERIFY)
    data["options"].update(opts)
    spec = write_spec(tmp_path, data, f"{name}.json")
    code = main(["run", spec, str(tmp_path / out)])
    return code, tmp_path / out


def test_run_cubic_system(tmp_path, capsys):
    code, out = _run(tmp_path, "example1")
    cert = json.loads((out / "certificate.json").read_text())
    assert cert["format"] == "pbcert-certificate/1"
    assert cert["c_star"] == pytest.approx(0.9759, rel=1e-3)
    report = json.loads((out / "report.json").read_text())
    assert code == (0 if report["passed"] else 2)
    lines = (out / "region.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,h,V" and len(lines) == 200 * 200 + 1


def test_run_is_byte_reproducible(tmp_path, capsys):
    _, a = _run(tmp_path, "example3", "a", max_iters=3)
    _, b = _run(tmp_path, "example3", "b", max_iters=3)
    for fname in ("certificate.json", "region.csv"):
        assert (a / fname).read_bytes() == (b / fname).read_bytes()


def test_run_three_state_controlled_system(tmp_path, capsys):
    code, out = _run(tmp_path, "example4")
    assert code == 0
    cert = json.loads((out / "certificate.json").read_text())
    assert len(cert["u"]) == 2 and len(cert["J"]) == 4
    assert (out / "region.csv").exists()


def test_check_accepts_written_certificate(tmp_path, capsys):
    _, out = _run(tmp_path, "example3", max_iters=3)
    spec = str(tmp_path / "example3.json")
    assert main(["check", spec, "--certificate", str(out / "certificate.json")]) == 0
    sim = tmp_path / "sim"
    assert main(["simulate", spec, "--certificate", str(out / "certificate.json"), "--x0=-1,0.5",
                 "--x0=0.5,0.5", "--T", "5", "--out", str(sim)]) == 0
    rows = np.loadtxt(sim / "trajectory.csv", delimiter=",", skiprows=1)
    assert set(rows[:, 0]) == {0.0, 1.0}

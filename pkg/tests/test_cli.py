"""Command-line interface: report documents, exit codes, determinism."""

from __future__ import annotations

import json
import re
from fractions import Fraction

import jsonschema
import pytest

from jetfree.cli import main, point_from_document, point_to_document
from jetfree.dsl import bundled_spec_names
from jetfree.errors import PreconditionViolation
from jetfree.jetspace import SpaceSpec

RATIONAL = re.compile(r"^-?\d+(/\d+)?$")

REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "command",
        "pseudogroup",
        "order",
        "point",
        "verdict",
        "kernel_dimension",
        "kernel_basis",
        "orbit_dimension",
        "samples",
        "seed",
        "failures",
        "timing_ms",
    ],
    "properties": {
        "command": {"type": ["string", "null"]},
        "pseudogroup": {"type": ["string", "null"]},
        "order": {"type": ["integer", "null"]},
        "point": {"type": ["object", "null"]},
        "verdict": {"type": "string"},
        "kernel_dimension": {"type": ["integer", "null"]},
        "kernel_basis": {"type": ["array", "null"]},
        "orbit_dimension": {"type": ["integer", "null"]},
        "samples": {"type": ["integer", "null"]},
        "seed": {"type": ["integer", "null"]},
        "failures": {"type": "array"},
        "timing_ms": {"type": ["number", "null"]},
    },
}

P_FREE = {"order": 1, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {"u.x": "1"}}
P_FLAT = {"order": 1, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {"u.x": "0"}}
P_SLOPE2 = {"order": 1, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {"u.x": "2"}}

CS_X_UX = '{"fix": {"x": "0", "u.x": "1"}}'


def _run(capsys, argv):
    rc = main(argv)
    cap = capsys.readouterr()
    return rc, cap.out, cap.err


def _point_file(tmp_path, doc, name="point.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def _report(out):
    doc = json.loads(out)
    jsonschema.validate(doc, REPORT_SCHEMA)
    return doc


# -- point documents ----------------------------------------------------------------


def test_point_document_round_trip():
    sp = SpaceSpec(("x",), ("u",))
    z = point_from_document(sp, P_SLOPE2)
    assert z.order == 1
    assert z.x == (0,)
    assert z.u[(0, (0,))] == 2
    assert point_to_document(z) == P_SLOPE2


def test_point_document_rejects_bad_shapes():
    sp = SpaceSpec(("x",), ("u",))
    bad = [
        [],
        {"order": -1, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {}},
        {"order": "1", "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {}},
        {"order": 0, "independent": {}, "dependent": {"u": "0"}, "jets": {}},
        {"order": 0, "independent": {"x": "0"}, "dependent": {}, "jets": {}},
        {"order": 0, "independent": {"x": "0", "y": "0"}, "dependent": {"u": "0"}, "jets": {}},
        {"order": 1, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {}},
        {"order": 0, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {"u.x": "1"}},
        {"order": 1, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {"u.y": "1"}},
        {"order": 0, "independent": {"x": "a"}, "dependent": {"u": "0"}, "jets": {}},
        {"order": 0, "independent": {"x": 0.5}, "dependent": {"u": "0"}, "jets": {}},
        {"order": 0, "independent": {"x": "0"}, "dependent": {"u": "0"}, "jets": {}, "extra": 1},
    ]
    for doc in bad:
        with pytest.raises(PreconditionViolation):
            point_from_document(sp, doc)


def test_point_document_accepts_integers_and_fraction_strings():
    sp = SpaceSpec(("x",), ("u",))
    doc = {"order": 0, "independent": {"x": 3}, "dependent": {"u": "-7/2"}, "jets": {}}
    z = point_from_document(sp, doc)
    assert z.x == (3,)
    assert str(z.u[(0, ())]) == "-7/2"
    # decimal strings are exact rationals; only float JSON numbers are rejected
    doc = {"order": 0, "independent": {"x": "0.5"}, "dependent": {"u": "0"}, "jets": {}}
    assert point_from_document(sp, doc).x == (Fraction(1, 2),)


# -- parse --------------------------------------------------------------------------


def test_parse_bundled_names_resolve(capsys):
    names = bundled_spec_names()
    assert {"e1", "e2", "e3"} <= set(names)
    for name in names:
        rc, out, _ = _run(capsys, ["parse", name])
        assert rc == 0
        assert out.startswith("pseudogroup")


def test_parse_accepts_psg_suffix_and_file_path(capsys, tmp_path):
    rc, out, _ = _run(capsys, ["parse", "e1.psg"])
    assert rc == 0
    copy = tmp_path / "copy.psg"
    copy.write_text(out, encoding="utf-8")
    rc2, out2, _ = _run(capsys, ["parse", str(copy)])
    assert rc2 == 0
    # the normalized echo is a fixed point of parsing
    assert out2 == out


def test_parse_json_clean_spec_emits_empty_array(capsys):
    rc, out, _ = _run(capsys, ["parse", "e1", "--json"])
    assert rc == 0
    assert json.loads(out) == []


def test_parse_malformed_exits_2_with_spanned_diagnostic(capsys, tmp_path):
    bad = tmp_path / "bad.psg"
    bad.write_text('pseudogroup "b" {\n  space { independent: x; dependent: u; }\n'
                   "  base_order: 1;\n  determining { X.q = 0; }\n}\n", encoding="utf-8")
    rc, out, _ = _run(capsys, ["parse", str(bad), "--json"])
    assert rc == 2
    diags = json.loads(out)
    assert diags and all(d["severity"] == "error" for d in diags)
    for d in diags:
        assert isinstance(d["line"], int) and d["line"] >= 1
        assert isinstance(d["column"], int) and d["column"] >= 1
        assert d["code"]
    rc, out, err = _run(capsys, ["parse", str(bad)])
    assert rc == 2
    assert out == ""
    assert "error" in err and str(bad) in err


def test_unknown_spec_name_exits_2(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["freeness", "nosuch", "--order", "1", "--point", pt, "--json"])
    assert rc == 2
    doc = _report(out)
    assert doc["verdict"] == "ERROR"
    assert "nosuch" in doc["error"]


# -- freeness -----------------------------------------------------------------------


def test_freeness_free_point_report(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["freeness", "e1", "--order", "1", "--point", pt, "--json"])
    assert rc == 0
    doc = _report(out)
    assert doc["command"] == "freeness"
    assert doc["pseudogroup"] == "e1"
    assert doc["order"] == 1
    assert doc["verdict"] == "LOCALLY_FREE"
    assert doc["kernel_dimension"] == 0
    assert doc["kernel_basis"] == []
    assert doc["orbit_dimension"] == 2
    assert doc["failures"] == []
    assert doc["point"] == P_FREE


def test_freeness_flat_point_report(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FLAT)
    rc, out, _ = _run(capsys, ["freeness", "e1", "--order", "1", "--point", pt, "--json"])
    assert rc == 1
    doc = _report(out)
    assert doc["verdict"] == "NOT_LOCALLY_FREE"
    assert doc["kernel_dimension"] == 1
    assert len(doc["kernel_basis"]) == 1
    entry = doc["kernel_basis"][0]
    assert set(entry) == {"zeta{x}", "zeta{x}.x", "zeta{x}.u",
                          "zeta{u}", "zeta{u}.x", "zeta{u}.u"}
    assert all(RATIONAL.match(v) for v in entry.values())
    assert any(v != "0" for v in entry.values())


def test_freeness_requires_matching_point_order(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["freeness", "e1", "--order", "2", "--point", pt, "--json"])
    assert rc == 2
    doc = _report(out)
    assert doc["verdict"] == "ERROR"
    assert "order" in doc["error"]


def test_freeness_human_output(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, err = _run(capsys, ["freeness", "e1", "--order", "1", "--point", pt])
    assert rc == 0
    assert "LOCALLY_FREE" in out
    assert "{" not in out
    assert err == ""


def test_bad_point_file_exits_2(capsys, tmp_path):
    missing = str(tmp_path / "nope.json")
    rc, _, err = _run(capsys, ["freeness", "e1", "--order", "1", "--point", missing])
    assert rc == 2
    assert "error" in err
    garbled = tmp_path / "garbled.json"
    garbled.write_text("{not json", encoding="utf-8")
    rc, out, _ = _run(capsys, ["freeness", "e1", "--order", "1",
                               "--point", str(garbled), "--json"])
    assert rc == 2
    assert _report(out)["verdict"] == "ERROR"


# -- persistence --------------------------------------------------------------------


def test_persistence_report_and_exit_0(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["persistence", "e1", "--order", "1", "--point", pt,
                               "--through", "3", "--samples", "10", "--seed", "5", "--json"])
    assert rc == 0
    doc = _report(out)
    assert doc["verdict"] == "PERSISTS"
    assert doc["failures"] == []
    assert doc["samples"] == 10
    assert doc["seed"] == 5
    assert doc["through"] == 3
    assert doc["lifts_checked"] + doc["skipped"] == 20
    assert doc["kernel_dimension"] == 0
    assert doc["orbit_dimension"] == 2


def test_persistence_byte_identical_for_fixed_seed(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    argv = ["persistence", "e1", "--order", "1", "--point", pt,
            "--through", "3", "--samples", "15", "--seed", "42", "--json"]
    rc1, out1, _ = _run(capsys, argv)
    rc2, out2, _ = _run(capsys, argv)
    assert (rc1, out1) == (rc2, out2)
    rc3, out3, _ = _run(capsys, argv[:-2] + ["43", "--json"])
    assert rc3 == 0
    assert out3 != out1


def test_persistence_not_free_base_exits_2(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FLAT)
    rc, out, _ = _run(capsys, ["persistence", "e1", "--order", "1", "--point", pt,
                               "--through", "2", "--samples", "5", "--seed", "0", "--json"])
    assert rc == 2
    doc = _report(out)
    assert doc["verdict"] == "ERROR"
    assert "not locally free" in doc["error"]


def test_persistence_precondition_errors(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, _, err = _run(capsys, ["persistence", "e1", "--order", "1", "--point", pt,
                               "--through", "1", "--samples", "5", "--seed", "0"])
    assert rc == 2 and "through" in err
    # e2 has a second-order determining system, so order 1 is below it
    rc, _, err = _run(capsys, ["persistence", "e2", "--order", "1", "--point", pt,
                               "--through", "2", "--samples", "5", "--seed", "0"])
    assert rc == 2 and "order" in err


# -- frame --------------------------------------------------------------------------


def test_frame_report_matches_contract(capsys, tmp_path):
    pt = _point_file(tmp_path, P_SLOPE2)
    rc, out, _ = _run(capsys, ["frame", "e1", "--order", "1", "--point", pt,
                               "--cross-section", CS_X_UX, "--invariants", "--json"])
    assert rc == 0
    doc = _report(out)
    assert doc["verdict"] == "NORMALIZED"
    assert doc["exact"] is True
    assert doc["frame"]["X"] == "0"
    assert doc["frame"]["X.x"] == "2"
    assert doc["invariants"] == {"u": "0"}
    assert doc["transversality"]["transversal"] is True
    assert doc["transversality"]["stacked_rank"] == 3
    assert doc["orbit_dimension"] == 2
    assert all(RATIONAL.match(v) for v in doc["frame"].values())


def test_frame_identity_on_cross_section(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["frame", "e1", "--order", "1", "--point", pt,
                               "--cross-section", CS_X_UX, "--json"])
    assert rc == 0
    doc = _report(out)
    assert doc["frame"] == {"X": "0", "X.x": "1", "X.u": "0",
                            "U": "0", "U.x": "0", "U.u": "1"}
    assert doc["invariants"] is None


def test_frame_non_transversal_exits_2_with_certificate(capsys, tmp_path):
    pt = _point_file(tmp_path, P_SLOPE2)
    rc, out, _ = _run(capsys, ["frame", "e1", "--order", "1", "--point", pt,
                               "--cross-section", '{"fix": {"u": "0", "u.x": "1"}}', "--json"])
    assert rc == 2
    doc = _report(out)
    assert doc["verdict"] == "ERROR"
    cert = doc["transversality"]
    assert cert["transversal"] is False
    assert cert["stacked_rank"] < cert["jet_dimension"]


def test_frame_outside_chart_exits_1(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FLAT)
    rc, out, _ = _run(capsys, ["frame", "e1", "--order", "1", "--point", pt,
                               "--cross-section", CS_X_UX, "--json"])
    assert rc == 1
    doc = _report(out)
    assert doc["verdict"] == "OUTSIDE_CHART"
    assert "frame" not in doc


def test_frame_rejects_bad_cross_sections(capsys, tmp_path):
    pt = _point_file(tmp_path, P_SLOPE2)
    for cs in ["{oops", '{"pin": {"x": "0"}}', '{"fix": {"w": "0"}}',
               '{"fix": {"x": "a"}}', '{"fix": {"x": 0.5}}']:
        rc, _, err = _run(capsys, ["frame", "e1", "--order", "1", "--point", pt,
                                   "--cross-section", cs])
        assert rc == 2
        assert err.startswith("error:")


def test_frame_human_output(capsys, tmp_path):
    pt = _point_file(tmp_path, P_SLOPE2)
    rc, out, _ = _run(capsys, ["frame", "e1", "--order", "1", "--point", pt,
                               "--cross-section", CS_X_UX, "--invariants"])
    assert rc == 0
    assert "NORMALIZED" in out
    assert "X.x = 2" in out
    assert "invariant u = 0" in out


# -- isotropy -----------------------------------------------------------------------


def test_isotropy_trivial(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["isotropy", "e1", "--order", "1", "--point", pt, "--json"])
    assert rc == 0
    doc = _report(out)
    assert doc["verdict"] == "TRIVIAL"
    assert doc["witness"] is None


def test_isotropy_nontrivial_reports_witness(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FLAT)
    rc, out, _ = _run(capsys, ["isotropy", "e1", "--order", "1", "--point", pt, "--json"])
    assert rc == 1
    doc = _report(out)
    assert doc["verdict"] == "NONTRIVIAL"
    witness = doc["witness"]
    assert set(witness) == {"X", "X.x", "X.u", "U", "U.x", "U.u"}
    assert all(RATIONAL.match(v) for v in witness.values())
    identity = {"X": "0", "X.x": "1", "X.u": "0", "U": "0", "U.x": "0", "U.u": "1"}
    assert witness != identity


def test_isotropy_undecided_on_nonaffine_stage(capsys, tmp_path):
    quad = tmp_path / "quad.psg"
    quad.write_text(
        'pseudogroup "quad" {\n'
        "  space {\n    independent: x;\n    dependent: u;\n  }\n"
        "  base_order: 1;\n"
        "  determining {\n    X.x * X.x - 1 = 0;\n    X.u = 0;\n    U - u = 0;\n  }\n"
        "}\n",
        encoding="utf-8",
    )
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["isotropy", str(quad), "--order", "1",
                               "--point", pt, "--json"])
    assert rc == 1
    doc = _report(out)
    assert doc["verdict"] == "UNDECIDED"
    assert doc["witness"] is None


# -- report plumbing ----------------------------------------------------------------


def test_every_json_mode_emits_exactly_one_document(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    runs = [
        ["freeness", "e1", "--order", "1", "--point", pt, "--json"],
        ["persistence", "e1", "--order", "1", "--point", pt,
         "--through", "2", "--samples", "3", "--seed", "0", "--json"],
        ["frame", "e1", "--order", "1", "--point", pt,
         "--cross-section", CS_X_UX, "--json"],
        ["isotropy", "e1", "--order", "1", "--point", pt, "--json"],
        ["parse", "e1", "--json"],
    ]
    for argv in runs:
        _, out, _ = _run(capsys, argv)
        json.loads(out)  # raises if stdout is not a single document


def test_timing_is_opt_in(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, _ = _run(capsys, ["freeness", "e1", "--order", "1", "--point", pt, "--json"])
    assert json.loads(out)["timing_ms"] is None
    rc, out, _ = _run(capsys, ["freeness", "e1", "--order", "1", "--point", pt,
                               "--json", "--timing"])
    timing = json.loads(out)["timing_ms"]
    assert isinstance(timing, float) and timing >= 0


def test_json_error_documents_go_to_stdout(capsys, tmp_path):
    pt = _point_file(tmp_path, P_FREE)
    rc, out, err = _run(capsys, ["freeness", "e1", "--order", "3", "--point", pt, "--json"])
    assert rc == 2
    assert err == ""
    doc = _report(out)
    assert doc["verdict"] == "ERROR" and doc["error"]

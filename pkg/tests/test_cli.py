"""End-to-end checks of the command-line front end."""

import hashlib
import xml.etree.ElementTree as ET
from fractions import Fraction

import pytest

from dimerflow import cli
from dimerflow.errors import CapExceeded, NumericalError


def run(argv):
    return cli.main(argv)


# ---------------------------------------------------------------------------
# counting


def test_count_square_L2_prints_2(capsys):
    assert run(["count", "--lattice", "square", "--L", "2"]) == 0
    assert capsys.readouterr().out.strip() == "2"


def test_count_lozenge_L2_prints_20(capsys):
    assert run(["count", "--lattice", "hexagon", "--region", "lozenge",
                "--L", "2"]) == 0
    assert capsys.readouterr().out.strip() == "20"


# ---------------------------------------------------------------------------
# exit codes


def test_missing_required_field_exits_2(capsys):
    assert run(["count", "--lattice", "square"]) == cli.EXIT_CONFIG
    assert "error:" in capsys.readouterr().err


def test_bad_region_exits_2(capsys):
    assert run(["count", "--lattice", "square", "--region", "blob",
                "--L", "2"]) == cli.EXIT_CONFIG


def test_unknown_flag_exits_2(capsys):
    assert run(["count", "--no-such-flag", "1"]) == cli.EXIT_CONFIG


def test_cap_error_exits_3(monkeypatch, capsys):
    def boom(args):
        raise CapExceeded("too big")

    monkeypatch.setattr(cli, "cmd_count", boom)
    assert cli.main(["count", "--lattice", "square", "--L", "2"]) == \
        cli.EXIT_CAP


def test_numerical_error_exits_4(monkeypatch, capsys):
    def boom(args):
        raise NumericalError("no convergence")

    monkeypatch.setattr(cli, "cmd_count", boom)
    assert cli.main(["count", "--lattice", "square", "--L", "2"]) == \
        cli.EXIT_NUMERICAL


# ---------------------------------------------------------------------------
# reproducibility and metadata


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.mark.parametrize("kind", ["square", "hexagon", "squarehexagon"])
def test_sample_reproducible_and_meta(tmp_path, capsys, kind):
    outs = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        assert run(["sample", "--lattice", kind, "--L", "4",
                    "--seed", "7", "--out", str(out)]) == 0
        outs.append(out)
    capsys.readouterr()
    assert _sha(outs[0] / "sample.txt") == _sha(outs[1] / "sample.txt")
    meta = (outs[0] / "sample.meta.txt").read_text()
    assert "seed = 7" in meta
    assert f"sha256:sample.txt = {_sha(outs[0] / 'sample.txt')}" in meta
    assert f"lattice = {kind}" in meta


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("lattice = square\nL = 3\n")
    assert run(["count", "--config", str(cfg), "--L", "2"]) == 0
    assert capsys.readouterr().out.strip() == "2"


def test_config_file_syntax_error_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("lattice square\n")
    assert run(["count", "--config", str(cfg)]) == cli.EXIT_CONFIG


# ---------------------------------------------------------------------------
# drift table


def test_drift_table_nonpositive(tmp_path, capsys):
    out = tmp_path / "d"
    assert run(["drift", "--lattice", "squarehexagon", "--L", "3",
                "--pyramid", "--out", str(out)]) == 0
    capsys.readouterr()
    rows = (out / "drift.csv").read_text().splitlines()
    assert rows[0] == "face_x,face_y,drift"
    assert len(rows) > 1
    for row in rows[1:]:
        assert Fraction(row.split(",")[2]) <= 0


# ---------------------------------------------------------------------------
# SVG rendering


def test_render_pyramid_svg(tmp_path, capsys):
    out = tmp_path / "r"
    assert run(["render", "--pyramid", "--lattice", "square", "--L", "3",
                "--out", str(out)]) == 0
    capsys.readouterr()
    doc = (out / "tiling.svg").read_text()
    root = ET.fromstring(doc)
    assert root.tag.endswith("svg")
    ns = "{http://www.w3.org/2000/svg}"
    groups = root.findall(f"{ns}g")
    assert len(groups) >= 4
    assert all(g.get("id", "").startswith("region-") for g in groups)
    polys = root.findall(f".//{ns}polygon")
    assert polys


def test_render_sampled_matching_roundtrip(tmp_path, capsys):
    out = tmp_path / "s"
    assert run(["sample", "--lattice", "square", "--L", "4",
                "--seed", "3", "--out", str(out)]) == 0
    assert run(["render", "--input", str(out / "sample.txt"),
                "--out", str(out)]) == 0
    capsys.readouterr()
    doc1 = (out / "tiling.svg").read_text()
    root = ET.fromstring(doc1)
    ns = "{http://www.w3.org/2000/svg}"
    npoly = len(root.findall(f".//{ns}polygon"))
    nedges = sum(1 for line in (out / "sample.txt").read_text().splitlines()
                 if "-" in line and not line.startswith("#"))
    assert npoly == nedges
    assert run(["render", "--input", str(out / "sample.txt"),
                "--out", str(out)]) == 0
    capsys.readouterr()
    assert (out / "tiling.svg").read_text() == doc1

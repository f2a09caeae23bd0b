import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from defcert.certify import CertifyConfig
from defcert.classifier import load_model
from defcert.cli import run_cli
from defcert.data_io import load_idx, synth_shapes
from defcert.errors import DataFormatError, ParameterError
from defcert.grid_image import read_pgm
from defcert.report import (
    CSV_HEADER,
    ResultRow,
    average_certified_radius,
    certified_accuracy,
    certify_dataset,
    read_csv,
    to_pixels,
    worker_count,
    write_csv,
)
from defcert.smoothing import Uniform

from conftest import ROT


def row(i, correct, radius, label=0):
    return ResultRow(i, label, label if correct else 1 - label, 0.9, radius, "l1", correct, 1.0)


def test_certified_accuracy_examples():
    rows = [row(0, True, 0.5), row(1, True, 0.1), row(2, False, 0.9)]
    assert certified_accuracy(rows, 0.2) == pytest.approx(1 / 3)
    assert certified_accuracy([row(0, True, 0.3), row(1, True, 0.2)], 0.0) == 1.0
    assert certified_accuracy(rows, 5.0) == 0.0
    with pytest.raises(ParameterError):
        certified_accuracy(rows, -0.1)


def test_acr_examples():
    assert average_certified_radius([row(0, False, 0.3), row(1, False, 1.0)]) == 0.0
    assert average_certified_radius([row(0, True, 0.4)]) == 0.4
    assert average_certified_radius([row(0, True, 0.4), row(1, False, 1.0)]) == pytest.approx(0.2)
    with pytest.raises(ParameterError):
        average_certified_radius([])


def test_row_invariant():
    with pytest.raises(ParameterError):
        ResultRow(0, 1, 0, 0.9, 0.1, "l1", True, 0.0)


results = st.lists(st.tuples(st.booleans(), st.floats(0, 3)), min_size=1, max_size=40)


@settings(max_examples=100)
@given(results)
def test_certified_accuracy_non_increasing(data):
    rows = [row(i, c, r) for i, (c, r) in enumerate(data)]
    curve = [certified_accuracy(rows, r) for r in np.linspace(0, 3.5, 60)]
    assert all(b <= a for a, b in zip(curve, curve[1:]))


def test_csv_roundtrip(tmp_path):
    rows = [ResultRow(0, 1, 1, 0.987654321012345, 0.1234567890123, "l2", True, 12.5),
            ResultRow(1, 0, -1, 0.31, 0.0, "l2", False, 3.25)]
    path = tmp_path / "r.csv"
    write_csv(rows, path)
    assert path.read_text().splitlines()[0] == ",".join(CSV_HEADER)
    assert CSV_HEADER == "index,true_label,verdict,pA_lower,radius,norm_kind,correct,wall_time_ms".split(",")
    assert read_csv(path) == rows


def test_csv_errors(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("index,label\n")
    with pytest.raises(DataFormatError):
        read_csv(path)
    path.write_text(",".join(CSV_HEADER) + "\n0,1,1,x,0.1,l1,1,2.0\n")
    with pytest.raises(DataFormatError):
        read_csv(path)


def test_to_pixels():
    (r,) = to_pixels([row(0, True, 0.2)], 28)
    assert r.radius == pytest.approx(0.2 * 13.5)


def test_worker_count(monkeypatch):
    monkeypatch.setenv("DRS_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.delenv("DRS_THREADS")
    assert worker_count(3) == 3


def test_parallel_matches_serial(step_model, ramp):
    from defcert.data_io import Dataset
    imgs = np.stack([ramp.pixels] * 5)
    ds = Dataset(imgs, np.array([0, 0, 1, 0, 1]), 2)
    cfg = CertifyConfig(Uniform(0.5), ROT, n0=20, n=300, seed=4)
    serial = certify_dataset(step_model, ds, cfg, workers=1)
    parallel = certify_dataset(step_model, ds, cfg, workers=2)
    strip = lambda rows: [(r.index, r.verdict, r.pA_lower, r.radius, r.correct) for r in rows]
    assert strip(serial) == strip(parallel)
    assert [r.index for r in parallel] == list(range(5))
    # per-input seeds: identical images still get independent draws
    assert len({r.pA_lower for r in serial}) > 1


# -- CLI ---------------------------------------------------------------------


def test_cli_usage_errors(capsys):
    assert run_cli(["certify", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert run_cli([]) == 1
    assert run_cli(["report", "--at", "a,b", "--results", "missing.csv"]) == 1


def test_cli_missing_file(tmp_path, capsys):
    assert run_cli(["report", "--results", str(tmp_path / "none.csv")]) == 2
    (tmp_path / "bad.csv").write_text("not,a,result\n")
    assert run_cli(["report", "--results", str(tmp_path / "bad.csv")]) == 2
    assert run_cli(["train", "--images", str(tmp_path / "a"), "--labels", str(tmp_path / "b"),
                    "--out", str(tmp_path / "m")]) == 2


def test_cli_invalid_parameter(tmp_path):
    assert run_cli(["certify", "--lambda", "-1", "--limit", "1", "--out", str(tmp_path / "r.csv")]) == 1


def test_cli_pipeline(tmp_path, capsys):
    img, lab, model = tmp_path / "i.idx", tmp_path / "l.idx", tmp_path / "m.drsm"
    assert run_cli(["synth", "--count-per-class", "40", "--out-images", str(img), "--out-labels", str(lab)]) == 0
    assert len(load_idx(img, lab)) == 80
    assert run_cli(["train", "--images", str(img), "--labels", str(lab), "--epochs", "5", "--out", str(model)]) == 0
    assert load_model(model).num_classes == 2
    out = tmp_path / "r.csv"
    assert run_cli(["certify", "--images", str(img), "--labels", str(lab), "--model", str(model), "--limit", "6",
                    "--n0", "20", "--n", "200", "--workers", "1", "--out", str(out)]) == 0
    rows = read_csv(out)
    assert [r.index for r in rows] == list(range(6))
    capsys.readouterr()
    assert run_cli(["report", "--results", str(out), "--at", "0.1,0.2,0.3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "radius,certified_accuracy" and len(lines) == 5 and lines[-1].startswith("ACR,")
    assert lines[1] == f"0.1,{certified_accuracy(rows, 0.1):.4f}"
    # report is a pure function of the CSV
    before = out.read_bytes()
    run_cli(["report", "--results", str(out), "--at", "0.1,0.2,0.3"])
    assert capsys.readouterr().out.splitlines() == lines and out.read_bytes() == before
    assert run_cli(["report", "--results", str(out), "--pixels", "--size", "16"]) == 0

    quad = tmp_path / "q.csv"
    assert run_cli(["certify", "--images", str(img), "--labels", str(lab), "--model", str(model), "--limit", "4",
                    "--quadrature", "201", "--out", str(quad)]) == 0
    assert run_cli(["attack", "--images", str(img), "--labels", str(lab), "--model", str(model),
                    "--results", str(quad), "--budget", "101", "--nodes", "201", "--out", str(tmp_path / "a.csv")]) == 0
    assert "counterexamples" in capsys.readouterr().out

    pgm, fld = tmp_path / "w.pgm", tmp_path / "w.drsvf"
    assert run_cli(["warp", "--images", str(img), "--labels", str(lab), "--params", "0.3",
                    "--out", str(pgm), "--field-out", str(fld)]) == 0
    assert read_pgm(pgm).shape == (1, 16, 16) and fld.read_bytes()[:6] == b"DRSVF1"
    assert run_cli(["warp", "--params", "x", "--out", str(pgm)]) == 1


@pytest.mark.slow
def test_cli_reference_certify_run(tmp_path):
    out = tmp_path / "results.csv"
    argv = ["certify", "--family", "rotation", "--dist", "uniform", "--lambda", "0.9424778",
            "--n0", "100", "--n", "10000", "--alpha", "0.001", "--seed", "7", "--out", str(out)]
    assert run_cli(argv) == 0
    rows = read_csv(out)
    assert len(rows) == len(synth_shapes(100, 16, seed=1)) == 200
    assert [r.index for r in rows] == list(range(200))
    assert all(r.norm_kind == "l1" and 0 <= r.radius <= 0.9424778 for r in rows)
    assert all((r.verdict == -1) == (r.radius == 0.0) for r in rows)
    assert certified_accuracy(rows, 0.0) > 0.8
    assert math.isclose(certified_accuracy(rows, 0.0), np.mean([r.correct for r in rows]))

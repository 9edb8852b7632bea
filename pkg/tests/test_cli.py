import csv
import json

import numpy as np
import pytest

from prutf.cli import SIM_HEADER, main, read_series
from prutf.detect import segment_polynomial_fit, detect_mprutf
from prutf.stopping import StoppingConfig


def write_csv(path, values, header=True, index=False):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow(["y", "t"] if index else ["y"])
        for i, v in enumerate(values):
            w.writerow([repr(float(v)), i + 1] if index else [repr(float(v))])


@pytest.fixture
def two_jumps(tmp_path):
    y = np.repeat([0.0, 4.0, 1.0], [20, 25, 15]) + 0.01 * np.sin(np.arange(60))
    path = tmp_path / "y.csv"
    write_csv(path, y)
    return path, y


def test_read_series_header_and_index(tmp_path):
    p = tmp_path / "a.csv"
    write_csv(p, [1, 2, 3], header=True, index=True)
    assert read_series(p).tolist() == [1, 2, 3]
    p.write_text("1\nx\n")
    with pytest.raises(Exception):
        read_series(p)


def test_detect_json(two_jumps, tmp_path, capsys):
    path, y = two_jumps
    out = tmp_path / "o.json"
    assert main(["detect", str(path), "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["change_points"] == [20, 45]
    assert doc["signs"] == [1, -1]
    assert doc["sigma_source"] == "mad"
    assert len(doc["fitted"]) == 60
    for key in ("lambda_stop", "sigma", "events"):
        assert key in doc


def test_detect_sigma_echoed(two_jumps, tmp_path):
    path, _ = two_jumps
    out = tmp_path / "o.json"
    assert main(["detect", str(path), "--sigma", "1.0", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["sigma"] == 1.0 and doc["sigma_source"] == "given"


def test_detect_csv_parse_back(two_jumps, tmp_path):
    path, y = two_jumps
    out = tmp_path / "o.csv"
    assert main(["detect", str(path), "--format", "csv", "-o", str(out)]) == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 60
    assert [int(r["index"]) for r in rows if r["change_point"] == "1"] == [20, 45]
    assert np.array_equal([float(r["y"]) for r in rows], y)


def test_fitted_round_trip(two_jumps, tmp_path):
    path, y = two_jumps
    out = tmp_path / "o.csv"
    main(["detect", str(path), "--format", "csv", "--sigma", "0.05", "-o", str(out)])
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    cps = [int(r["index"]) for r in rows if r["change_point"] == "1"]
    fitted = np.array([float(r["fitted"]) for r in rows])
    again = detect_mprutf(fitted, 0, StoppingConfig(sigma=0.05))
    assert again.change_points.tolist() == cps
    assert np.allclose(segment_polynomial_fit(fitted, cps, 0), fitted)


def test_detect_exit_codes(tmp_path):
    empty = tmp_path / "e.csv"
    empty.write_text("")
    assert main(["detect", str(empty)]) == 2
    assert main(["detect", str(tmp_path / "missing.csv")]) == 2
    const = tmp_path / "c.csv"
    write_csv(const, [2.0] * 30)
    assert main(["detect", str(const)]) == 3
    assert main(["detect", str(const), "--sigma", "1"]) == 0
    noisy = tmp_path / "n.csv"
    write_csv(noisy, np.random.default_rng(0).normal(size=40))
    assert main(["detect", str(noisy), "--sigma", "0.001", "--max-steps", "2"]) == 4


def test_simulate_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--scenario", "teeth", "--replicates", "4", "--seed", "7", "--no-timing"]
    assert main(args + ["-o", str(a), "--workers", "1"]) == 0
    assert main(args + ["-o", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == ",".join(SIM_HEADER)
    assert a.read_text().splitlines()[0] == "sigma,mean_ncpts,mean_mse,mean_hausdorff,mean_runtime_s"


def test_simulate_grid_rows(tmp_path):
    out = tmp_path / "g.csv"
    assert main(["simulate", "--scenario", "pwl", "--sigma-grid", "0.5,1", "--replicates", "1",
                 "--workers", "1", "-o", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert len(rows) == 3
    assert [float(r[0]) for r in rows[1:]] == [0.5, 1.0]


def test_simulate_detail(tmp_path):
    out, det = tmp_path / "g.csv", tmp_path / "d.csv"
    assert main(["simulate", "--scenario", "teeth", "--replicates", "2", "--workers", "1",
                 "-o", str(out), "--detail", str(det)]) == 0
    assert len(det.read_text().splitlines()) == 3


def test_simulate_unknown_scenario():
    assert main(["simulate", "--scenario", "nope"]) == 2


def test_bench_json(capsys):
    assert main(["bench", "--sizes", "200,400", "--max-events", "10", "--repeats", "1", "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [r["n"] for r in doc["results"]] == [200, 400]
    assert all(r["events"] > 0 for r in doc["results"])


def test_bench_empty_grid():
    assert main(["bench", "--sizes", ""]) == 2

"""Smoke test for the pllmm_py extension.

Build and install first:
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pllmm_py-*.whl
then run: python3 python/smoke_test.py
"""

import csv
import json
import math
import os

import pllmm_py as pl

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "crates", "core", "fixtures")


def load_tiny():
    with open(os.path.join(FIXTURES, "tiny.csv")) as f:
        rows = list(csv.DictReader(f))
    y = [float(r["y"]) for r in rows]
    x = [[1.0, float(r["time"]), float(r["x1"]), float(r["x2"]), float(r["x3"])] for r in rows]
    z = [row[:2] for row in x]
    groups = [r["subject"] for r in rows]
    return pl.Dataset(y, x, z, groups, unpenalized=[0, 1])


def main():
    data = load_tiny()
    assert (data.n, data.p, data.q) == (60, 5, 2), repr(data)
    assert data.groups[0] == "s00"

    assert abs(pl.threshold("l1", 1.0, 3.0) - 2.0) < 1e-12
    assert pl.threshold("hard", 1.0, 1.3) == 0.0
    assert abs(pl.penalty_value("scad", 1.0, 10.0) - 4.7 / 2) < 1e-12

    ref = json.load(open(os.path.join(FIXTURES, "gls_reference.json")))
    res = pl.fit(data, 0.0, structure="diagonal")
    beta = res["fit"]["params"]["beta"]
    worst = max(abs(a - b) for a, b in zip(beta, ref["beta"]))
    assert worst < 1e-4, worst
    assert res["report"]["pe_definition"]

    huge = pl.fit(data, 1e6, structure="diagonal")
    assert huge["fit"]["params"]["beta"][2:] == [0.0, 0.0, 0.0]

    path = pl.path(data, structure="diagonal", n_points=15, ratio=0.01)
    chosen = path["selected"]["active_set"]
    assert 2 in chosen and 4 in chosen, chosen
    assert path["bic"][path["selected_index"]] == min(b for b in path["bic"] if b is not None)

    p = path["selected"]["params"]
    effects = pl.predict(data, p["beta"], p["sigma2"], p["theta2"], structure="diagonal")
    assert len(effects) == 10 and all(len(b) == 2 for b in effects)
    assert all(math.isfinite(v) for b in effects for v in b)

    sim = pl.simulate(p=10, reps=3, seed=5)
    assert sim["replicates"] == 3 and sim["true_positives"]["mean"] == 5.0, sim["true_positives"]

    try:
        pl.fit(data, -1.0)
    except ValueError as e:
        assert "lambda" in str(e)
    else:
        raise AssertionError("negative lambda accepted")

    print("smoke test passed:", repr(data), "selected lambda", round(path["selected_lambda"], 4))


if __name__ == "__main__":
    main()

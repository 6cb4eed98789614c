"""Independent ML/GLS reference for tiny.csv.

Writes tiny.csv (when absent) and gls_reference.json: the unpenalized
maximum-likelihood fit of y ~ intercept + time + x1 + x2 + x3 with random
intercept and time slope, diagonal random-effect covariance.

Run from this directory: python3 gls_reference.py
"""

import csv
import json
import os

import numpy as np
from scipy.optimize import minimize

HERE = os.path.dirname(os.path.abspath(__file__))
CSV = os.path.join(HERE, "tiny.csv")
OUT = os.path.join(HERE, "gls_reference.json")


def make_data():
    rng = np.random.default_rng(20240611)
    rows = []
    for g in range(10):
        b0 = rng.normal(0, 0.8)
        b1 = rng.normal(0, 0.4)
        for t in range(6):
            time = t / 5.0
            x = rng.normal(size=3)
            y = 1.0 + 0.5 * time + 2.0 * x[0] + 0.0 * x[1] - 1.5 * x[2]
            y += b0 + b1 * time + rng.normal(0, 0.5)
            rows.append((f"s{g:02d}", time, *x, y))
    with open(CSV, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject", "time", "x1", "x2", "x3", "y"])
        for r in rows:
            w.writerow([r[0]] + [repr(float(v)) for v in r[1:]])


def load():
    with open(CSV) as f:
        rows = list(csv.DictReader(f))
    groups = {}
    for r in rows:
        groups.setdefault(r["subject"], []).append(r)
    out = []
    for rs in groups.values():
        t = np.array([float(r["time"]) for r in rs])
        x = np.column_stack(
            [np.ones_like(t), t] + [[float(r[c]) for r in rs] for c in ("x1", "x2", "x3")]
        )
        z = np.column_stack([np.ones_like(t), t])
        y = np.array([float(r["y"]) for r in rs])
        out.append((y, x, z))
    return out


def covs(groups, eta):
    s2, t0, t1 = eta
    return [z @ np.diag([t0, t1]) @ z.T + s2 * np.eye(len(y)) for y, _, z in groups]


def gls(groups, eta):
    a = 0
    b = 0
    for (y, x, _), v in zip(groups, covs(groups, eta)):
        vi = np.linalg.inv(v)
        a = a + x.T @ vi @ x
        b = b + x.T @ vi @ y
    return np.linalg.solve(a, b)


def nll(groups, eta, beta):
    total = 0.0
    for (y, x, _), v in zip(groups, covs(groups, eta)):
        r = y - x @ beta
        _, logdet = np.linalg.slogdet(v)
        total += 0.5 * (len(y) * np.log(2 * np.pi) + logdet + r @ np.linalg.solve(v, r))
    return total


def profile(groups, log_eta):
    eta = np.exp(log_eta)
    return nll(groups, eta, gls(groups, eta))


def main():
    if not os.path.exists(CSV):
        make_data()
    groups = load()
    res = minimize(lambda e: profile(groups, e), np.log([0.3, 0.5, 0.2]), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 20000, "maxfev": 40000})
    res = minimize(lambda e: profile(groups, e), res.x, method="BFGS", options={"gtol": 1e-10})
    eta = np.exp(res.x)
    beta = gls(groups, eta)
    ref = {
        "columns": ["intercept", "time", "x1", "x2", "x3"],
        "beta": beta.tolist(),
        "sigma2": eta[0],
        "theta2": eta[1:].tolist(),
        "neg_loglik": nll(groups, eta, beta),
    }
    with open(OUT, "w") as f:
        json.dump(ref, f, indent=2)
        f.write("\n")
    print(json.dumps(ref, indent=2))


if __name__ == "__main__":
    main()

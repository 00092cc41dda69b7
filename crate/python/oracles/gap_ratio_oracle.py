"""Brute-force Monte-Carlo oracle for the witness gap ratios.

Independent of the Rust sampler: Brownian paths are built as Gaussian random
walks on the 2^11-step grid (the same node set as a level-10 Schauder sample,
where both constructions have identical finite-dimensional laws). Writes the
pinned acceptance floors to crates/core/tests/fixtures/gap_ratio_floors.json.

    python3 python/oracles/gap_ratio_oracle.py [n] [seed]
"""

import json
import pathlib
import sys

import numpy as np

STEPS = 2048
CHUNK = 5000
ACCEPTANCE_N = 100_000
FLOOR_SIGMAS = 5.0


def extremes(n, rng):
    hi, lo = [], []
    for start in range(0, n, CHUNK):
        m = min(CHUNK, n - start)
        z = np.cumsum(rng.standard_normal((m, STEPS)), axis=1) / np.sqrt(STEPS)
        hi.append(np.maximum(z.max(axis=1), 0.0))
        lo.append(np.minimum(z.min(axis=1), 0.0))
    return np.concatenate(hi), np.concatenate(lo)


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 1_000_000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 20240601
    rng = np.random.default_rng(seed)
    zmax, zmin = extremes(n, rng)
    rows = []
    for k in range(1, 9):
        u = -np.log1p(-1.0 / (2 * k))
        sigma = np.sqrt(-np.expm1(-2 * u))
        centre = k * np.pi * np.exp(-u)
        norm = np.maximum(np.abs(centre + sigma * zmax), np.abs(centre + sigma * zmin))
        vals = (1 + norm**3) * np.sin(norm)
        weight = 1 + (k * np.pi) ** 3
        mean = abs(vals.mean()) / weight
        stderr = vals.std(ddof=1) / np.sqrt(n) / weight
        floor = mean - FLOOR_SIGMAS * stderr * np.sqrt(n / ACCEPTANCE_N)
        rows.append({"k": k, "oracle_mean": round(mean, 6), "oracle_stderr": float("%.3g" % stderr),
                     "floor": round(floor, 4)})
        print(rows[-1], flush=True)
    out = {
        "n": n,
        "seed": seed,
        "steps": STEPS,
        "floor_rule": "oracle_mean - 5 * stderr scaled to n = 1e5",
        "rows": rows,
    }
    path = pathlib.Path(__file__).resolve().parents[2] / "crates/core/tests/fixtures/gap_ratio_floors.json"
    path.write_text(json.dumps(out, indent=2) + "\n")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Corner regularity survey: angular spectra and wedge integrability probes.

For each opening angle the script prints the mixed and Dirichlet angular
eigenvalues next to their closed forms, the implied integrability threshold
q* = 2/(2 - gamma), and the graded-mesh probe verdict for each tested q.
"""

import argparse
import json
import math
import os

from contactflow import cli


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--omegas", default="0.25pi,0.5pi,0.75pi",
                    help="angles, each a multiple of pi like 0.75pi")
    ap.add_argument("--qs", default="1.2,1.8")
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--levels", type=int, default=4,
                    help="number of graded refinements")
    ap.add_argument("--out", default="runs/corner")
    args = ap.parse_args()

    omegas = [float(tok.replace("pi", "")) * math.pi
              for tok in args.omegas.split(",")]
    refine = [1.5 ** i for i in range(args.levels)]
    cfg = {
        "mode": "corner-probe",
        "out": args.out,
        "corner": {
            "omegas": omegas,
            "qs": [float(q) for q in args.qs.split(",")],
            "n": args.n,
            "refine": refine,
            "count": 4,
        },
    }
    os.makedirs(args.out, exist_ok=True)
    cfg_path = os.path.join(args.out, "config.json")
    with open(cfg_path, "w") as fh:
        json.dump(cfg, fh, indent=2)
    rc = cli.main(["corner-probe", "--config", cfg_path, "--out", args.out])
    if rc != 0:
        raise SystemExit(rc)

    with open(os.path.join(args.out, "report.json")) as fh:
        rep = json.load(fh)
    for entry in rep["entries"]:
        om = entry["omega"]
        print(f"omega = {om / math.pi:.3f} pi   q* = {entry['q_star']:.4f}")
        mixed = entry["eigenvalues_mixed"]
        exact = [(2 * n + 1) * math.pi / (2 * om) for n in range(len(mixed))]
        worst = max(abs(a - b) for a, b in zip(mixed, exact))
        print(f"  mixed spectrum dev from closed form: {worst:.2e}")
        for pr in entry["probes"]:
            print(f"  q={pr['q']}: {pr['verdict']:>9}  "
                  f"growth per level {pr['growth_rate']:.4f}")


if __name__ == "__main__":
    main()

#!/usr/bin/env python3
"""Computes the periodic orbit of the time-reversed van der Pol system
    x' = -y,  y' = x - 3 (1 - x^2) y
and writes it as a closed polygon (one "x,y" row per vertex).

The orbit is unstable in that direction of time, so it is traced as the
attracting limit cycle of the forward system x' = y, y' = -x + 3 (1 - x^2) y.
"""

import argparse

import numpy as np
from scipy.integrate import solve_ivp

MU = 3.0


def rhs(_t, s):
    x, y = s
    return [y, -x + MU * (1.0 - x * x) * y]


def upward_crossing(_t, s):
    return s[1]


upward_crossing.direction = 1.0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="data/vanderpol_orbit.csv")
    ap.add_argument("--vertices", type=int, default=600)
    args = ap.parse_args()

    settle = solve_ivp(rhs, (0.0, 200.0), [2.0, 0.0], rtol=1e-12, atol=1e-12)
    start = settle.y[:, -1]
    # One full revolution: between two consecutive upward crossings of y = 0.
    lap = solve_ivp(rhs, (0.0, 50.0), start, rtol=1e-12, atol=1e-12,
                    events=upward_crossing, dense_output=True)
    t0, t1 = lap.t_events[0][0], lap.t_events[0][1]
    ts = np.linspace(t0, t1, 200001)
    pts = lap.sol(ts).T
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, arc[-1], args.vertices, endpoint=False)
    xs = np.interp(targets, arc, pts[:, 0])
    ys = np.interp(targets, arc, pts[:, 1])
    with open(args.out, "w") as fh:
        fh.write("x,y\n")
        for x, y in zip(xs, ys):
            fh.write(f"{x:.17g},{y:.17g}\n")
    print(f"period {t1 - t0:.6f}, {args.vertices} vertices -> {args.out}")


if __name__ == "__main__":
    main()

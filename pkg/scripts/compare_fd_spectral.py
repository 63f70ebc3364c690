#!/usr/bin/env python3
"""Three-level cross-validation of the FD solver against the spectral oracle.

Both solvers start from the same band-limited fields; the FD grid and time
step are refined while the mode count doubles, and the reported L2 errors
must shrink monotonically.
"""

import argparse
import sys
import time

import numpy as np

from mchks.fields import Grid2D, ScalarField
from mchks.galerkin import (
    EigenBasis,
    evaluate_on_grid,
    initial_galerkin_state,
    integrate_galerkin,
)
from mchks.potentials import RegularQuartic
from mchks.solver import SolverConfig, State, run
from mchks.sources import ModelParams


def band_limited_ic(L):
    return {
        "phi": lambda x, y: 0.45
        + 0.10 * np.cos(np.pi * x / L) * np.cos(np.pi * y / L)
        + 0.05 * np.cos(2 * np.pi * x / L),
        "phi_a": lambda x, y: 0.40 + 0.10 * np.cos(np.pi * y / L),
        "n": lambda x, y: 0.60 + 0.15 * np.cos(np.pi * x / L),
        "c": lambda x, y: 0.40
        + 0.10 * np.cos(np.pi * x / L) * np.cos(np.pi * y / L),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--t-end", type=float, default=0.1)
    ap.add_argument("--levels", type=int, default=3)
    args = ap.parse_args()

    L = 2.0 * np.pi
    params = ModelParams(potential=RegularQuartic(1.0), m=0.5)
    ic = band_limited_ic(L)

    print(f"{'nx':>4} {'k':>3} {'dt':>9} {'phi':>10} {'phi_a':>10} "
          f"{'n':>10} {'c':>10} {'seconds':>8}")
    prev = np.inf
    monotone = True
    for level in range(args.levels):
        nx = 16 * 2**level
        k = 4 * 2**level
        dt = 2e-3 / 2**level
        tic = time.perf_counter()
        grid = Grid2D(nx, nx, L, L)
        x, y = grid.centers()
        fd0 = State(
            0.0,
            ScalarField(grid, ic["phi"](x, y)),
            ScalarField.constant(grid, 0.0),
            ScalarField(grid, ic["phi_a"](x, y)),
            ScalarField(grid, ic["n"](x, y)),
            ScalarField(grid, ic["c"](x, y)),
        )
        cfg = SolverConfig(dt=dt, t_end=args.t_end, linear_tol=1e-12)
        fd = run(fd0, params, cfg, record_every=10**9).final_state
        basis = EigenBasis(L, L, k)
        g0 = initial_galerkin_state(basis, params, ic)
        gs = integrate_galerkin(g0, params, basis, args.t_end)[-1]
        errs = []
        for name, coeffs in (("phi", gs.phi), ("phi_a", gs.phi_a),
                             ("n", gs.n), ("c", gs.c)):
            spec = evaluate_on_grid(basis, coeffs, grid)
            errs.append(np.sqrt(np.mean(
                (getattr(fd, name).values - spec.values) ** 2)))
        print(f"{nx:4d} {k:3d} {dt:9.1e} "
              + " ".join(f"{e:10.3e}" for e in errs)
              + f" {time.perf_counter() - tic:8.1f}")
        worst = max(errs)
        monotone &= worst < prev
        prev = worst
    print(f"monotone decrease: {monotone}")
    return 0 if monotone else 1


if __name__ == "__main__":
    sys.exit(main())

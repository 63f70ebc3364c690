"""Runtime monitors for every quantity the analysis controls.

The free energy assembled here uses the same face-difference gradient form
as the solver's implicit substeps, so on source-free stabilized runs the
recorded energy is non-increasing to solver tolerance, not merely to O(dt).
Confinement flags, the mass corridor, the entropy integral, separation
margins, the chemotactic smallness advisory, weak-formulation residuals and
the twin-run continuous-dependence metric all live here; nothing in this
module mutates a state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, RangeError
from .fields import (
    ScalarField,
    cosine_mode,
    div_mob_grad_array,
    dual_norm,
    grad_sq_integral,
    grad_sq_integral_array,
    inner,
    mean,
    norm_l2,
)
from .potentials import YosidaRegularization
from .regularize import TruncationPair
from .sources import (
    ModelParams,
    positive_part,
    p_switch,
    proliferation,
    source_c,
    source_n,
    source_phi,
    source_phi_a,
)

# Confinement tolerances: c and n are exact M-matrix solves, phi_a only
# satisfies an eps-scaled bound on its negative part.
MINMAX_TOL = 1e-10
PHIA_NEG_TOL_PER_EPS = 1e-5


def regularized_potential_density(params: ModelParams, phi_values):
    """Pointwise regularized potential F_eps (Moreau envelope + perturbation)."""
    if params.singular:
        reg = YosidaRegularization(params.potential, params.eps)
        return reg.envelope(phi_values) + params.potential.concave_value(phi_values)
    return params.potential.value(phi_values)


def entropy_integral(state, params: ModelParams) -> float:
    tp = TruncationPair.entropy_pair(params.eps)
    vals = tp.entropy(state.phi_a.values)
    return float(np.sum(vals)) * state.grid.cell_area


def energy(state, params: ModelParams) -> float:
    """Free energy with the regularized potential and entropy accounting.

    E = int F_eps(phi) + E_eps(phi_a) + |grad phi|^2/2 + |grad n|^2/2
        - chi_phi n phi + |grad c|^2/2 - chi_a phi_a c
    """
    g = state.grid
    f_density = regularized_potential_density(params, state.phi.values)
    e = float(np.sum(f_density)) * g.cell_area
    e += entropy_integral(state, params)
    e += 0.5 * grad_sq_integral(state.phi)
    e += 0.5 * grad_sq_integral(state.n)
    e += 0.5 * grad_sq_integral(state.c)
    e -= params.chi_phi * inner(state.n, state.phi)
    e -= params.chi_a * inner(state.phi_a, state.c)
    return e


def check_minmax(state, params: ModelParams):
    """Confinement flags; smooth-mode n is exempt from the n bounds."""
    phia_tol = PHIA_NEG_TOL_PER_EPS * params.eps
    c = state.c.values
    n = state.n.values
    flags = {
        "c_min": bool(np.min(c) < -MINMAX_TOL),
        "c_max": bool(np.max(c) > 1.0 + MINMAX_TOL),
        "n_min": bool(params.singular and np.min(n) < -MINMAX_TOL),
        "n_max": bool(params.singular and np.max(n) > 1.0 + MINMAX_TOL),
        "phi_a_neg": bool(np.min(state.phi_a.values) < -phia_tol),
    }
    return flags


def mass_corridor(y0: float, H: float, m: float, t: float):
    """Two-sided decay envelope for the tumor mass mean."""
    if m <= 0:
        raise RangeError("corridor bounds need a positive apoptosis rate")
    decay = math.exp(-m * t)
    band = (1.0 - decay) * H / m
    return (y0 * decay - band, y0 * decay + band)


@dataclass(frozen=True)
class SmallnessReport:
    cbar: float
    threshold: float
    passed: bool
    margin: float


def smallness_advisory(
    params: ModelParams, c_omega: float, c0: float, iota: float, eps0: float
) -> SmallnessReport:
    """Advisory check of the chemotactic smallness condition.

    cbar = (kappa_inf - eps0) m0^3 iota^3 / (27 c0^3 c_omega^4) with m0 the
    lower mobility bound of the endothelial flux; the regularity theory asks
    chi_a < ((sqrt(1 + cbar) - 1)/2)^(1/4).  The constants c_omega
    (embedding/elliptic) and c0 (initial-data energy) are not computable
    from a run and must be supplied.
    """
    if c_omega <= 0 or c0 <= 0 or eps0 <= 0:
        raise RangeError("constants must be positive")
    if not 0.0 < iota < 1.0:
        raise RangeError("iota must lie in (0, 1)")
    m0 = params.mobility_n.bounds[0]
    cbar = (params.kappa_inf - eps0) * m0**3 * iota**3 / (27.0 * c0**3 * c_omega**4)
    threshold = ((math.sqrt(1.0 + cbar) - 1.0) / 2.0) ** 0.25 if cbar > 0 else 0.0
    margin = threshold - params.chi_a
    return SmallnessReport(cbar, threshold, margin > 0.0, margin)


# --------------------------------------------------------------- records


@dataclass
class DiagnosticsRecord:
    t: float
    energy: float
    phi_mean: float
    phi_a_mean: float
    n_mean: float
    c_mean: float
    extrema: dict
    entropy: float
    f_integral: float
    phi_dual_norm: float
    corridor_lo: float
    corridor_hi: float
    h_sup: float
    delta_star: float
    delta_upper: float
    flags: dict = field(default_factory=dict)

    @property
    def any_violation(self):
        return any(self.flags.values())


class DiagnosticsTracker:
    """Accumulates run-level quantities (corridor sup bound, separation)."""

    def __init__(self, params: ModelParams, initial_state):
        self.params = params
        self.y0 = mean(initial_state.phi)
        self.h_sup = 0.0
        self.delta_star = math.inf
        self.delta_upper = -math.inf

    def observe(self, state, dt: float) -> DiagnosticsRecord:
        params = self.params
        prol = proliferation(params, state.phi.values, state.n.values)
        self.h_sup = max(self.h_sup, float(np.max(np.abs(prol))))

        phi_min = float(np.min(state.phi.values))
        phi_max = float(np.max(state.phi.values))
        self.delta_star = min(self.delta_star, phi_min)
        self.delta_upper = max(self.delta_upper, phi_max)

        extrema = {}
        for name in ("phi", "mu", "phi_a", "n", "c"):
            vals = getattr(state, name).values
            extrema[name] = (float(np.min(vals)), float(np.max(vals)))

        y = mean(state.phi)
        flags = check_minmax(state, params)
        if params.m > 0:
            lo, hi = mass_corridor(self.y0, self.h_sup, params.m, state.t)
            slack = dt * self.h_sup
            flags["corridor"] = bool(y < lo - slack or y > hi + slack)
        else:
            lo = hi = math.nan
            flags["corridor"] = False

        zm_vals = state.phi.values - np.mean(state.phi.values)
        zero_mean_phi = ScalarField(state.grid, zm_vals)
        # uniform fields leave pure round-off junk behind the mean subtraction
        phi_scale = float(np.max(np.abs(state.phi.values)))
        if np.max(np.abs(zm_vals)) <= 1e-13 * max(phi_scale, 1.0):
            phi_dual = 0.0
        else:
            phi_dual = dual_norm(zero_mean_phi)
        f_density = regularized_potential_density(params, state.phi.values)

        return DiagnosticsRecord(
            t=state.t,
            energy=energy(state, params),
            phi_mean=y,
            phi_a_mean=mean(state.phi_a),
            n_mean=mean(state.n),
            c_mean=mean(state.c),
            extrema=extrema,
            entropy=entropy_integral(state, params),
            f_integral=float(np.sum(f_density)) * state.grid.cell_area,
            phi_dual_norm=phi_dual,
            corridor_lo=lo,
            corridor_hi=hi,
            h_sup=self.h_sup,
            delta_star=self.delta_star,
            delta_upper=self.delta_upper,
            flags=flags,
        )


def separation_margins(records, t0: float, two_sided: bool = True):
    """Post-transient separation monitor.

    Restarts the running min/max of phi at the first record with t >= t0 and
    returns (times, margins) with margin = min(delta_star, 1 - delta_upper).
    Single-well potentials only confine phi away from 1, so for them the
    monitor is called with ``two_sided=False`` and the margin is
    1 - delta_upper alone.
    """
    post = [r for r in records if r.t >= t0]
    if not post:
        raise ValueError("no records after the transient")
    lo, hi = math.inf, -math.inf
    times, margins = [], []
    for r in post:
        lo = min(lo, r.extrema["phi"][0])
        hi = max(hi, r.extrema["phi"][1])
        times.append(r.t)
        margins.append(min(lo, 1.0 - hi) if two_sided else 1.0 - hi)
    return np.array(times), np.array(margins)


# --------------------------------------------------------- weak residuals


def default_test_battery(grid):
    """The constant plus the six lowest cosine modes."""
    modes = [(0, 0), (1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1)]
    return [cosine_mode(grid, i, j) for i, j in modes]


def weak_residual(states, params: ModelParams, dt: float, battery=None):
    """Weak-formulation residuals over a window of consecutive states.

    For each pair of consecutive states the five weak forms (phi evolution,
    chemical potential relation, endothelial evolution, nutrient, signal)
    are assembled against the test battery with a backward difference
    quotient in time and all nonlinearities at the new state.  Gradient
    pairings are assembled in the same conservative face form as the
    solver's operators, so the reported defect measures the time-stepping
    and lagging error, which is O(dt) on smooth runs.

    Returns a dict mapping equation names to (battery-size,) arrays of
    residuals for the last pair, plus "max" with the overall maximum over
    all pairs.
    """
    if len(states) < 2:
        raise ValueError("need at least two consecutive states")
    grid = states[0].grid
    if battery is None:
        battery = default_test_battery(grid)
    if params.singular:
        reg = YosidaRegularization(params.potential, params.eps)

        def f_prime(phi):
            return reg.yosida(phi) + params.potential.concave_slope(phi)

    else:
        f_prime = params.potential.derivative

    def pair_with_grad(coef, u_vals, v: ScalarField):
        # int coef grad(u) . grad(v), conservative assembly
        flux = div_mob_grad_array(coef, u_vals, grid.dx, grid.dy)
        return -float(np.sum(flux * v.values)) * grid.cell_area

    overall = 0.0
    out = {}
    for s0, s1 in zip(states[:-1], states[1:]):
        phi1, phia1 = s1.phi.values, s1.phi_a.values
        n1, c1, mu1 = s1.n.values, s1.c.values, s1.mu.values
        mob_m = np.broadcast_to(
            np.asarray(params.mobility_m(phi1, phia1, n1), dtype=float),
            phi1.shape,
        )
        mob_n = np.broadcast_to(
            np.asarray(params.mobility_n(phia1, c1), dtype=float), phi1.shape
        )
        ones = np.ones_like(phi1)
        dphi = (phi1 - s0.phi.values) / dt
        dphia = (phia1 - s0.phi_a.values) / dt
        dn = (n1 - s0.n.values) / dt
        dc = (c1 - s0.c.values) / dt

        res = {name: [] for name in ("phi", "mu", "phi_a", "n", "c")}
        for v in battery:
            vv = v.values
            w = float(np.sum(dphi * vv)) * grid.cell_area
            w += pair_with_grad(mob_m, mu1, v)
            w -= params.chi_phi * pair_with_grad(mob_m, n1, v)
            w -= float(np.sum(source_phi(params, phi1, n1) * vv)) * grid.cell_area
            res["phi"].append(w)

            w = float(np.sum((mu1 - f_prime(phi1)) * vv)) * grid.cell_area
            w -= pair_with_grad(ones, phi1, v)
            res["mu"].append(w)

            w = float(np.sum(dphia * vv)) * grid.cell_area
            w += pair_with_grad(mob_n, phia1, v)
            w -= params.chi_a * pair_with_grad(phia1 * mob_n, c1, v)
            w -= (
                float(np.sum(source_phi_a(params, phi1, phia1, c1) * vv))
                * grid.cell_area
            )
            res["phi_a"].append(w)

            w = float(np.sum(dn * vv)) * grid.cell_area
            w += pair_with_grad(ones, n1, v)
            w -= (
                float(
                    np.sum(
                        (
                            params.chi_phi * p_switch(params, phi1)
                            + source_n(params, phi1, phia1, n1)
                        )
                        * vv
                    )
                )
                * grid.cell_area
            )
            res["n"].append(w)

            w = float(np.sum(dc * vv)) * grid.cell_area
            w += pair_with_grad(ones, c1, v)
            w -= (
                float(
                    np.sum(
                        (
                            params.chi_a * positive_part(phia1)
                            + source_c(params, phi1, phia1, n1, c1)
                        )
                        * vv
                    )
                )
                * grid.cell_area
            )
            res["c"].append(w)

        out = {name: np.array(vals) for name, vals in res.items()}
        overall = max(overall, max(np.max(np.abs(a)) for a in out.values()))
    out["max"] = overall
    return out


# ------------------------------------------------------------- twin runs


@dataclass
class TwinDistance:
    components_lhs: dict
    components_rhs: dict
    lhs_total: float
    rhs_total: float
    ratio: float


def _zero_mean(f: ScalarField) -> ScalarField:
    return ScalarField(f.grid, f.values - np.mean(f.values))


def _trapezoid(times, values):
    return float(np.trapezoid(values, times))


def twin_run_distance(states1, states2, params: ModelParams) -> TwinDistance:
    """Continuous-dependence metric between two sampled trajectories.

    Assembles the dual-norm / L2 / V-norm groups of the stability estimate
    for the differences of the two runs and the corresponding initial-data
    norms, returning the empirical stability ratio lhs/rhs.
    """
    if len(states1) != len(states2):
        raise GridMismatch("trajectories have different lengths")
    if not states1 or states1[0].grid != states2[0].grid:
        raise GridMismatch("trajectories live on different grids")
    times = np.array([s.t for s in states1])
    if not np.allclose(times, [s.t for s in states2], atol=1e-12):
        raise GridMismatch("trajectories sampled at different times")

    grid = states1[0].grid
    phi_dual, phi_mean = [], []
    phia_dual, phia_l2, phia_mean = [], [], []
    n_l2, n_v2, c_l2, c_v2 = [], [], [], []
    for s1, s2 in zip(states1, states2):
        d_phi = ScalarField(grid, s1.phi.values - s2.phi.values)
        d_phia = ScalarField(grid, s1.phi_a.values - s2.phi_a.values)
        d_n = s1.n.values - s2.n.values
        d_c = s1.c.values - s2.c.values
        phi_dual.append(dual_norm(_zero_mean(d_phi)))
        phi_mean.append(abs(mean(d_phi)))
        phia_dual.append(dual_norm(_zero_mean(d_phia)))
        phia_l2.append(norm_l2(d_phia))
        phia_mean.append(abs(mean(d_phia)))
        n_l2.append(float(np.sqrt(np.sum(d_n**2) * grid.cell_area)))
        n_v2.append(
            np.sum(d_n**2) * grid.cell_area
            + grad_sq_integral_array(d_n, grid.dx, grid.dy)
        )
        c_l2.append(float(np.sqrt(np.sum(d_c**2) * grid.cell_area)))
        c_v2.append(
            np.sum(d_c**2) * grid.cell_area
            + grad_sq_integral_array(d_c, grid.dx, grid.dy)
        )

    lhs = {
        "phi_dual_sup": float(np.max(phi_dual)),
        "phi_mean_sup": float(np.max(phi_mean)),
        "phi_a_dual_sup_l2": max(
            float(np.max(phia_dual)),
            math.sqrt(_trapezoid(times, np.array(phia_l2) ** 2)),
        ),
        "phi_a_mean_sup": float(np.max(phia_mean)),
        "n_linf_l2v": max(
            float(np.max(n_l2)), math.sqrt(_trapezoid(times, np.array(n_v2)))
        ),
        "c_linf_l2v": max(
            float(np.max(c_l2)), math.sqrt(_trapezoid(times, np.array(c_v2)))
        ),
    }

    s1, s2 = states1[0], states2[0]
    d_phi = ScalarField(grid, s1.phi.values - s2.phi.values)
    d_phia = ScalarField(grid, s1.phi_a.values - s2.phi_a.values)
    rhs = {
        "phi0_dual": dual_norm(_zero_mean(d_phi)),
        "phi0_mean": abs(mean(d_phi)),
        "phi_a0_dual": dual_norm(_zero_mean(d_phia)),
        "phi_a0_mean": abs(mean(d_phia)),
        "n0_l2": float(
            np.sqrt(np.sum((s1.n.values - s2.n.values) ** 2) * grid.cell_area)
        ),
        "c0_l2": float(
            np.sqrt(np.sum((s1.c.values - s2.c.values) ** 2) * grid.cell_area)
        ),
    }
    lhs_total = float(sum(lhs.values()))
    rhs_total = float(sum(rhs.values()))
    ratio = lhs_total / rhs_total if rhs_total > 0 else math.nan
    return TwinDistance(lhs, rhs, lhs_total, rhs_total, ratio)

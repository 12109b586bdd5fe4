"""Round-trip validation: does the recovered structure reproduce the field?

Given the recovered utilities w_j (inverse omega maps) and the heterogeneity
density f, the implied choice probability of alternative j at an offer vector
a integrates the argmax indicator of w_j(a_j, v_j) against f(v). Matching the
input field at interior points closes the rationalizability loop. A separate
translation check probes for income effects directly: fields generated without
them are invariant under adding a common scalar to every offer.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .density import DensityGrid
from .errors import UnnormalizedDensityError, ValidationError
from .field import ProbabilityField

_MASS_WINDOW = (0.95, 1.05)


def _cell_utility_table(utilities, density: DensityGrid, a):
    """w_j at every v-axis value for offer a; +/-inf encode out-of-range levels.

    A level below the attained omega range at a_j means the alternative's
    utility there is below everything representable (loses every comparison);
    above the range it wins them. Cells where two alternatives are both
    above-range are undecidable and get skipped by the integrators.
    """
    J = density.n_dims
    tables = []
    for j in range(J):
        om = utilities[j].omega
        vals = np.asarray(density.axes[j], dtype=float)
        w = om.invert_a0_many(float(a[j + 1]), vals)
        lo, hi = om.value_range(float(a[j + 1]))
        v_lo, v_hi = min(lo, hi), max(lo, hi)
        below = vals < v_lo
        above = vals > v_hi
        missing = np.isnan(w)
        w = np.where(missing & below, -np.inf, w)
        w = np.where(missing & above, np.inf, w)
        tables.append(w)
    return tables


def _winners(tables, a0):
    """Argmax alternative per v-cell grid node; -1 where undecidable."""
    J = len(tables)
    shape = tuple(len(t) for t in tables)
    best = np.full(shape, float(a0))
    who = np.zeros(shape, dtype=int)
    for j, t in enumerate(tables):
        resh = [1] * J
        resh[j] = len(t)
        w = t.reshape(resh)
        w_b = np.broadcast_to(w, shape)
        take = w_b > best
        best = np.where(take, w_b, best)
        who = np.where(take, j + 1, who)
    # undecidable: more than one alternative at +inf in the same cell
    inf_count = np.zeros(shape, dtype=int)
    for j, t in enumerate(tables):
        resh = [1] * J
        resh[j] = len(t)
        inf_count = inf_count + np.broadcast_to(np.isinf(t).reshape(resh) & (t.reshape(resh) > 0), shape)
    who = np.where(inf_count > 1, -1, who)
    return who


def _subcell_tables(tables, refine):
    """Utility at refine sub-centers per cell, linearly interpolated per axis.

    An infinite endpoint wins the whole half: interpolation against +/-inf
    keeps the finite end's value until the infinite corner itself.
    """
    out = []
    frac = (np.arange(refine) + 0.5) / refine
    for t in tables:
        lo = t[:-1]
        hi = t[1:]
        with np.errstate(invalid="ignore"):
            sub = lo[:, None] + frac[None, :] * (hi - lo)[:, None]
        lo_b = np.broadcast_to(lo[:, None], sub.shape)
        hi_b = np.broadcast_to(hi[:, None], sub.shape)
        sub = np.where(np.isinf(lo_b) & ~np.isinf(hi_b), hi_b, sub)
        sub = np.where(np.isinf(hi_b) & ~np.isinf(lo_b), lo_b, sub)
        sub = np.where(np.isinf(lo_b) & np.isinf(hi_b), lo_b, sub)
        out.append(sub.ravel())
    return out


def rationalized_choice_prob(
    utilities,
    density: DensityGrid,
    a,
    method: str = "grid_quadrature",
    n: int = 100_000,
    seed: int = 0,
    return_diagnostics: bool = False,
):
    """Choice probabilities at offer vector a implied by (utilities, density).

    grid_quadrature assigns each v-cell's trapezoid mass to the winner at the
    cell center; monte_carlo draws cells by mass (inverse CDF), jitters
    uniformly within the cell, and judges the argmax at the jittered point
    using linearly interpolated w. Skipped (undecidable) mass is reported in
    the diagnostics; the returned vector is renormalized over decided mass.
    """
    a = np.asarray(a, dtype=float)
    J = density.n_dims
    if len(a) != J + 1:
        raise ValidationError("offer vector length must be J + 1")
    masses = density.cell_masses()
    total = float(masses.sum())
    if not _MASS_WINDOW[0] <= total <= _MASS_WINDOW[1]:
        raise UnnormalizedDensityError(
            f"density mass {total:.4f} outside {_MASS_WINDOW}"
        )
    tables = _cell_utility_table(utilities, density, a)
    counts = np.zeros(J + 1)
    skipped = 0.0
    if method == "grid_quadrature":
        # each cell's mass spread uniformly over refine^J subcells; the
        # winner is judged at subcell centers, shrinking the misallocated
        # band along indifference boundaries by the refinement factor
        refine = 4
        sub = _subcell_tables(tables, refine)
        who = _winners(sub, a[0])
        sub_masses = masses / refine**J
        for d in range(J):
            sub_masses = np.repeat(sub_masses, refine, axis=d)
        for j in range(J + 1):
            counts[j] = float(sub_masses[who == j].sum())
        skipped = float(sub_masses[who == -1].sum())
    elif method == "monte_carlo":
        rng = np.random.default_rng(seed)
        flat = masses.ravel()
        probs = flat / flat.sum()
        draws = rng.choice(len(flat), size=n, p=probs)
        cells = np.column_stack(np.unravel_index(draws, masses.shape))
        u = rng.random((n, J))
        v = np.empty((n, J))
        for j in range(J):
            ax = density.axes[j]
            lo = ax[cells[:, j]]
            hi = ax[cells[:, j] + 1]
            v[:, j] = lo + u[:, j] * (hi - lo)
        best = np.full(n, a[0])
        who = np.zeros(n, dtype=int)
        n_inf = np.zeros(n, dtype=int)
        for j in range(J):
            t = tables[j]
            lo_w = t[cells[:, j]]
            hi_w = t[cells[:, j] + 1]
            with np.errstate(invalid="ignore"):
                w = lo_w + u[:, j] * (hi_w - lo_w)
            w = np.where(np.isinf(lo_w) & ~np.isinf(hi_w), hi_w, w)
            w = np.where(np.isinf(hi_w) & ~np.isinf(lo_w), lo_w, w)
            w = np.where(np.isinf(lo_w) & np.isinf(hi_w), lo_w, w)
            n_inf += (np.isinf(w) & (w > 0)).astype(int)
            take = w > best
            best = np.where(take, w, best)
            who = np.where(take, j + 1, who)
        who = np.where(n_inf > 1, -1, who)
        per_draw = total / n
        for j in range(J + 1):
            counts[j] = float(np.sum(who == j)) * per_draw
        skipped = float(np.sum(who == -1)) * per_draw
    else:
        raise ValidationError(f"unknown method {method!r}")
    decided = counts.sum()
    leakage = 1.0 - decided
    q = counts / decided if decided > 0 else counts
    if return_diagnostics:
        return q, {"skipped_mass": skipped, "leakage": leakage, "mass": total}
    return q


@dataclass(frozen=True)
class VerifyReport:
    """Per-alternative error summary of the round-trip comparison."""

    max_abs_error: np.ndarray
    mean_abs_error: np.ndarray
    worst_point: tuple
    mass: float
    passed: bool
    tol: float
    method: str
    metadata: dict = dc_field(default_factory=dict)

    @property
    def overall_max(self) -> float:
        return float(np.max(self.max_abs_error))

    def to_dict(self) -> dict:
        return {
            "max_abs_error": self.max_abs_error.tolist(),
            "mean_abs_error": self.mean_abs_error.tolist(),
            "worst_point": list(self.worst_point),
            "mass": self.mass,
            "passed": self.passed,
            "tol": self.tol,
            "method": self.method,
            "metadata": self.metadata,
        }


def round_trip_report(
    field: ProbabilityField,
    utilities,
    density: DensityGrid,
    test_points,
    tol: float = 0.02,
    method: str = "grid_quadrature",
    n: int = 100_000,
    seed: int = 0,
) -> VerifyReport:
    """Compare rationalized probabilities against the field at test points."""
    test_points = np.atleast_2d(np.asarray(test_points, dtype=float))
    J = density.n_dims
    errs = np.zeros((len(test_points), J + 1))
    mass = float(density.cell_masses().sum())
    for i, a in enumerate(test_points):
        q_rec = rationalized_choice_prob(
            utilities, density, a, method=method, n=n, seed=seed + i
        )
        q_in = field.interpolate(a)
        errs[i] = np.abs(q_rec - q_in)
    worst_i = int(np.argmax(errs.max(axis=1)))
    return VerifyReport(
        max_abs_error=errs.max(axis=0),
        mean_abs_error=errs.mean(axis=0),
        worst_point=tuple(test_points[worst_i]),
        mass=mass,
        passed=bool(errs.max() <= tol),
        tol=tol,
        method=method,
        metadata={"n_points": len(test_points), "draws": n, "seed": seed},
    )


def translation_invariance_check(
    field: ProbabilityField,
    shifts,
    tol: float = 5e-3,
    n_points: int = 50,
    seed: int = 0,
) -> dict:
    """Max |q(a + c*1) - q(a)| over sampled a per shift c; pass iff <= tol.

    Invariance under common translation of all offers is the observable face
    of utilities with unit slope in the numeraire (no income effects).
    """
    rng = np.random.default_rng(seed)
    lower = np.asarray(field.grid.lower)
    upper = np.asarray(field.grid.upper)
    shifts = [float(c) for c in shifts]
    c_max = max((abs(c) for c in shifts), default=0.0)
    span = upper - lower
    if np.any(2 * c_max >= span):
        raise ValidationError("shifts too large for the field hull")
    lo = lower + max(c_max, 0.0)
    hi = upper - max(c_max, 0.0)
    pts = lo + rng.random((n_points, field.grid.dims)) * (hi - lo)
    per_shift = {}
    worst = 0.0
    for c in shifts:
        devs = np.empty(n_points)
        for i, a in enumerate(pts):
            devs[i] = float(
                np.max(np.abs(field.interpolate(a + c) - field.interpolate(a)))
            )
        d = float(devs.max())
        per_shift[c] = d
        worst = max(worst, d)
    return {
        "per_shift_max_deviation": per_shift,
        "max_deviation": worst,
        "tol": tol,
        "passed": worst <= tol,
        "n_points": n_points,
    }

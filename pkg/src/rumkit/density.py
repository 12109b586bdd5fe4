"""Heterogeneity distribution recovery from a probability field and omega maps.

The distribution of the recovered taste variables v = (v_1, ..., v_J) is read
off the field: the CDF is F(v) = q_0 evaluated at the a-point where every
omega_j attains level v_j, and the density is the ratio of the J-th mixed
partial of q_0 to the product of the omega slopes, evaluated at the same
point. An alternative route differentiates q_k (one inside alternative) with
respect to a_0 and the other offer coordinates instead; both quotients must
agree, which makes the pair a strong internal consistency check.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import NegativeDensityError, SupportError, ValidationError
from .field import ProbabilityField

_INTERIOR_MARGIN = 2  # grid steps kept clear of the boundary for FD stencils


@dataclass(frozen=True)
class MassReport:
    """Normalization diagnostics for a reconstructed density grid."""

    mass: float
    corner_cdf: float
    support_fraction: float
    clipped_nodes: int
    min_raw_density: float

    def to_dict(self) -> dict:
        return {
            "mass": self.mass,
            "corner_cdf": self.corner_cdf,
            "support_fraction": self.support_fraction,
            "clipped_nodes": self.clipped_nodes,
            "min_raw_density": self.min_raw_density,
        }


@dataclass
class DensityGrid:
    """Rectangular lattice in v-space with density, CDF and support mask."""

    axes: tuple  # tuple of 1-D arrays, one per v_j
    f_values: np.ndarray
    F_values: np.ndarray
    support_mask: np.ndarray
    clipped_nodes: int = 0
    min_raw_density: float = 0.0
    a_ref: tuple = ()
    provenance: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        shape = tuple(len(ax) for ax in self.axes)
        for name in ("f_values", "F_values"):
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValidationError(f"{name} shape {arr.shape} != grid shape {shape}")
        if self.support_mask.shape != shape:
            raise ValidationError("support_mask shape mismatch")
        if np.any(self.f_values[self.support_mask] < 0):
            raise ValidationError("negative density on support after clipping")

    @property
    def n_dims(self) -> int:
        return len(self.axes)

    def cell_masses(self) -> np.ndarray:
        """Per-cell trapezoid mass; cells with any out-of-support corner get 0."""
        f = np.where(self.support_mask, self.f_values, 0.0)
        corners = f
        widths = []
        for d, ax in enumerate(self.axes):
            sl_lo = [slice(None)] * self.n_dims
            sl_hi = [slice(None)] * self.n_dims
            sl_lo[d] = slice(0, -1)
            sl_hi[d] = slice(1, None)
            corners = 0.5 * (corners[tuple(sl_lo)] + corners[tuple(sl_hi)])
            widths.append(np.diff(ax))
        vol = np.ones(corners.shape)
        for d, w in enumerate(widths):
            shape = [1] * self.n_dims
            shape[d] = len(w)
            vol = vol * w.reshape(shape)
        return corners * vol

    def cumulative_from_density(self) -> np.ndarray:
        """Cumulative trapezoid integral of f up to each node (CDF consistency path)."""
        f = np.where(self.support_mask, self.f_values, 0.0)
        cells = self.cell_masses()
        cum = cells
        for d in range(self.n_dims):
            cum = np.cumsum(cum, axis=d)
        out = np.zeros(f.shape)
        out[(slice(1, None),) * self.n_dims] = cum
        return out

    def export_csv(self, path) -> None:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        cols = [m.ravel() for m in mesh]
        cols += [
            self.f_values.ravel(),
            self.F_values.ravel(),
            self.support_mask.ravel().astype(int),
        ]
        header = ",".join(
            [f"v_{j + 1}" for j in range(self.n_dims)] + ["f", "F", "in_support"]
        )
        np.savetxt(
            path,
            np.stack(cols, axis=-1),
            delimiter=",",
            header=header,
            comments="",
            fmt="%.12g",
        )


def make_v_grid(omegas, n: int = 101, bounds=None) -> tuple:
    """Axes for the v lattice from the attained omega ranges.

    Log-spaced per axis when the attained range is positive and spans more
    than a decade, linear otherwise. Explicit bounds (list of (lo, hi) per
    axis) override the attained ranges.
    """
    axes = []
    for j, om in enumerate(omegas):
        if bounds is not None and bounds[j] is not None:
            lo, hi = bounds[j]
        else:
            vals = om.lattice_values
            lo, hi = float(vals.min()), float(vals.max())
        if not hi > lo:
            raise ValidationError(f"degenerate v range for axis {j}")
        if lo > 0 and hi / lo > 10.0:
            axes.append(np.geomspace(lo, hi, n))
        else:
            axes.append(np.linspace(lo, hi, n))
    return tuple(axes)


def _axis_is_log(lo: float, hi: float) -> bool:
    return lo > 0 and hi / lo > 20.0


def _interior_a0_candidates(
    field: ProbabilityField,
    n: int = 64,
    margin_steps: int = 0,
    return_node_mask: bool = False,
):
    """Reference a_0 values inside the field: exact grid nodes first, then
    off-node values spread log-uniformly on wide positive axes.

    Any a_0 works as the mapping reference when a_0 is not differentiated
    (FD stencils shift the other axes by exactly one grid spacing, so cell
    phase is preserved); margin_steps > 0 keeps room for an a_0 stencil.
    Exact nodes are preferred because interpolation along a_0 is node-exact
    there, but each reference only reaches a bounded v-window per omega, so
    the off-node spread fills coverage gaps between sparse nodes.
    """
    ax = field.grid.axes()[0]
    valid = ax[margin_steps : len(ax) - margin_steps or None]
    lo, hi = float(valid[0]), float(valid[-1])
    if _axis_is_log(lo, hi):
        targets = np.geomspace(lo, hi, n)
        pick = np.abs(np.log(valid)[None, :] - np.log(targets)[:, None]).argmin(axis=1)
    else:
        targets = np.linspace(lo, hi, n)
        pick = np.abs(valid[None, :] - targets[:, None]).argmin(axis=1)

    def middle_out(arr):
        k = len(arr)
        return arr[np.argsort(np.abs(np.arange(k) - k // 2), kind="stable")]

    nodes = middle_out(valid[np.unique(pick)])
    cands = np.concatenate([nodes, middle_out(targets)])
    if return_node_mask:
        mask = np.zeros(len(cands), dtype=bool)
        mask[: len(nodes)] = True
        return cands, mask
    return cands


def reconstruct_cdf(
    field: ProbabilityField,
    omegas,
    v,
    a_0=None,
    return_spread: bool = False,
):
    """CDF value F(v) = q_0 at the a-point where each omega_j attains v_j.

    The mapped point depends on the reference a_0 but the value does not, so
    with a_0=None the value is averaged over three interior references and the
    spread across them is available as a consistency diagnostic.
    """
    v = np.asarray(v, dtype=float)
    if len(v) != len(omegas):
        raise ValidationError("v length must match the number of omega functions")
    if a_0 is not None:
        candidates = [float(a_0)]
        want = 1
    else:
        # middle-out over all interior nodes; keep the first 3 that work
        candidates = _interior_a0_candidates(field)
        want = 3
    vals = []
    for a0 in candidates:
        if len(vals) >= want:
            break
        point = [a0]
        ok = True
        for vj, om in zip(v, omegas):
            aj = om.invert_aj_many(np.array([vj]), a0)[0]
            if np.isnan(aj):
                ok = False
                break
            point.append(aj)
        if not ok:
            continue
        try:
            q = field.interpolate(np.asarray(point))
        except Exception:
            continue
        vals.append(q[0])
    if not vals:
        raise SupportError(
            f"v = {v.tolist()} has no level-attaining a-point at any reference a_0"
        )
    mean = float(np.mean(vals))
    spread = float(np.max(vals) - np.min(vals)) if len(vals) > 1 else 0.0
    if return_spread:
        return mean, spread
    return mean


def _axis_index(a_axes, value) -> float:
    # margin respected by callers; here just the spacing for the FD step
    return a_axes[1] - a_axes[0]


def _mixed_partial_batch(field: ProbabilityField, r: int, axes, points, deltas):
    """Vectorized central-difference mixed partial of q_r over the given axes.

    points: (n, dims) array of interior a-points; deltas: FD half-steps per
    differentiated axis. Uses the 2^m corner stencil in one interpolator call.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    m = len(axes)
    stencil = []
    signs = []
    for combo in itertools.product((-1.0, 1.0), repeat=m):
        shifted = points.copy()
        for s, ax, d in zip(combo, axes, deltas):
            shifted[:, ax] += s * d
        stencil.append(shifted)
        signs.append(np.prod(combo))
    flat = np.concatenate(stencil, axis=0)
    vals = field._interpolators[r](flat).reshape(len(signs), n)
    num = np.tensordot(np.asarray(signs), vals, axes=1)
    return num / np.prod([2.0 * d for d in deltas])


def reconstruct_density(
    field: ProbabilityField,
    omegas,
    v_grid,
    route: str = "mixed",
    alt_k: int = 1,
    tol_neg: float | None = None,
) -> DensityGrid:
    """Density grid over v_grid (tuple of axes) from the field and omega maps.

    route "mixed": f = [mixed partial of q_0 over a_1..a_J] / prod_j d_omega_j/d_a_j.
    route "alt":   f = -[partial over a_0 and a_{j != alt_k} of q_{alt_k}]
                       / [d_omega_k/d_a_0 * prod_{j != k} d_omega_j/d_a_j].
    Each v-node is mapped to a-space at the innermost reference a_0 where
    every inversion lands clear of the FD stencil margin, preferring exact
    grid nodes over off-node references whenever one is usable;
    nodes with no such reference are masked out of support. Negative values in
    [-tol_neg, 0) are clipped to 0 and counted; anything below -tol_neg aborts.
    """
    J = len(omegas)
    if field.grid.dims != J + 1:
        raise ValidationError("field dimensionality must be J + 1")
    if route not in ("mixed", "alt"):
        raise ValidationError(f"unknown route {route!r}")
    if route == "alt" and not 1 <= alt_k <= J:
        raise ValidationError("alt_k must name an inside alternative")
    axes_a = field.grid.axes()
    spacing = field.grid.spacing
    candidates, node_mask = _interior_a0_candidates(
        field, margin_steps=0 if route == "mixed" else 1, return_node_mask=True
    )

    def axis_bounds(j):
        # one grid step of clearance per differentiated axis; a_k is only
        # interpolated on the alt route, a_0 only on the mixed route
        steps = 0 if (route == "alt" and j + 1 == alt_k) else 1
        return (
            axes_a[j + 1][0] + steps * spacing[j + 1],
            axes_a[j + 1][-1] - steps * spacing[j + 1],
        )

    # b_j(v, a_0) for every axis value and candidate reference, all at once
    inv = []  # inv[j][c] = a_j array over v-axis j, NaN when unusable
    for j, om in enumerate(omegas):
        lo, hi = axis_bounds(j)
        per_cand = []
        for a0 in candidates:
            b = om.invert_aj_many(v_grid[j], float(a0))
            b = np.where((b >= lo) & (b <= hi), b, np.nan)
            per_cand.append(b)
        inv.append(np.asarray(per_cand))

    shape = tuple(len(ax) for ax in v_grid)
    f_raw = np.full(shape, np.nan)
    support = np.zeros(shape, dtype=bool)

    # score each candidate per node by how deep every inverted coordinate
    # sits inside its axis; pick the deepest, mask nodes with no valid choice
    score = np.full((len(candidates),) + shape, np.inf)
    for j in range(J):
        lo, hi = axis_bounds(j)
        b = inv[j]  # (n_cand, n_axis_j)
        if _axis_is_log(lo, hi):
            m = np.minimum(np.log(b / lo), np.log(hi / b)) / np.log(hi / lo)
        else:
            m = np.minimum(b - lo, hi - b) / (hi - lo)
        m = np.where(np.isnan(m), -1.0, m)
        reshape = [len(candidates)] + [1] * J
        reshape[1 + j] = shape[j]
        score = np.minimum(score, m.reshape(reshape))
    # any valid node reference beats every off-node one (depth spans [0, 0.5])
    bonus = np.where(
        (score >= 0.0) & node_mask.reshape((-1,) + (1,) * J), 2.0, 0.0
    )
    first = np.argmax(score + bonus, axis=0)
    any_valid = np.max(score, axis=0) >= 0.0

    deltas_j = [spacing[j + 1] for j in range(J)]
    for c, a0 in enumerate(candidates):
        sel = any_valid & (first == c)
        if not sel.any():
            continue
        idx = np.argwhere(sel)
        pts = np.empty((len(idx), J + 1))
        pts[:, 0] = a0
        d_om = np.ones(len(idx))
        for j in range(J):
            aj = inv[j][c][idx[:, j]]
            pts[:, j + 1] = aj
        if route == "mixed":
            num = _mixed_partial_batch(
                field, 0, list(range(1, J + 1)), pts, deltas_j
            )
            for j in range(J):
                d_om *= np.asarray(omegas[j].d_aj(pts[:, j + 1], a0))
            f_node = num / d_om
        else:
            k = alt_k
            other = [j for j in range(1, J + 1) if j != k]
            num = _mixed_partial_batch(
                field, k, [0] + other, pts, [spacing[0]] + [spacing[j] for j in other]
            )
            d_om = np.asarray(omegas[k - 1].d_a0(pts[:, k], a0))
            for j in other:
                d_om = d_om * np.asarray(omegas[j - 1].d_aj(pts[:, j], a0))
            f_node = -num / d_om
        f_raw[tuple(idx.T)] = f_node
        support[tuple(idx.T)] = True

    if not support.any():
        raise SupportError("no v-node maps into the field interior")
    fmax = float(np.nanmax(f_raw))
    if tol_neg is None:
        tol_neg = 1e-4 * max(fmax, 0.0)
    min_raw = float(np.nanmin(f_raw))
    if min_raw < -tol_neg:
        raise NegativeDensityError(
            f"density {min_raw:.3e} below -tol_neg = {-tol_neg:.3e}"
        )
    clipped = int(np.sum((f_raw < 0) & support))
    f_vals = np.where(support, np.clip(f_raw, 0.0, None), 0.0)

    # CDF at each node through the same mapping, vectorized per candidate
    F_vals = np.zeros(shape)
    for c, a0 in enumerate(candidates):
        sel = any_valid & (first == c)
        if not sel.any():
            continue
        idx = np.argwhere(sel)
        pts = np.empty((len(idx), J + 1))
        pts[:, 0] = a0
        for j in range(J):
            pts[:, j + 1] = inv[j][c][idx[:, j]]
        F_vals[tuple(idx.T)] = field._interpolators[0](pts)

    return DensityGrid(
        axes=tuple(np.asarray(ax, dtype=float) for ax in v_grid),
        f_values=f_vals,
        F_values=F_vals,
        support_mask=support,
        clipped_nodes=clipped,
        min_raw_density=min_raw,
        a_ref=tuple(om.a_ref for om in omegas),
        provenance={"route": route, "field_hash": field.content_hash()},
    )


def check_normalization(d: DensityGrid) -> MassReport:
    """Trapezoid mass over the support plus the top-corner CDF cross-estimate."""
    mass = float(d.cell_masses().sum())
    top = tuple(-1 for _ in d.axes)
    corner = float(d.F_values[top]) if d.support_mask[top] else float("nan")
    if np.isnan(corner):
        # fall back to the highest in-support node on the diagonal order
        in_sup = np.argwhere(d.support_mask)
        if len(in_sup):
            corner = float(d.F_values[tuple(in_sup[np.argmax(in_sup.sum(axis=1))])])
    return MassReport(
        mass=mass,
        corner_cdf=corner,
        support_fraction=float(d.support_mask.mean()),
        clipped_nodes=d.clipped_nodes,
        min_raw_density=d.min_raw_density,
    )

"""Diagnostics: entropies, Lyapunov functionals, decay fits, inequality checks.

Entropy-like integrands are evaluated in shifted form so every term is
nonnegative and the quadrature never cancels: u*log(u/ubar) integrates to the
same value as u*log(u/ubar) - (u - ubar) because the linear part integrates to
zero exactly under midpoint quadrature, and the shifted integrand is a convex
distance from the mean. Same trick for the logistic equilibrium entropy. This
keeps the functionals clean down to ~1e-14 relative to field scale, which the
late-time decay fits rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .elliptic import elliptic_residual
from .grid import (
    Field,
    Grid,
    grad_norm_arrays,
    gradient_arrays,
    integrate,
    lp_norm,
    mean,
)

__all__ = [
    "DiagnosticsRecord",
    "RateFit",
    "InequalityCheck",
    "INEQUALITY_NAMES",
    "relative_entropy",
    "entropy_sandwich_check",
    "lyap_F1",
    "lyap_F2",
    "grad_l2",
    "mass_balance_residual",
    "fit_decay_rate",
    "CosineTestFunction",
    "verify_interpolation_inequalities",
    "diagnostics_record",
]

# trajectory CSV schema; mass_u_theta is in-memory only (record-level mass
# balance needs int u^(theta+1) which the serialized schema does not carry)
TRAJECTORY_COLUMNS = (
    "t", "mass_u", "mass_v", "linf_u", "linf_v", "l2_u_dev", "l2_v_dev",
    "l2_grad_v", "linf_grad_w", "F1", "F2", "elliptic_residual",
    "min_u", "min_v",
)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    mass_u: float
    mass_v: float
    linf_u: float
    linf_v: float
    l2_u_dev: float
    l2_v_dev: float
    l2_grad_v: float
    linf_grad_w: float
    F1: float
    F2: float
    elliptic_residual: float
    min_u: float
    min_v: float
    mass_u_theta: float = 0.0

    def csv_values(self):
        return [getattr(self, name) for name in TRAJECTORY_COLUMNS]


@dataclass(frozen=True)
class RateFit:
    rate: float
    intercept: float
    r_squared: float
    window: tuple[float, float]
    n_samples: int


def relative_entropy(u: Field) -> float:
    """int u log(u / mean u) >= 0. Requires u > 0 cell-wise."""
    vals = u.values
    if vals.min() <= 0.0:
        raise ValueError("relative entropy needs a strictly positive field")
    ubar = float(vals.mean())  # uniform cells: arithmetic mean == field mean
    z = vals / ubar - 1.0
    # (1+z)log1p(z) - z >= 0, no cancellation across cells
    return float(ubar * np.sum((1.0 + z) * np.log1p(z) - z) * u.grid.cell_volume)


def entropy_sandwich_check(u: Field) -> tuple[float, float]:
    """Gaps of the L1/L2 entropy sandwich; both >= 0 up to round-off.

    lower_gap  = entropy - ||u-ubar||_1^2 / (2 ubar)
    upper_gap  = ||u-ubar||_2^2 / ubar - entropy
    The L1 lower constant is sharp only for domains of measure <= 1; the
    shipped presets all use unit-measure boxes.
    """
    ent = relative_entropy(u)
    ubar = mean(u)
    dev = Field(u.grid, u.values - ubar)
    l1 = lp_norm(dev, 1)
    l2 = lp_norm(dev, 2)
    return ent - l1 * l1 / (2.0 * ubar), l2 * l2 / ubar - ent


def grad_l2(f: Field) -> float:
    """L2 norm of the face gradient (one cell volume per interior face)."""
    g = gradient_arrays(f.shaped(), f.grid.spacing)
    return grad_norm_arrays(g, f.grid.cell_volume)


def lyap_F1(state, chi: float) -> float:
    """Entropy energy for growth-free runs: int u log(u/ubar) + (chi/2)||grad v||^2."""
    return relative_entropy(state.u) + 0.5 * chi * grad_l2(state.v) ** 2


def lyap_F2(state, p) -> float:
    """Equilibrium entropy for logistic runs, centered on b = (a/mu)^(1/theta).

    int (u - b - b log(u/b)) + (b chi^2 / 2d) int (v - b)^2; needs a, mu > 0.
    """
    if p.a <= 0.0 or p.mu <= 0.0:
        raise ValueError("F2 requires a > 0 and mu > 0 (carrying state b degenerate)")
    b = (p.a / p.mu) ** (1.0 / p.theta)
    uvals = state.u.values
    if uvals.min() <= 0.0:
        raise ValueError("F2 needs a strictly positive cell density")
    z = uvals / b - 1.0
    vol = state.u.grid.cell_volume
    ent = float(b * np.sum(z - np.log1p(z)) * vol)
    vdev = state.v.values - b
    return ent + (b * p.chi ** 2 / (2.0 * p.d)) * float(np.sum(vdev * vdev) * vol)


def mass_balance_residual(traj, p) -> float:
    """Max over consecutive records of the discrete mass-law defect for u.

    |mass_u(k+1) - mass_u(k) - dt_k * (a * mass_u(k) - mu * int u^(theta+1)(k))|,
    with the right side evaluated at the earlier record (the explicit stage of
    the scheme). Single-record trajectories return 0.
    """
    recs = traj.records
    worst = 0.0
    for r0, r1 in zip(recs, recs[1:]):
        dt = r1.t - r0.t
        rhs = p.a * r0.mass_u - p.mu * r0.mass_u_theta
        worst = max(worst, abs(r1.mass_u - r0.mass_u - dt * rhs))
    return worst


def fit_decay_rate(series, window=None) -> RateFit:
    """Least-squares exponential rate on (t, value) pairs inside [t0, t1].

    Fits log(value) = intercept - rate * t. Needs >= 10 samples in the
    window, all strictly positive (shrink the window to dodge the round-off
    floor of deeply converged functionals). window=None fits the last half
    of the series.
    """
    arr = np.asarray(list(series), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("series must be (t, value) pairs")
    if window is None:
        window = (arr[0, 0] + 0.5 * (arr[-1, 0] - arr[0, 0]), arr[-1, 0])
    t0, t1 = float(window[0]), float(window[1])
    if not t0 < t1:
        raise ValueError(f"bad fit window ({t0}, {t1})")
    sel = (arr[:, 0] >= t0) & (arr[:, 0] <= t1)
    t = arr[sel, 0]
    v = arr[sel, 1]
    if t.size < 10:
        raise ValueError(f"only {t.size} samples in window ({t0}, {t1}); need >= 10")
    if np.any(v <= 0.0):
        raise ValueError(
            f"nonpositive values in window ({t0}, {t1}); shrink the window"
        )
    y = np.log(v)
    tm = t.mean()
    ym = y.mean()
    stt = float(np.sum((t - tm) ** 2))
    slope = float(np.sum((t - tm) * (y - ym)) / stt)
    intercept = ym - slope * tm
    ss_res = float(np.sum((y - (intercept + slope * t)) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-20 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return RateFit(-slope, intercept, r2, (t0, t1), int(t.size))


# ---------------------------------------------------------------------------
# interpolation-inequality battery

INEQUALITY_NAMES = ("grad_pairing", "div_pairing", "grad_power")


@dataclass(frozen=True)
class InequalityCheck:
    name: str
    lhs: float
    rhs: float


class CosineTestFunction:
    """Neumann-compatible trig polynomial: sum_k c_k prod_i cos(k_i pi x_i / L_i).

    Modes k_i <= 3 per axis. Zero normal derivative on every box face, so the
    integration-by-parts identities behind the inequality battery apply.
    Derivatives are analytic; the battery samples them at cell centers.
    """

    MAX_MODE = 3

    def __init__(self, lengths, coeffs):
        self.lengths = tuple(float(l) for l in lengths)
        self.dim = len(self.lengths)
        shape = (self.MAX_MODE + 1,) * self.dim
        c = np.asarray(coeffs, dtype=np.float64).reshape(shape)
        self.coeffs = c

    @classmethod
    def random(cls, lengths, rng):
        dim = len(lengths)
        n = (cls.MAX_MODE + 1) ** dim
        return cls(lengths, rng.uniform(-1.0, 1.0, size=n))

    def _tables(self, grid: Grid, axis: int):
        x = grid.axis_centers(axis)
        ks = np.arange(self.MAX_MODE + 1)
        omega = ks * math.pi / self.lengths[axis]
        arg = np.outer(omega, x)
        return np.cos(arg), np.sin(arg), omega

    def sample(self, grid: Grid):
        """Values, gradients, Hessians at cell centers (flat row-major).

        Returns (vals (M,), grad (M,dim), hess (M,dim,dim)).
        """
        if grid.dim != self.dim:
            raise ValueError("grid/function dimension mismatch")
        if grid.dim == 1:
            C, S, om = self._tables(grid, 0)
            c = self.coeffs
            vals = c @ C
            grad = (-(c * om)) @ S
            hess = (-(c * om * om)) @ C
            return vals, grad[:, None], hess[:, None, None]

        C0, S0, om0 = self._tables(grid, 0)
        C1, S1, om1 = self._tables(grid, 1)
        c = self.coeffs
        n0, n1 = grid.cells
        m = grid.n_cells
        vals = np.zeros((n0, n1))
        gx = np.zeros((n0, n1))
        gy = np.zeros((n0, n1))
        hxx = np.zeros((n0, n1))
        hyy = np.zeros((n0, n1))
        hxy = np.zeros((n0, n1))
        for k0 in range(self.MAX_MODE + 1):
            for k1 in range(self.MAX_MODE + 1):
                ck = c[k0, k1]
                if ck == 0.0:
                    continue
                cc = np.outer(C0[k0], C1[k1])
                vals += ck * cc
                gx += -ck * om0[k0] * np.outer(S0[k0], C1[k1])
                gy += -ck * om1[k1] * np.outer(C0[k0], S1[k1])
                hxx += -ck * om0[k0] ** 2 * cc
                hyy += -ck * om1[k1] ** 2 * cc
                hxy += ck * om0[k0] * om1[k1] * np.outer(S0[k0], S1[k1])
        grad = np.stack([gx.ravel(), gy.ravel()], axis=1)
        hess = np.empty((m, 2, 2))
        hess[:, 0, 0] = hxx.ravel()
        hess[:, 1, 1] = hyy.ravel()
        hess[:, 0, 1] = hxy.ravel()
        hess[:, 1, 0] = hxy.ravel()
        return vals.ravel(), grad, hess


def verify_interpolation_inequalities(test_id: int, p: float, grid: Grid):
    """Evaluate both sides of the three gradient-interpolation inequalities.

    test_id seeds the coefficient draw for the (g, h) pair; p >= 1 is the
    exponent. Returns three InequalityCheck entries; the caller asserts
    lhs <= rhs * (1 + 5h) (h = max spacing) to absorb quadrature error.
    """
    if p < 1.0:
        raise ValueError(f"exponent p must be >= 1, got {p}")
    rng = np.random.default_rng(int(test_id))
    g = CosineTestFunction.random(grid.lengths, rng)
    h = CosineTestFunction.random(grid.lengths, rng)

    gv, gg, gH = g.sample(grid)
    hv, hg, hH = h.sample(grid)
    vol = grid.cell_volume
    rootn = math.sqrt(grid.dim)

    def quad(f):
        return float(np.sum(f) * vol)

    def lq_norm(f, q):
        return quad(np.abs(f) ** q) ** (1.0 / q)

    gmag = np.sqrt(np.sum(gg * gg, axis=1))
    lap_g = np.trace(gH, axis1=1, axis2=2)
    lap_h = np.trace(hH, axis1=1, axis2=2)
    frob_g = np.sqrt(np.sum(gH * gH, axis=(1, 2)))
    frob_h = np.sqrt(np.sum(hH * hH, axis=(1, 2)))
    g_sup = float(np.max(np.abs(gv)))

    # |grad g|^(2p-2) grad g . grad(grad g . grad h)
    mixed = np.einsum("mij,mj->mi", gH, hg) + np.einsum("mij,mj->mi", hH, gg)
    pair = np.einsum("mi,mi->m", gg, mixed)
    lhs1 = abs(quad(gmag ** (2.0 * p - 2.0) * pair))
    rhs1 = (rootn / (2.0 * p) + 1.0) * lq_norm(gmag, 2.0 * (p + 1.0)) ** (2.0 * p) \
        * lq_norm(frob_h, p + 1.0)

    # g * lap h * div(|grad g|^(2p-2) grad g)
    div_flux = gmag ** (2.0 * p - 2.0) * lap_g
    if p > 1.0:
        qform = np.einsum("mi,mij,mj->m", gg, gH, gg)
        pos = gmag > 0.0
        extra = np.zeros_like(gmag)
        extra[pos] = gmag[pos] ** (2.0 * p - 4.0) * qform[pos]
        div_flux = div_flux + (2.0 * p - 2.0) * extra
    lhs2 = abs(quad(gv * lap_h * div_flux))
    rhs2 = (2.0 * (p - 1.0) + rootn) * g_sup \
        * lq_norm(gmag, 2.0 * (p + 1.0)) ** (p - 1.0) \
        * lq_norm(lap_h, p + 1.0) \
        * math.sqrt(quad(gmag ** (2.0 * p - 2.0) * frob_g ** 2))

    # |grad g|^(2(p+1)) vs Hessian-weighted lower power
    lhs3 = quad(gmag ** (2.0 * (p + 1.0)))
    rhs3 = (2.0 * p + rootn) ** 2 * g_sup ** 2 \
        * quad(gmag ** (2.0 * (p - 1.0)) * frob_g ** 2)

    return [
        InequalityCheck("grad_pairing", lhs1, rhs1),
        InequalityCheck("div_pairing", lhs2, rhs2),
        InequalityCheck("grad_power", lhs3, rhs3),
    ]


# ---------------------------------------------------------------------------
# per-state diagnostics

def diagnostics_record(state, p, u0_mean: float) -> DiagnosticsRecord:
    """Assemble the per-record diagnostics row.

    Deviation target is the logistic carrying state b = (a/mu)^(1/theta) when
    a, mu > 0, otherwise the (conserved) initial mean. F1 is recorded on
    growth-free runs, F2 on logistic runs; either is nan when its positivity
    precondition fails (possible under the central flux scheme).
    """
    u, v, w = state.u, state.v, state.w
    grid = u.grid
    if p.a > 0.0 and p.mu > 0.0:
        target = (p.a / p.mu) ** (1.0 / p.theta)
    else:
        target = u0_mean
    min_u = float(u.values.min())
    min_v = float(v.values.min())

    f1 = math.nan
    f2 = math.nan
    if min_u > 0.0:
        if p.a == 0.0 and p.mu == 0.0:
            f1 = lyap_F1(state, p.chi)
        elif p.a > 0.0 and p.mu > 0.0:
            f2 = lyap_F2(state, p)

    w_grads = gradient_arrays(w.shaped(), grid.spacing)
    linf_grad_w = max((float(np.max(np.abs(g))) if g.size else 0.0) for g in w_grads)
    if p.mu > 0.0:
        mass_u_theta = float(np.sum(u.values ** (p.theta + 1.0)) * grid.cell_volume)
    else:
        mass_u_theta = 0.0

    return DiagnosticsRecord(
        t=state.t,
        mass_u=integrate(u),
        mass_v=integrate(v),
        linf_u=lp_norm(u, math.inf),
        linf_v=lp_norm(v, math.inf),
        l2_u_dev=lp_norm(Field(grid, u.values - target, validate=False), 2),
        l2_v_dev=lp_norm(Field(grid, v.values - target, validate=False), 2),
        l2_grad_v=grad_l2(v),
        linf_grad_w=linf_grad_w,
        F1=f1,
        F2=f2,
        elliptic_residual=elliptic_residual(u.values, w.values, grid),
        min_u=min_u,
        min_v=min_v,
        mass_u_theta=mass_u_theta,
    )

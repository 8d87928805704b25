"""Structural bounds, regime classification, and empirical threshold checks.

The structural formulas reproduce the boundedness/convergence conditions of
the model exactly as stated, with the unpinned generic multipliers kept as
named stand-ins (GenericConstants, all defaulting to 1). Empirical checks
read measured quantities off a trajectory (sup-norms of v and grad w) and
evaluate the same expressions, so a report pairs each structural value with
the run it was checked against.

Notation used by the report fields: m1 = L1 mass ceiling, M0 = sup-norm bound
for v, b = (a/mu)^(1/theta) logistic carrying state, A/B = measured sup v /
sup |grad w|, epsilon1 = factor-gradient dissipation weight, sigma = entropy
decay rate floor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

from .grid import FLOAT_FMT

__all__ = [
    "GenericConstants",
    "ThresholdReport",
    "D0Check",
    "compute_m1",
    "structural_M0",
    "structural_gradw_bound",
    "lambda_of_z",
    "empirical_mu_threshold",
    "empirical_d0_check",
    "sigma_rate",
    "condition_presets",
    "mitosis_regime_floor",
    "m1c_value",
    "report_text",
    "report_csv",
]


@dataclass(frozen=True)
class GenericConstants:
    """Unpinned positive multipliers in the structural bounds (defaults 1.0).

    K1/K2 scale the sup-norm bounds, C0/c13 the intermediate ladder bounds,
    xi0/mu0 the regime thresholds for the repulsion and damping branches.
    """

    K1: float = 1.0
    K2: float = 1.0
    C0: float = 1.0
    c13: float = 1.0
    xi0: float = 1.0
    mu0: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"generic constant {f.name} must be > 0")


REPORT_FIELDS = (
    "m1", "M0", "gradw_bound", "M1c", "M_mu", "lambda_of_z", "mu_threshold",
    "empirical_A", "empirical_B", "d0_check_value", "epsilon1", "sigma", "b",
)


@dataclass(frozen=True)
class ThresholdReport:
    """Flat bundle of structural and empirical threshold values.

    Fields that do not apply to a scenario (e.g. sigma on a growth-free run)
    hold nan and serialize as such.
    """

    m1: float = math.nan
    M0: float = math.nan
    gradw_bound: float = math.nan
    M1c: float = math.nan
    M_mu: float = math.nan
    lambda_of_z: float = math.nan
    mu_threshold: float = math.nan
    empirical_A: float = math.nan
    empirical_B: float = math.nan
    d0_check_value: float = math.nan
    epsilon1: float = math.nan
    sigma: float = math.nan
    b: float = math.nan


def report_text(rep: ThresholdReport) -> str:
    return "\n".join(f"{k} = {FLOAT_FMT % getattr(rep, k)}" for k in REPORT_FIELDS) + "\n"


def report_csv(rep: ThresholdReport) -> str:
    header = ",".join(REPORT_FIELDS)
    row = ",".join(FLOAT_FMT % getattr(rep, k) for k in REPORT_FIELDS)
    return header + "\n" + row + "\n"


class D0Check(NamedTuple):
    A: float
    B: float
    check_value: float
    epsilon1: float

    @property
    def passes(self) -> bool:
        return self.check_value >= 0.0


def compute_m1(u0_mass: float, p, omega_measure: float) -> float:
    """L1 ceiling for the cell mass. Exact conservation value when mu = 0;
    with damping, the initial mass plus the logistic saturation excess."""
    if u0_mass < 0 or omega_measure <= 0:
        raise ValueError("need u0_mass >= 0 and a positive domain measure")
    if p.mu == 0.0:
        return u0_mass
    th = p.theta
    excess = (
        (1.0 + p.a) ** ((1.0 + th) / th)
        * (1.0 / p.mu) ** (1.0 / th)
        * (2.0 / (th + 1.0)) ** (1.0 / th)
        * (th / (th + 1.0))
        * omega_measure
    )
    return u0_mass + excess


def structural_M0(p, m1: float, g: GenericConstants = GenericConstants()) -> float:
    """Structural sup-norm bound for the factor v.

    The m1 dependence of the underlying bound is already folded into the
    damping branch's (1/mu)^(1/theta) factors; m1 is accepted so callers can
    pass the matching mass ceiling for report provenance.
    """
    if p.xi2 <= 0.0:
        raise ValueError("structural_M0 needs xi2 > 0")
    n = p.n_dim
    if p.mu == 0.0:
        return g.K1 * (1.0 + 1.0 / p.xi2) * (
            1.0 + p.xi2 + (1.0 / p.d) ** (n / 2.0) * p.xi2 ** (1.0 + n / 2.0)
        )
    r = (1.0 / p.mu) ** (1.0 / p.theta)
    return g.K1 * (1.0 + r + 1.0 / p.xi2) * (
        1.0 + r * p.xi2 + (1.0 / p.d) ** (n / 2.0) * (r * p.xi2) ** (1.0 + n / 2.0)
    )


def mitosis_regime_floor(chi: float, n_dim: int, mu0: float = 1.0) -> float:
    """Damping floor for the theta = 1 regime: max{1, chi^((8+2n)/(5+n))} * mu0 * chi^(2/(5+n))."""
    n = n_dim
    return max(1.0, chi ** ((8.0 + 2.0 * n) / (5.0 + n))) * mu0 * chi ** (2.0 / (5.0 + n))


def m1c_value(p, M0: float, g: GenericConstants) -> tuple[float, float]:
    """(M1c, M_mu) per the applicable regime branch; errors if none applies."""
    n = p.n_dim
    if p.mu == 0.0:
        if p.xi1 >= g.xi0 * p.chi ** 2:
            return p.xi1, math.nan
        raise ValueError(
            f"no gradient-bound branch applies: mu = 0 needs xi1 >= xi0*chi^2 "
            f"({p.xi1} < {g.xi0 * p.chi ** 2})"
        )
    r = (1.0 / p.mu) ** (1.0 / p.theta)
    m_mu = (1.0 + p.xi1 * r + r) * (1.0 / p.mu) ** ((n + 1.0) / p.theta)
    if p.theta == 1.0:
        floor = mitosis_regime_floor(p.chi, n, g.mu0)
        if p.mu > floor:
            return m_mu, m_mu
        raise ValueError(
            f"no gradient-bound branch applies: theta = 1 needs mu > {floor:.6g} "
            f"(mu = {p.mu})"
        )
    if p.theta > 1.0:
        tail = ((p.theta - 1.0) / p.mu ** ((n + 2.0) / (p.theta - 1.0))) * (
            (1.0 + 1.0 / p.d ** (n + 2.0)) * (1.0 + M0 * p.xi2) * M0 * p.chi ** 2
        ) ** ((n + 1.0 + p.theta) / (p.theta - 1.0))
        return m_mu + tail, m_mu
    raise ValueError("no gradient-bound branch applies to this (xi1, mu, theta)")


def structural_gradw_bound(
    p, M0: float, g: GenericConstants = GenericConstants(), convex: bool = True
) -> float:
    """Structural sup-norm bound for |grad w|.

    convex picks the domain term d_Omega in {0, d}; the boxes simulated here
    are convex, the flag exists to evaluate the bound for notional non-convex
    domains.
    """
    n = p.n_dim
    m1c, _ = m1c_value(p, M0, g)
    d_omega = 0.0 if convex else p.d
    inner = 1.0 + (1.0 + d_omega * M0 ** (2.0 * (n + 1.0))) / p.d * p.chi ** 2 \
        * M0 ** (1.0 - n) + m1c
    return g.K2 * inner ** (1.0 / (n + 1.0))


def lambda_of_z(p, cp: float, z: float) -> float:
    """Damping-threshold kernel (d chi^2 + d^2 cp^2 xi1^2 + cp^2 xi2^2 z) / (2 d^2 a^((theta-2)/theta))."""
    if p.a <= 0.0:
        raise ValueError("lambda_of_z needs a > 0")
    num = p.d * p.chi ** 2 + p.d ** 2 * cp ** 2 * p.xi1 ** 2 + cp ** 2 * p.xi2 ** 2 * z
    return num / (2.0 * p.d ** 2 * p.a ** ((p.theta - 2.0) / p.theta))


def _measured_sups(traj) -> tuple[float, float]:
    if not traj.records:
        raise ValueError("empty trajectory")
    A = max(r.linf_v for r in traj.records)
    B = max(r.linf_grad_w for r in traj.records)
    return A, B


def empirical_mu_threshold(traj, p, cp: float) -> float:
    """Damping threshold lambda(M0^2)^(theta/2) with M0 = measured sup_t ||v||_inf."""
    if p.a <= 0.0 or p.mu <= 0.0 or p.theta < 1.0:
        raise ValueError("mu threshold needs a > 0, mu > 0, theta >= 1")
    A, _ = _measured_sups(traj)
    return lambda_of_z(p, cp, A * A) ** (p.theta / 2.0)


def empirical_d0_check(traj, p) -> D0Check:
    """Growth-free dissipation check from measured sups A = sup||v||, B = sup|grad w|.

    check_value = (d - (2 + A xi2)^2 chi / (4 xi1) - B^2 xi2^2 / 4) * chi;
    the run passes when it is >= 0 (chi = 0 passes for every d). epsilon1 is
    the dissipation weight, 0 unless the check is strict.
    """
    if p.a != 0.0 or p.mu != 0.0:
        raise ValueError("d0 check applies to growth-free runs (a = mu = 0)")
    if p.xi1 <= 0.0:
        raise ValueError("d0 check needs xi1 > 0")
    A, B = _measured_sups(traj)
    core = p.d - (2.0 + A * p.xi2) ** 2 * p.chi / (4.0 * p.xi1) - B ** 2 * p.xi2 ** 2 / 4.0
    check_value = core * p.chi
    if check_value > 0.0:
        eps1 = 0.5 * core / (p.d - (2.0 + A * p.xi2) ** 2 * p.chi / (4.0 * p.xi1))
    else:
        eps1 = 0.0
    return D0Check(A, B, check_value, eps1)


def sigma_rate(p, cp: float, M0_measured: float) -> float:
    """Entropy decay rate floor min{1, b^theta (mu - bracket)} for logistic runs.

    bracket = ((1 + cp^2 xi2^2 M0^2 / d) chi^2 / d + cp^2 xi1^2) / (2 b^(theta-2)).
    Errors when the floor is nonpositive (damping below the regime).
    """
    if p.a <= 0.0 or p.mu <= 0.0 or p.theta < 1.0:
        raise ValueError("sigma_rate needs a > 0, mu > 0, theta >= 1")
    b = (p.a / p.mu) ** (1.0 / p.theta)
    bracket = p.mu - (
        (1.0 + cp ** 2 * p.xi2 ** 2 * M0_measured ** 2 / p.d) * p.chi ** 2 / p.d
        + cp ** 2 * p.xi1 ** 2
    ) / (2.0 * b ** (p.theta - 2.0))
    if bracket <= 0.0:
        raise ValueError(
            f"damping below the decay regime: mu - threshold bracket = {bracket:.6g} <= 0"
        )
    return min(1.0, b ** p.theta * bracket)


def condition_presets(p, g: GenericConstants = GenericConstants()) -> str:
    """Classify params into the global-boundedness regimes.

    R1: repulsion dominates (xi1 >= xi0 chi^2); R2: theta = 1 with damping
    above the mitosis floor; R3: theta > 1 with any positive damping; open:
    none of the above (no boundedness claim).
    """
    if p.xi1 >= g.xi0 * p.chi ** 2:
        return "R1"
    if p.theta == 1.0 and p.mu >= mitosis_regime_floor(p.chi, p.n_dim, g.mu0):
        return "R2"
    if p.theta > 1.0 and p.mu > 0.0:
        return "R3"
    return "open"

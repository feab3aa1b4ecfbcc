"""Lumped-parameter valve model: band integrals for the opening-coefficient
ODE, an explicit RK4 advance, and stop clamping.

The ODE is c'' + beta c' = (F_fluid + F_elastic) / denom with
  F_fluid   = ∫ (sigma n·n)(delta+ - delta-) dOmega      (full-stress mode)
            = ∫ p (delta- - delta+) dOmega               (pressure-only mode)
  F_elastic = -gamma ∫ (H - Hhat∘T^-1) delta dOmega
  denom     = ∫ rho_G (g∘T^-1)·n delta dOmega
where n and H are the level-set extended normal and curvature, and the
pullbacks use the closest point on the current surface. The two force modes
agree for a static fluid (sigma n·n = -p when u = 0).
"""

from dataclasses import dataclass

import numpy as np

from .fem.quadrature import tensor_rule
from .geometry.levelset import (
    LevelSetState,
    extended_normal_curvature,
    pullback,
    side_sign,
    smeared_delta,
)


class DegenerateProjectionError(RuntimeError):
    pass


@dataclass
class ValveParams:
    rho_gamma: float = 2.0        # surface density [kg/m^2], default 2*eps*rho
    beta: float = 2.0             # damping [1/s]
    gamma: float = 0.2            # elasticity [N/m]
    force_model: str = "full_stress"   # or "pressure_only"
    force_scale: float = 1.0
    c_min: float = 0.0
    c_max: float = 1.0

    def __post_init__(self):
        if self.rho_gamma <= 0:
            raise ValueError(f"rho_gamma must be positive, got {self.rho_gamma}")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if self.force_model not in ("full_stress", "pressure_only"):
            raise ValueError(f"unknown force model {self.force_model!r}")


@dataclass
class ValveState:
    c: float = 0.0
    cdot: float = 0.0
    step: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.c) and np.isfinite(self.cdot)):
            raise ValueError(f"non-finite valve state (c={self.c}, cdot={self.cdot})")


@dataclass
class ValveRhsBreakdown:
    f_fluid: float    # [N] (per unit depth in 2D)
    f_elastic: float  # [N]
    denom: float      # [kg·m]
    rhs: float        # [1/s^2]


def _values_at(field_or_fn, cells, ref_pts, phys_pts):
    if field_or_fn is None:
        return None
    if callable(field_or_fn):
        return np.asarray(field_or_fn(phys_pts), dtype=float)
    return field_or_fn.eval(cells, ref_pts)["value"]


def assemble_valve_rhs(u, p, level_set: LevelSetState, surface, params: ValveParams,
                       mu: float = 0.0) -> ValveRhsBreakdown:
    """Band integrals of the valve ODE from lagged (previous-step) data.

    u: velocity Field or None (static fluid); p: pressure Field or a callable
    on physical points (manufactured cases). All integrals run over cells
    whose nodal |phi| reaches eps, with a (degree+2)^d Gauss rule. Quadrature
    points with degenerate level-set gradient are skipped and counted on the
    level-set state. Pure function of its inputs.
    """
    space = level_set.space
    mesh = space.mesh
    d = mesh.dim
    eps = level_set.eps
    ref_pts, wts = tensor_rule(space.degree + 2, d)
    jxw = wts * np.prod(mesh.h / 2.0)

    cells = level_set.band_cells()
    if len(cells) == 0:
        raise DegenerateProjectionError("no cells intersect the level-set band")
    nq = len(ref_pts)
    all_cells = np.repeat(cells, nq)
    all_pts = np.tile(ref_pts, (len(cells), 1))
    all_jxw = np.tile(jxw, len(cells))

    phi = level_set.phi.eval(all_cells, all_pts)["value"]
    delta = smeared_delta(phi, eps)
    active = delta > 0.0
    if not np.any(active):
        raise DegenerateProjectionError("smeared delta vanishes on every band point")

    cells_a = all_cells[active]
    pts_a = all_pts[active]
    jxw_a = all_jxw[active]
    delta_a = delta[active]
    phi_a = phi[active]
    side = side_sign(phi_a)

    n_hat, H, valid = extended_normal_curvature(level_set, cells_a, pts_a)
    w = jxw_a * delta_a * valid  # skipped points contribute nothing

    phys = mesh.map_to_physical(cells_a, pts_a)
    band = eps + 2.0 * mesh.h_max
    hhat, g_pull = pullback(surface, phys, band=band, phi=phi_a)

    p_vals = _values_at(p, cells_a, pts_a, phys)
    # gauge shift: the sharp-interface force depends only on the stress jump,
    # but on a curved band the one-sided deltas carry unequal measures, which
    # would leak the absolute pressure level into the force. Subtracting the
    # band-mean pressure restores the invariance (and is exact for flat bands).
    w_all = jxw_a * delta_a
    p_mean = np.sum(w_all * p_vals) / np.sum(w_all)
    p_jumpy = p_vals - p_mean
    if params.force_model == "pressure_only":
        f_fluid = -np.sum(w * side * p_jumpy)
    else:
        sigma_nn = -p_jumpy
        if u is not None:
            grads = u.eval(cells_a, pts_a, grad=True)["grad"]  # (k, d, d)
            sym = 0.5 * (grads + np.swapaxes(grads, 1, 2))
            sigma_nn = sigma_nn + 2.0 * mu * np.einsum(
                "ka,kab,kb->k", n_hat, sym, n_hat
            )
        f_fluid = np.sum(w * side * sigma_nn)
    f_fluid *= params.force_scale

    f_elastic = -params.gamma * np.sum(w * (H - hhat))
    denom = params.rho_gamma * np.sum(w * np.einsum("kd,kd->k", g_pull, n_hat))
    if abs(denom) < 1e-12:
        raise DegenerateProjectionError(
            f"denominator integral {denom:.3e} is degenerate: opening field is "
            "orthogonal to the surface normal (geometry misconfigured)"
        )
    rhs = (f_fluid + f_elastic) / denom
    return ValveRhsBreakdown(
        f_fluid=float(f_fluid), f_elastic=float(f_elastic),
        denom=float(denom), rhs=float(rhs),
    )


def rk4_advance(state: ValveState, rhs: float, beta: float, dt: float) -> ValveState:
    """One classical RK4 step of (c, v): c' = v, v' = rhs - beta v.

    The forcing rhs is frozen over the step (it is only available at the
    lagged time level); the damping term is evaluated per stage.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")

    def f(y):
        return np.array([y[1], rhs - beta * y[1]])

    y = np.array([state.c, state.cdot])
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    y_new = y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return ValveState(c=float(y_new[0]), cdot=float(y_new[1]), step=state.step + 1)


def clamp_and_report(state: ValveState, params: ValveParams, time: float):
    """Stop semantics at the travel limits; returns (state, events)."""
    events = []
    c, cdot = state.c, state.cdot
    if c < params.c_min:
        events.append({"time": time, "step": state.step, "event": "hit closed stop",
                       "c": c, "cdot": cdot})
        c = params.c_min
        cdot = max(cdot, 0.0)
    elif c > params.c_max:
        events.append({"time": time, "step": state.step, "event": "hit open stop",
                       "c": c, "cdot": cdot})
        c = params.c_max
        cdot = min(cdot, 0.0)
    if not events:
        return state, events
    return ValveState(c=c, cdot=cdot, step=state.step), events

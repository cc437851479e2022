"""Bernoulli function Q = |v|^2/2 + p and the pointwise energy identity.

For a smooth solution the kinetic-energy density obeys

    1/2 d/dt |v|^2 + nu |omega|^2 = nu lap Q - v . grad Q

pointwise.  Everything here is instantaneous: the time derivative comes from
the momentum equation, never from differencing snapshots.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .dynamics import FlowState, ns_rhs
from .spectral import ScalarField, VectorField


def normalize_pressure(p: ScalarField) -> ScalarField:
    """Shift p so that its integral over the torus vanishes."""
    return p - p.mean


def compute_pressure(state: FlowState) -> ScalarField:
    """Zero-mean solution of lap p = -sum_jk d_j v_k d_k v_j (dealiased source)."""
    v = state.v
    J = sp.velocity_gradient(v)
    d = v.grid.dim
    src = -sum(J[j][k].values * J[k][j].values for j in range(d) for k in range(d))
    return sp.solve_poisson(sp.dealias(ScalarField(v.grid, src)))


@dataclass(frozen=True)
class BernoulliBundle:
    Q: ScalarField
    gradQ: VectorField
    grad_norm: ScalarField
    dt_kin: ScalarField
    enstrophy_density: ScalarField
    p: ScalarField
    nu: float

    @property
    def grid(self):
        return self.Q.grid

    @property
    def q_min(self) -> float:
        return float(self.Q.values.min())

    @property
    def q_max(self) -> float:
        return float(self.Q.values.max())

    @property
    def energy_integrand(self) -> ScalarField:
        """1/2 d/dt |v|^2 + nu |omega|^2."""
        return self.dt_kin + self.nu * self.enstrophy_density


def compute_bundle(state: FlowState, pressure: ScalarField | None = None) -> BernoulliBundle:
    """Q, grad Q, |grad Q|, 1/2 d/dt |v|^2 and |omega|^2 for one state.

    ``pressure`` overrides the solver pressure; only useful for negative
    controls that deliberately break the identity.
    """
    rhs = ns_rhs(state)
    p = rhs.p if pressure is None else pressure
    v = state.v
    Q = 0.5 * v.norm_sq() + p
    gradQ = sp.gradient(Q)
    grad_norm = ScalarField(Q.grid, np.sqrt(gradQ.norm_sq().values))
    return BernoulliBundle(
        Q=Q,
        gradQ=gradQ,
        grad_norm=grad_norm,
        dt_kin=v.dot(rhs.dvdt),
        enstrophy_density=sp.vorticity_norm_sq(v),
        p=p,
        nu=state.nu,
    )


def lemma21_terms(state: FlowState, bundle: BernoulliBundle | None = None) -> dict:
    """Each term of the pointwise identity as a field."""
    b = compute_bundle(state) if bundle is None else bundle
    nu = state.nu
    return {
        "dt_kin": b.dt_kin,
        "dissipation": nu * b.enstrophy_density,
        "diffusion": nu * sp.laplacian(b.Q),
        "advection": state.v.dot(b.gradQ),
    }


def lemma21_residual(state: FlowState, bundle: BernoulliBundle | None = None) -> ScalarField:
    """nu lap Q - v.grad Q - 1/2 d/dt |v|^2 - nu |omega|^2."""
    t = lemma21_terms(state, bundle)
    return t["diffusion"] - t["advection"] - t["dt_kin"] - t["dissipation"]


def advection_parts(state: FlowState, bundle: BernoulliBundle | None = None):
    """v . grad(|v|^2 / 2) and v . grad p, whose sum is v . grad Q.

    In steady flows the two cancel exactly, so they, not their sum, set the
    size of the terms being balanced.
    """
    b = compute_bundle(state) if bundle is None else bundle
    v = state.v
    kinetic = v.dot(sp.gradient(0.5 * v.norm_sq()))
    return kinetic, v.dot(sp.gradient(b.p))


def lemma21_relative_residual(state: FlowState, bundle: BernoulliBundle | None = None) -> float:
    """Max-norm residual over the largest max-norm among the terms.

    The advection term also contributes its kinetic and pressure parts to
    the scale, which keeps the ratio meaningful for steady flows.
    """
    b = compute_bundle(state) if bundle is None else bundle
    t = lemma21_terms(state, b)
    r = t["diffusion"] - t["advection"] - t["dt_kin"] - t["dissipation"]
    scale = max(f.max_norm() for f in (*t.values(), *advection_parts(state, b)))
    return r.max_norm() / scale if scale > 0 else 0.0

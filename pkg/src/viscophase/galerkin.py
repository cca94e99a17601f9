"""Spectral-Galerkin harness for the order-parameter / bulk-stress
subsystem with zero velocity.

Basis: eigenfunctions of the negative Laplacian with Neumann conditions
on a rectangle, i.e. normalized cosine products.  The projected system
evolves coefficient vectors lam (phi), zeta (q) with the chemical
potential theta recovered algebraically from the orthonormal mass
identity.  Nonlinear integrals use oversampled midpoint quadrature,
which makes the discrete cosine inner products exact to rounding.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .errors import QuadratureResolutionError, SolverError
from .fields import ScalarField
from .material import MaterialModel

__all__ = [
    "CosineBasis", "GalerkinState", "GalerkinRun",
    "project", "assemble_rhs", "integrate_galerkin", "energy_galerkin",
    "convergence_study",
]


def _axis_modes(ks: np.ndarray, x: np.ndarray, L: float) -> np.ndarray:
    """Values of the 1D Neumann eigenfunctions at nodes x: shape (k, x)."""
    norm = np.where(ks == 0, np.sqrt(1.0 / L), np.sqrt(2.0 / L))
    return norm[:, None] * np.cos(ks[:, None] * np.pi * x[None, :] / L)


def _axis_dmodes(ks: np.ndarray, x: np.ndarray, L: float) -> np.ndarray:
    norm = np.where(ks == 0, np.sqrt(1.0 / L), np.sqrt(2.0 / L))
    freq = ks * np.pi / L
    return -(norm * freq)[:, None] * np.sin(ks[:, None] * np.pi * x[None, :] / L)


class CosineBasis:
    """First m cosine-product eigenfunctions, eigenvalue-ordered, with an
    oversampled midpoint quadrature and a doubled check level."""

    def __init__(self, lengths: Sequence[float], m: int, oversample: int = 2):
        lengths = tuple(float(L) for L in lengths)
        if not lengths or len(lengths) > 3:
            raise ValueError("basis supports 1-3 dimensions")
        if m < 1:
            raise ValueError("mode count must be positive")
        d = len(lengths)
        K = int(np.ceil(m ** (1.0 / d))) + 2
        cands = []
        for kt in itertools.product(range(K + 1), repeat=d):
            lam = sum((k * np.pi / L) ** 2 for k, L in zip(kt, lengths))
            cands.append((lam, kt))
        cands.sort()
        self.lengths = lengths
        self.d = d
        self.m = m
        self.kvecs = np.array([kt for _, kt in cands[:m]], dtype=int)
        self.lam = np.array([lam for lam, _ in cands[:m]])
        kmax = int(self.kvecs.max())
        n_quad = max(oversample * (kmax + 1), 4)
        self._build_quadrature(n_quad, fine=False)
        self._build_quadrature(2 * n_quad, fine=True)

    def _build_quadrature(self, n: int, fine: bool) -> None:
        axes = [(np.arange(n) + 0.5) * L / n for L in self.lengths]
        w = float(np.prod([L / n for L in self.lengths]))
        Psi, dPsi = self._tables(axes)
        if fine:
            self.axes_f, self.w_f, self.Psi_f, self.dPsi_f = axes, w, Psi, dPsi
        else:
            self.axes, self.w, self.Psi, self.dPsi = axes, w, Psi, dPsi
            self.n_quad = n

    def _tables(self, axes: Sequence[np.ndarray]):
        """Basis values (m, Nq) and gradients (d, m, Nq) on a tensor grid."""
        vals1 = [_axis_modes(self.kvecs[:, i], axes[i], self.lengths[i])
                 for i in range(self.d)]
        dvals1 = [_axis_dmodes(self.kvecs[:, i], axes[i], self.lengths[i])
                  for i in range(self.d)]
        shape = tuple(len(ax) for ax in axes)
        Nq = int(np.prod(shape))
        Psi = vals1[0]
        for i in range(1, self.d):
            Psi = np.einsum('m...,mj->m...j', Psi, vals1[i])
        Psi = Psi.reshape(self.m, Nq)
        dPsi = np.empty((self.d, self.m, Nq))
        for axis in range(self.d):
            G = (dvals1 if axis == 0 else vals1)[0]
            for i in range(1, self.d):
                nxt = dvals1[i] if i == axis else vals1[i]
                G = np.einsum('m...,mj->m...j', G, nxt)
            dPsi[axis] = G.reshape(self.m, Nq)
        return Psi, dPsi

    def evaluate(self, coeffs: np.ndarray, axes: Sequence[np.ndarray]) -> np.ndarray:
        """Reconstruct the field sum(coeffs_j psi_j) on a tensor grid."""
        Psi, _ = self._tables(axes)
        shape = tuple(len(ax) for ax in axes)
        return (np.asarray(coeffs) @ Psi).reshape(shape)

    def values(self, coeffs: np.ndarray, fine: bool = False) -> np.ndarray:
        return np.asarray(coeffs) @ (self.Psi_f if fine else self.Psi)

    def grads(self, coeffs: np.ndarray, fine: bool = False) -> np.ndarray:
        tab = self.dPsi_f if fine else self.dPsi
        return np.einsum('j,djq->dq', np.asarray(coeffs), tab)

    def inner(self, vals: np.ndarray, fine: bool = False) -> np.ndarray:
        """Coefficients <vals, psi_j> by midpoint quadrature."""
        if fine:
            return self.w_f * (self.Psi_f @ vals)
        return self.w * (self.Psi @ vals)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))


@dataclass(frozen=True)
class GalerkinState:
    t: float
    lam: np.ndarray      # phi coefficients
    theta: np.ndarray    # mu coefficients
    zeta: np.ndarray     # q coefficients


def project(f: Union[Callable, ScalarField, np.ndarray],
            B: CosineBasis) -> np.ndarray:
    """Coefficients <f, psi_j> under the basis quadrature."""
    if isinstance(f, ScalarField):
        if f.grid.shape != tuple(len(ax) for ax in B.axes):
            # resample by evaluating through the field's own nodes is not
            # defined here; require a callable or matching sampling
            raise ValueError("ScalarField sampling does not match the "
                             "basis quadrature; pass a callable instead")
        vals = f.data.reshape(-1)
    elif callable(f):
        mesh = np.meshgrid(*B.axes, indexing="ij")
        vals = np.asarray(f(*mesh), dtype=float)
        if vals.shape != tuple(len(ax) for ax in B.axes):
            vals = np.broadcast_to(vals, tuple(len(ax) for ax in B.axes))
        vals = vals.reshape(-1)
    else:
        vals = np.asarray(f, dtype=float).reshape(-1)
    return B.inner(vals)


def _theta_of(lam: np.ndarray, B: CosineBasis, M: MaterialModel,
              fine: bool = False) -> np.ndarray:
    phi = B.values(lam, fine=fine)
    return M.c0 * B.lam * lam + B.inner(np.asarray(M.potential.df(phi),
                                                  dtype=float), fine=fine)


def assemble_rhs(G: GalerkinState, B: CosineBasis, M: MaterialModel,
                 quad_check: bool = True, quad_tol: float = 1e-6):
    """Time derivatives (dlam/dt, dzeta/dt) and the algebraic theta.

    Weak form with the velocity dropped:
      d lam_j / dt = -<m(phi) grad mu - n(phi) grad(A q), grad psi_j>
      d zeta_j / dt = -<q / tau(phi), psi_j>
                      + <n grad mu - grad(A q), grad(A psi_j)>
                      - eps1 <grad q, grad psi_j>
    with mu in the span of the basis, theta_j = c0 lam_eig_j lam_j
    + <F'(phi), psi_j> by orthonormality.
    """
    lam, zeta = np.asarray(G.lam, float), np.asarray(G.zeta, float)
    theta = _theta_of(lam, B, M)
    if quad_check:
        theta_f = _theta_of(lam, B, M, fine=True)
        if float(np.abs(theta - theta_f).max()) > quad_tol:
            raise QuadratureResolutionError(
                "nonlinear potential term under-resolved by the basis "
                f"quadrature (Richardson gap {np.abs(theta - theta_f).max():.3e})"
            )

    phi = B.values(lam)
    q = B.values(zeta)
    gmu = B.grads(theta)            # (d, Nq)
    gq = B.grads(zeta)
    nv = np.asarray(M.n(phi), dtype=float)
    Av = np.asarray(M.A(phi), dtype=float)
    dAv = np.asarray(M.dA(phi), dtype=float)
    tauv = np.asarray(M.tau(phi), dtype=float)
    gphi = B.grads(lam)

    gAq = Av[None] * gq + (dAv * q)[None] * gphi       # grad(A(phi) q)
    wtil = nv[None] * gmu - gAq                        # n grad mu - grad(Aq)

    # d lam / dt: flux n * wtil against grad psi_j
    dlam = -B.w * np.einsum('dq,djq->j', nv[None] * wtil, B.dPsi)

    # d zeta / dt
    dzeta = -B.inner(q / tauv)
    # grad(A psi_j) = A grad psi_j + psi_j A'(phi) grad phi
    dzeta += B.w * np.einsum('dq,djq->j', Av[None] * wtil, B.dPsi)
    dzeta += B.w * ((wtil * (dAv[None] * gphi)).sum(axis=0) @ B.Psi.T)
    dzeta -= M.eps1 * B.w * np.einsum('dq,djq->j', gq, B.dPsi)

    return dlam, dzeta, theta


def energy_galerkin(G: GalerkinState, B: CosineBasis, M: MaterialModel):
    """Discrete energy E_m and dissipation terms by basis quadrature."""
    lam, zeta = np.asarray(G.lam, float), np.asarray(G.zeta, float)
    phi = B.values(lam)
    q = B.values(zeta)
    gphi = B.grads(lam)
    gq = B.grads(zeta)
    E = B.w * float((0.5 * M.c0 * (gphi**2).sum(axis=0)
                     + np.asarray(M.potential.f(phi))
                     + 0.5 * q * q).sum())
    theta = np.asarray(G.theta, float)
    if not np.any(theta):
        theta = _theta_of(lam, B, M)
    gmu = B.grads(theta)
    nv = np.asarray(M.n(phi), dtype=float)
    Av = np.asarray(M.A(phi), dtype=float)
    dAv = np.asarray(M.dA(phi), dtype=float)
    tauv = np.asarray(M.tau(phi), dtype=float)
    wtil = nv[None] * gmu - (Av[None] * gq + (dAv * q)[None] * gphi)
    D_cross = B.w * float((wtil**2).sum())
    D_q = B.w * float((q * q / tauv).sum())
    D_eps = M.eps1 * B.w * float((gq**2).sum())
    return E, {"D_cross": D_cross, "D_q": D_q, "D_eps": D_eps,
               "D_total": D_cross + D_q + D_eps}


@dataclass
class GalerkinRun:
    times: np.ndarray
    states: List[GalerkinState]
    E: np.ndarray
    D: np.ndarray            # total dissipation at output points
    D_cum: np.ndarray        # integral of D, carried by the integrator

    def state_at(self, i: int) -> GalerkinState:
        return self.states[i]


def integrate_galerkin(initial: GalerkinState, B: CosineBasis,
                       M: MaterialModel, t_end: float, rtol: float = 1e-8,
                       n_output: int = 101,
                       quad_check: bool = True) -> GalerkinRun:
    """Adaptive RK45 integration to t_end with dense energy output.

    The accumulated dissipation is integrated as an extra ODE component
    so the energy balance E(t) + integral(D) holds to integrator accuracy
    rather than output-sampling accuracy.
    """
    if rtol <= 0:
        raise ValueError("rtol must be positive")
    m = B.m

    def rhs(t, y):
        G = GalerkinState(t=t, lam=y[:m], theta=np.zeros(m), zeta=y[m:2 * m])
        dlam, dzeta, theta = assemble_rhs(G, B, M, quad_check=quad_check)
        _, Dterms = energy_galerkin(
            GalerkinState(t=t, lam=y[:m], theta=theta, zeta=y[m:2 * m]),
            B, M)
        return np.concatenate([dlam, dzeta, [Dterms["D_total"]]])

    y0 = np.concatenate([np.asarray(initial.lam, float),
                         np.asarray(initial.zeta, float), [0.0]])
    t_eval = np.linspace(0.0, t_end, n_output)
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="RK45", rtol=rtol,
                    atol=max(rtol * 1e-3, 1e-14), t_eval=t_eval)
    if not sol.success:
        raise SolverError(
            f"Galerkin integration failed ({sol.message}); the system may "
            "be too stiff at this mode count - reduce m or t_end"
        )
    states, Es, Ds = [], [], []
    for k, t in enumerate(sol.t):
        lam, zeta = sol.y[:m, k], sol.y[m:2 * m, k]
        G = GalerkinState(t=float(t), lam=lam,
                          theta=_theta_of(lam, B, M), zeta=zeta)
        E, Dterms = energy_galerkin(G, B, M)
        states.append(G)
        Es.append(E)
        Ds.append(Dterms["D_total"])
    return GalerkinRun(times=np.asarray(sol.t), states=states,
                       E=np.array(Es), D=np.array(Ds),
                       D_cum=sol.y[2 * m].copy())


def convergence_study(m_list: Sequence[int], phi0: Callable, q0: Callable,
                      M: MaterialModel, lengths: Sequence[float],
                      t_end: float, rtol: float = 1e-8,
                      quad_check: bool = True):
    """Pairwise L2 differences of the reconstructed phi at t_end across
    increasing mode counts; all runs share the same initial functions."""
    m_list = list(m_list)
    if any(b <= a for a, b in zip(m_list, m_list[1:])):
        raise ValueError("mode counts must be strictly increasing")
    fine = CosineBasis(lengths, m_list[-1])
    axes = fine.axes_f
    w = fine.w_f
    finals = []
    for m in m_list:
        B = CosineBasis(lengths, m)
        init = GalerkinState(t=0.0, lam=project(phi0, B),
                             theta=np.zeros(m), zeta=project(q0, B))
        run = integrate_galerkin(init, B, M, t_end, rtol=rtol,
                                 quad_check=quad_check)
        last = run.states[-1]
        finals.append(B.evaluate(last.lam, axes))
    diffs = np.array([
        float(np.sqrt(w * ((fb - fa) ** 2).sum()))
        for fa, fb in zip(finals, finals[1:])
    ])
    monotone = bool(np.all(np.diff(diffs) <= 0)) if len(diffs) > 1 else True
    return {"m": m_list, "diffs": diffs, "monotone": monotone}

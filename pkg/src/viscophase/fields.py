"""Discrete fields on uniform rectangular grids and compatible operators.

Cell-centered collocated layout.  Gradient and divergence are central
differences whose ghost values come from wraparound (periodic) or cell-
center reflection (neumann-noslip: even reflection for scalars, odd for
fluxes and velocities).  The Laplacian is the literal composition
divergence(gradient(.)), so summation by parts holds exactly on periodic
grids and integrate(laplacian(f)) vanishes on both boundary kinds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import GridMismatchError, SolverError

__all__ = [
    "Grid",
    "ScalarField",
    "VectorField",
    "gradient",
    "divergence",
    "laplacian",
    "integrate",
    "l2_norm",
    "project_divergence_free",
    "solve_poisson",
]

_BCS = ("periodic", "neumann-noslip")


@dataclass(frozen=True)
class Grid:
    shape: Tuple[int, ...]           # cells per axis
    lengths: Tuple[float, ...]       # domain extent per axis
    bc: str = "periodic"

    def __post_init__(self):
        if self.bc not in _BCS:
            raise ValueError(f"bc must be one of {_BCS}")
        if not 1 <= len(self.shape) <= 3 or len(self.shape) != len(self.lengths):
            raise ValueError("grid needs 1-3 axes with matching lengths")
        if any(n < 4 for n in self.shape):
            raise ValueError("need at least 4 cells per axis")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def h(self) -> Tuple[float, ...]:
        return tuple(L / n for L, n in zip(self.lengths, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    def axes(self):
        """Cell-center coordinates per axis."""
        return [ (np.arange(n) + 0.5) * h for n, h in zip(self.shape, self.h) ]

    def meshgrid(self):
        return np.meshgrid(*self.axes(), indexing="ij")


def _same_grid(a, b):
    if a.grid != b.grid:
        raise GridMismatchError("fields live on different grids")


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        if self.data.shape != self.grid.shape:
            raise ValueError("data shape does not match grid")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "ScalarField":
        return cls(grid, np.asarray(fn(*grid.meshgrid()), dtype=float))

    @classmethod
    def full(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.data.copy())

    def __add__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.data + other.data)
        return ScalarField(self.grid, self.data + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.data - other.data)
        return ScalarField(self.grid, self.data - other)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return ScalarField(self.grid, self.data * other.data)
        return ScalarField(self.grid, self.data * other)

    __rmul__ = __mul__


@dataclass(frozen=True)
class VectorField:
    grid: Grid
    data: np.ndarray                 # shape (d,) + grid.shape

    def __post_init__(self):
        if self.data.shape != (self.grid.d,) + self.grid.shape:
            raise ValueError("data shape does not match grid")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((grid.d,) + grid.shape))

    def component(self, a: int) -> ScalarField:
        return ScalarField(self.grid, self.data[a])

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.data.copy())

    def __add__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.data + other.data)

    def __sub__(self, other):
        _same_grid(self, other)
        return VectorField(self.grid, self.data - other.data)

    def __mul__(self, other):
        if isinstance(other, ScalarField):
            _same_grid(self, other)
            return VectorField(self.grid, self.data * other.data[None])
        return VectorField(self.grid, self.data * other)

    __rmul__ = __mul__


def _nbr(f: np.ndarray, axis: int, step: int, bc: str, parity: int) -> np.ndarray:
    """Values of f at index i+step along axis, ghost cells by bc."""
    if bc == "periodic":
        return np.roll(f, -step, axis=axis)
    n = f.shape[axis]
    sl = [slice(None)] * f.ndim
    if step == 1:
        sl[axis] = slice(1, None)
        core = f[tuple(sl)]
        sl[axis] = slice(n - 1, n)
        edge = parity * f[tuple(sl)]
        return np.concatenate([core, edge], axis=axis)
    sl[axis] = slice(0, n - 1)
    core = f[tuple(sl)]
    sl[axis] = slice(0, 1)
    edge = parity * f[tuple(sl)]
    return np.concatenate([edge, core], axis=axis)


def _ddx(f: np.ndarray, grid: Grid, axis: int, parity: int) -> np.ndarray:
    h = grid.h[axis]
    return (_nbr(f, axis, 1, grid.bc, parity) - _nbr(f, axis, -1, grid.bc, parity)) / (2.0 * h)


def grad_arr(f: np.ndarray, grid: Grid, parity: int = 1) -> np.ndarray:
    return np.stack([_ddx(f, grid, a, parity) for a in range(grid.d)])


def div_arr(v: np.ndarray, grid: Grid, parity: int = -1) -> np.ndarray:
    out = np.zeros(grid.shape)
    for a in range(grid.d):
        out += _ddx(v[a], grid, a, parity)
    return out


def gradient(f: ScalarField) -> VectorField:
    """Central-difference gradient with even (Neumann) reflection."""
    return VectorField(f.grid, grad_arr(f.data, f.grid, parity=1))


def divergence(v: VectorField) -> ScalarField:
    """Adjoint-compatible central-difference divergence (odd reflection)."""
    return ScalarField(v.grid, div_arr(v.data, v.grid, parity=-1))


def laplacian(f: ScalarField) -> ScalarField:
    return divergence(gradient(f))


def lap_arr(f: np.ndarray, grid: Grid) -> np.ndarray:
    return div_arr(grad_arr(f, grid, parity=1), grid, parity=-1)


def integrate(f: ScalarField) -> float:
    """Midpoint rule."""
    return float(f.data.sum() * f.grid.cell_volume)


def l2_norm(f) -> float:
    return float(np.sqrt((f.data**2).sum() * f.grid.cell_volume))


# ---------------------------------------------------------------------------
# spectral symbols and linear solvers

def lap_symbol(grid: Grid) -> np.ndarray:
    """Fourier symbol of the compatible (wide-stencil) Laplacian, laid out
    for rfftn.  Only meaningful on periodic grids."""
    parts = []
    for a, (n, h) in enumerate(zip(grid.shape, grid.h)):
        if a == grid.d - 1:
            k = np.arange(n // 2 + 1)
        else:
            k = np.fft.fftfreq(n) * n
        theta = 2.0 * np.pi * k / n
        s = -((np.sin(theta) / h) ** 2)
        shp = [1] * grid.d
        shp[a] = len(k)
        parts.append(s.reshape(shp))
    out = parts[0]
    for p in parts[1:]:
        out = out + p
    return out


def solve_symbol(b: np.ndarray, grid: Grid, symbol_fn: Callable) -> np.ndarray:
    """Apply the inverse of a constant-coefficient operator in Fourier
    space.  symbol_fn maps the Laplacian symbol to the operator symbol;
    modes where the operator symbol vanishes are dropped."""
    s = symbol_fn(lap_symbol(grid))
    bh = np.fft.rfftn(b)
    with np.errstate(divide="ignore", invalid="ignore"):
        xh = np.where(np.abs(s) > 1e-14, bh / np.where(s == 0, 1.0, s), 0.0)
    return np.fft.irfftn(xh, s=grid.shape, axes=tuple(range(len(grid.shape))))


def cg(apply_op: Callable, b: np.ndarray, tol: float = 1e-10,
       maxiter: int = 10000, project: Optional[Callable] = None,
       x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix-free conjugate gradients on shaped arrays.  ``project``
    removes a known null-space component from iterates (e.g. the mean)."""
    x = np.zeros_like(b) if x0 is None else x0.copy()
    if project is not None:
        b = project(b)
        x = project(x)
    r = b - apply_op(x)
    if project is not None:
        r = project(r)
    bnorm = np.sqrt((b * b).sum())
    if bnorm == 0.0:
        return np.zeros_like(b)
    p = r.copy()
    rs = (r * r).sum()
    for _ in range(maxiter):
        if np.sqrt(rs) <= tol * bnorm:
            return x
        Ap = apply_op(p)
        if project is not None:
            Ap = project(Ap)
        alpha = rs / (p * Ap).sum()
        x += alpha * p
        r -= alpha * Ap
        rs_new = (r * r).sum()
        p = r + (rs_new / rs) * p
        rs = rs_new
    raise SolverError(f"cg failed to reach tol={tol} in {maxiter} iterations "
                      f"(residual {np.sqrt(rs) / bnorm:.3e})")


def bicgstab(apply_op: Callable, b: np.ndarray, tol: float = 1e-10,
             maxiter: int = 10000, x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix-free BiCGStab for the mildly nonsymmetric implicit systems."""
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - apply_op(x)
    bnorm = np.sqrt((b * b).sum())
    if bnorm == 0.0:
        return np.zeros_like(b)
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    for _ in range(maxiter):
        rnorm = np.sqrt((r * r).sum())
        if rnorm <= tol * bnorm:
            return x
        rho_new = (r_hat * r).sum()
        if rho_new == 0.0:
            break
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = apply_op(p)
        alpha = rho / (r_hat * v).sum()
        s = r - alpha * v
        if np.sqrt((s * s).sum()) <= tol * bnorm:
            return x + alpha * p
        t = apply_op(s)
        omega = (t * s).sum() / (t * t).sum()
        x = x + alpha * p + omega * s
        r = s - omega * t
    raise SolverError(f"bicgstab failed to reach tol={tol} in {maxiter} iterations")


def _mean_free(x: np.ndarray) -> np.ndarray:
    return x - x.mean()


def solve_poisson(rhs: ScalarField, tol: float = 1e-10,
                  maxiter: int = 20000) -> ScalarField:
    """Solve laplacian(p) = rhs with mean-zero p.  FFT on periodic grids,
    diagonally scaled conjugate gradients otherwise."""
    grid = rhs.grid
    if grid.bc == "periodic":
        p = solve_symbol(rhs.data, grid, lambda s: s)
        return ScalarField(grid, _mean_free(p))
    # -laplacian is symmetric positive semidefinite; constant diagonal, so
    # diagonal preconditioning is a fixed scaling absorbed into tol.
    p = cg(lambda x: -lap_arr(x, grid), -rhs.data, tol=tol, maxiter=maxiter,
           project=_mean_free)
    return ScalarField(grid, _mean_free(p))


def project_divergence_free(v: VectorField, tol: float = 1e-10):
    """Remove the discrete gradient part of v via a pressure Poisson solve.

    Returns (v - gradient(p), p) with p mean-zero.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rhs = divergence(v)
    p = solve_poisson(rhs, tol=tol)
    u = VectorField(v.grid, v.data - grad_arr(p.data, v.grid, parity=1))
    return u, p

"""Built-in benchmark problems with closed-form solutions.

Each problem bundles the domain mesh factory, the immersed circle with its
flux data, Dirichlet boundary values, and the exact solution used for the
energy-error column. The exact solutions are continuous across the circle
with normal-derivative jump equal to f, and harmonic elsewhere.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .curves import Curve, SegmentedData
from .fem import BilinearFormSpec
from .forcing import DensityForcing
from .mesh import Mesh, lshape_mesh, rect_mesh

PROBLEM_NAMES = ("lshape", "square", "smooth")

DEFAULT_SEGMENTS = 2 ** 14


class RadialLogSolution:
    """u = -ln|x-c| outside the circle of radius R about c, -ln R inside;
    optionally plus the reentrant-corner mode rho^(2/3) sin(2(phi-pi/2)/3)."""

    def __init__(self, center, radius: float, corner_mode: bool = False):
        self.center = np.asarray(center, dtype=np.float64)
        self.radius = float(radius)
        self.corner_mode = corner_mode

    def _log_part(self, pts: np.ndarray) -> np.ndarray:
        d = pts - self.center
        rho = np.sqrt((d * d).sum(-1))
        out = np.where(rho > self.radius,
                       -np.log(np.maximum(rho, 1e-300)),
                       -np.log(self.radius))
        return out

    def _log_grad(self, pts: np.ndarray) -> np.ndarray:
        d = pts - self.center
        rho_sq = (d * d).sum(-1)
        outside = rho_sq > self.radius ** 2
        g = np.zeros_like(d)
        g[outside] = -d[outside] / rho_sq[outside, None]
        return g

    def _corner_part(self, pts: np.ndarray) -> np.ndarray:
        rho = np.sqrt((pts * pts).sum(-1))
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        phi = np.where(phi < 0.5 * np.pi - 1e-14, phi + 2.0 * np.pi, phi)
        return rho ** (2.0 / 3.0) * np.sin((2.0 / 3.0) * (phi - 0.5 * np.pi))

    def _corner_grad(self, pts: np.ndarray) -> np.ndarray:
        rho = np.sqrt((pts * pts).sum(-1))
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        phi = np.where(phi < 0.5 * np.pi - 1e-14, phi + 2.0 * np.pi, phi)
        arg = (2.0 / 3.0) * (phi - 0.5 * np.pi)
        safe = np.maximum(rho, 1e-300)
        dr = (2.0 / 3.0) * safe ** (-1.0 / 3.0) * np.sin(arg)
        dt = (2.0 / 3.0) * safe ** (-1.0 / 3.0) * np.cos(arg)
        cos_p, sin_p = np.cos(phi), np.sin(phi)
        gx = dr * cos_p - dt * sin_p
        gy = dr * sin_p + dt * cos_p
        return np.stack([gx, gy], axis=-1)

    def value(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        out = self._log_part(pts)
        if self.corner_mode:
            out = out + self._corner_part(pts)
        return out

    def gradient(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        out = self._log_grad(pts)
        if self.corner_mode:
            out = out + self._corner_grad(pts)
        return out


class SineProduct:
    """u = sin(pi x) sin(pi y), vanishing on the unit-square boundary."""

    def value(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])

    def gradient(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        sx, sy = np.sin(np.pi * pts[:, 0]), np.sin(np.pi * pts[:, 1])
        cx, cy = np.cos(np.pi * pts[:, 0]), np.cos(np.pi * pts[:, 1])
        return np.pi * np.stack([cx * sy, sx * cy], axis=-1)

    def laplacian_density(self, points) -> np.ndarray:
        return 2.0 * np.pi ** 2 * self.value(points)


@dataclass
class TestProblem:
    name: str
    curve: Curve | None
    f: SegmentedData | None
    boundary_data: Callable | None
    exact: object | None
    form: BilinearFormSpec
    initial_mesh: Callable[[], Mesh]
    density: object | None = None


def lshape_problem(n_segments: int = DEFAULT_SEGMENTS,
                   initial_divisions: int = 4) -> TestProblem:
    """L-shaped domain (-1,1)^2 minus the closed first-quadrant square,
    circle of radius 0.2 about (0.5,-0.5), f = 1/radius."""
    center, radius = (0.5, -0.5), 0.2
    gap = 0.5 - radius
    curve = Curve.circle(center, radius, n_segments, boundary_gap=gap)
    f = SegmentedData.constant(curve, 1.0 / radius)
    exact = RadialLogSolution(center, radius, corner_mode=True)
    return TestProblem(
        name="lshape",
        curve=curve,
        f=f,
        boundary_data=exact.value,
        exact=exact,
        form=BilinearFormSpec.laplace(),
        initial_mesh=lambda: lshape_mesh(initial_divisions),
    )


def square_problem(n_segments: int = DEFAULT_SEGMENTS,
                   initial_divisions: int = 16) -> TestProblem:
    """Unit square, circle of radius 0.2 about (0.3,0.3), f = 1/radius."""
    center, radius = (0.3, 0.3), 0.2
    gap = 0.3 - radius
    curve = Curve.circle(center, radius, n_segments, boundary_gap=gap)
    f = SegmentedData.constant(curve, 1.0 / radius)
    exact = RadialLogSolution(center, radius, corner_mode=False)
    return TestProblem(
        name="square",
        curve=curve,
        f=f,
        boundary_data=exact.value,
        exact=exact,
        form=BilinearFormSpec.laplace(),
        initial_mesh=lambda: rect_mesh(initial_divisions, initial_divisions,
                                       0.0, 0.0, 1.0, 1.0),
    )


def smooth_problem(initial_divisions: int = 8) -> TestProblem:
    """No curve: manufactured smooth load on the unit square."""
    exact = SineProduct()
    return TestProblem(
        name="smooth",
        curve=None,
        f=None,
        boundary_data=None,
        exact=exact,
        form=BilinearFormSpec.laplace(),
        initial_mesh=lambda: rect_mesh(initial_divisions, initial_divisions,
                                       0.0, 0.0, 1.0, 1.0),
        density=DensityForcing(exact.laplacian_density, name="sine_load"),
    )


def make_problem(name: str, n_segments: int = DEFAULT_SEGMENTS,
                 initial_divisions: int | None = None) -> TestProblem:
    if name == "lshape":
        return lshape_problem(n_segments, initial_divisions or 4)
    if name == "square":
        return square_problem(n_segments, initial_divisions or 16)
    if name == "smooth":
        return smooth_problem(initial_divisions or 8)
    raise ValueError(f"unknown problem {name!r}; pick one of {PROBLEM_NAMES}")

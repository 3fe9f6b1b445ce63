"""Analytic level-set surfaces and manufactured surface-PDE benchmarks.

Each surface is the zero set of a signed-distance function phi on a
bounding box.  Benchmarks pair a surface with an exact solution u of the
Laplace-Beltrami equation -lap_G u = f, int_G u = 0; both u and f are
extended off the surface as constants along exact normals, so they can
be evaluated directly at points of the discrete surface.
"""

from __future__ import annotations

import numpy as np

DEFAULT_BOX = (np.array([-2.0, -2.0, -2.0]), np.array([2.0, 2.0, 2.0]))


class SingularPointError(ValueError):
    """Evaluation requested on the singular set of the level-set gradient."""


def _as_points(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _ret(v, squeeze):
    return v[0] if squeeze else v


class Torus:
    """Signed distance to a torus of major radius R, minor radius r.

    phi(x) = sqrt(x3^2 + (sqrt(x1^2 + x2^2) - R)^2) - r.  The gradient
    and closest point are singular on the x3-axis and on the core circle
    of the tube; both sit far from the zero set for r < R.
    """

    def __init__(self, R: float = 1.0, r: float = 0.6, box=DEFAULT_BOX):
        if not 0.0 < r < R:
            raise ValueError("torus requires 0 < r < R")
        self.R = float(R)
        self.r = float(r)
        self.box = (np.asarray(box[0], float), np.asarray(box[1], float))

    def _rho_q(self, x):
        rho = np.hypot(x[:, 0], x[:, 1])
        q = np.hypot(x[:, 2], rho - self.R)
        return rho, q

    def phi(self, x):
        x, sq = _as_points(x)
        rho, q = self._rho_q(x)
        return _ret(q - self.r, sq)

    def grad_phi(self, x):
        x, sq = _as_points(x)
        rho, q = self._rho_q(x)
        if np.any(rho <= 1e-12) or np.any(q <= 1e-12):
            raise SingularPointError("gradient undefined on the torus axis or core circle")
        s = (rho - self.R) / (q * rho)
        g = np.stack([s * x[:, 0], s * x[:, 1], x[:, 2] / q], axis=-1)
        return _ret(g, sq)

    def closest_point(self, x):
        x, sq = _as_points(x)
        rho, q = self._rho_q(x)
        if np.any(rho <= 1e-12) or np.any(q <= 1e-12):
            raise SingularPointError("closest point undefined on the torus axis or core circle")
        cx = self.R * x[:, 0] / rho
        cy = self.R * x[:, 1] / rho
        t = self.r / q
        p = np.stack(
            [cx + t * (x[:, 0] - cx), cy + t * (x[:, 1] - cy), t * x[:, 2]], axis=-1
        )
        return _ret(p, sq)

    def angles(self, x):
        """Toroidal angles (phi_ang, theta); constant along exact normals."""
        x, sq = _as_points(x)
        rho = np.hypot(x[:, 0], x[:, 1])
        phi_ang = np.arctan2(x[:, 1], x[:, 0])
        theta = np.arctan2(x[:, 2], rho - self.R)
        return _ret(phi_ang, sq), _ret(theta, sq)

    def area(self) -> float:
        return 4.0 * np.pi**2 * self.R * self.r


class Sphere:
    """Signed distance to the origin-centered sphere of given radius."""

    def __init__(self, radius: float = 1.0, box=DEFAULT_BOX):
        if radius <= 0.0:
            raise ValueError("radius must be positive")
        self.radius = float(radius)
        self.box = (np.asarray(box[0], float), np.asarray(box[1], float))

    def phi(self, x):
        x, sq = _as_points(x)
        return _ret(np.linalg.norm(x, axis=-1) - self.radius, sq)

    def grad_phi(self, x):
        x, sq = _as_points(x)
        n = np.linalg.norm(x, axis=-1)
        if np.any(n <= 1e-12):
            raise SingularPointError("gradient undefined at the sphere center")
        return _ret(x / n[:, None], sq)

    def closest_point(self, x):
        x, sq = _as_points(x)
        n = np.linalg.norm(x, axis=-1)
        if np.any(n <= 1e-12):
            raise SingularPointError("closest point undefined at the sphere center")
        return _ret(self.radius * x / n[:, None], sq)

    def area(self) -> float:
        return 4.0 * np.pi * self.radius**2


class Plane:
    """Signed distance to the plane normal.x = offset, with unit normal."""

    def __init__(self, normal=(0.0, 0.0, 1.0), offset: float = 0.0, box=DEFAULT_BOX):
        n = np.asarray(normal, dtype=np.float64)
        nn = np.linalg.norm(n)
        if nn == 0.0:
            raise ValueError("normal must be nonzero")
        self.normal = n / nn
        self.offset = float(offset)
        self.box = (np.asarray(box[0], float), np.asarray(box[1], float))

    def phi(self, x):
        x, sq = _as_points(x)
        return _ret(x @ self.normal - self.offset, sq)

    def grad_phi(self, x):
        x, sq = _as_points(x)
        return _ret(np.broadcast_to(self.normal, x.shape).copy(), sq)

    def closest_point(self, x):
        x, sq = _as_points(x)
        d = x @ self.normal - self.offset
        return _ret(x - d[:, None] * self.normal, sq)


class TorusBenchmark:
    """Oscillatory benchmark on the torus.

    In toroidal angles, u = sin(3*phi_ang) * cos(3*theta + phi_ang); the
    right-hand side is -lap_G u written through the metric of the tube,
    with rt = R + r*cos(theta):

        lap_G u = u_pp / rt^2 + u_tt / r^2 - sin(theta) * u_t / (r * rt)
    """

    name = "torus"

    def __init__(self, R: float = 1.0, r: float = 0.6, box=DEFAULT_BOX):
        self.levelset = Torus(R, r, box)

    def _parts(self, x):
        x, sq = _as_points(x)
        ls = self.levelset
        rho = np.hypot(x[:, 0], x[:, 1])
        pa = np.arctan2(x[:, 1], x[:, 0])
        th = np.arctan2(x[:, 2], rho - ls.R)
        return x, sq, rho, pa, th

    def exact_solution(self, x):
        x, sq, _, pa, th = self._parts(x)
        return _ret(np.sin(3.0 * pa) * np.cos(3.0 * th + pa), sq)

    def exact_solution_gradient(self, x):
        """Gradient of the normal extension of u, analytic chain rule."""
        x, sq, rho, pa, th = self._parts(x)
        ls = self.levelset
        if np.any(rho <= 1e-12):
            raise SingularPointError("extension gradient undefined on the torus axis")
        s3, c3 = np.sin(3.0 * pa), np.cos(3.0 * pa)
        sm, cm = np.sin(3.0 * th + pa), np.cos(3.0 * th + pa)
        u_p = 3.0 * c3 * cm - s3 * sm
        u_t = -3.0 * s3 * sm
        q2 = x[:, 2] ** 2 + (rho - ls.R) ** 2
        if np.any(q2 <= 1e-24):
            raise SingularPointError("extension gradient undefined on the core circle")
        grad_pa = np.stack([-x[:, 1], x[:, 0], np.zeros(len(x))], axis=-1) / rho[:, None] ** 2
        grad_th = (
            np.stack(
                [-x[:, 2] * x[:, 0] / rho, -x[:, 2] * x[:, 1] / rho, rho - ls.R], axis=-1
            )
            / q2[:, None]
        )
        return _ret(u_p[:, None] * grad_pa + u_t[:, None] * grad_th, sq)

    def rhs(self, x):
        x, sq, _, pa, th = self._parts(x)
        ls = self.levelset
        s3, c3 = np.sin(3.0 * pa), np.cos(3.0 * pa)
        sm, cm = np.sin(3.0 * th + pa), np.cos(3.0 * th + pa)
        u_pp = -10.0 * s3 * cm - 6.0 * c3 * sm
        u_t = -3.0 * s3 * sm
        u_tt = -9.0 * s3 * cm
        rt = ls.R + ls.r * np.cos(th)
        lap = u_pp / rt**2 + u_tt / ls.r**2 - np.sin(th) * u_t / (ls.r * rt)
        return _ret(-lap, sq)

    def solution_l2_norm(self) -> float:
        """||u||_{L2} over the exact surface, closed form."""
        ls = self.levelset
        return float(np.sqrt(np.pi**2 * ls.R * ls.r))


class SphereBenchmark:
    """Cubic harmonic benchmark on the unit-radius sphere: u = x1 x2 x3."""

    name = "sphere"

    def __init__(self, radius: float = 1.0, box=DEFAULT_BOX):
        self.levelset = Sphere(radius, box)

    def exact_solution(self, x):
        x, sq = _as_points(x)
        n = np.linalg.norm(x, axis=-1)
        return _ret(x[:, 0] * x[:, 1] * x[:, 2] / n**3, sq)

    def exact_solution_gradient(self, x):
        x, sq = _as_points(x)
        n = np.linalg.norm(x, axis=-1)
        xyz = x[:, 0] * x[:, 1] * x[:, 2]
        g = np.stack(
            [x[:, 1] * x[:, 2], x[:, 0] * x[:, 2], x[:, 0] * x[:, 1]], axis=-1
        ) / n[:, None] ** 3 - 3.0 * xyz[:, None] * x / n[:, None] ** 5
        return _ret(g, sq)

    def rhs(self, x):
        # Degree-3 spherical harmonic: -lap_G u = 12 u on the unit sphere,
        # scaled by 1/radius^2 in general.
        x, sq = _as_points(x)
        n = np.linalg.norm(x, axis=-1)
        u = x[:, 0] * x[:, 1] * x[:, 2] / n**3
        return _ret(12.0 * u / self.levelset.radius**2, sq)


class ZeroBenchmark:
    """u = 0, f = 0 on an arbitrary level-set surface (pipeline shakedown)."""

    def __init__(self, levelset, name: str = "zero"):
        self.levelset = levelset
        self.name = name

    def exact_solution(self, x):
        x, sq = _as_points(x)
        return _ret(np.zeros(len(x)), sq)

    def exact_solution_gradient(self, x):
        x, sq = _as_points(x)
        return _ret(np.zeros((len(x), 3)), sq)

    def rhs(self, x):
        x, sq = _as_points(x)
        return _ret(np.zeros(len(x)), sq)


def shifted_plane(eps: float, n: int, box=DEFAULT_BOX) -> Plane:
    """Plane x3 = eps*h sitting a fraction eps above a lattice plane of an n^3 mesh."""
    lo, hi = np.asarray(box[0], float), np.asarray(box[1], float)
    h = (hi[2] - lo[2]) / n
    if not 0.0 < eps < 1.0:
        raise ValueError("shift fraction must lie strictly inside (0, 1)")
    base = lo[2] + (n // 2) * h
    return Plane((0.0, 0.0, 1.0), base + eps * h, box)


def make_benchmark(name: str, **kw):
    """Benchmark registry used by the study harness and the CLI."""
    if name == "torus":
        return TorusBenchmark(**kw)
    if name == "sphere":
        return SphereBenchmark(**kw)
    if name == "torus-zero":
        return ZeroBenchmark(Torus(**kw), name="torus-zero")
    if name == "plane":
        return ZeroBenchmark(Plane(), name="plane")
    raise ValueError(f"unknown benchmark {name!r}")

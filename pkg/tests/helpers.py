"""Shared fixtures-by-function and independent oracles for the test suite.

Everything here is deliberately implemented from first principles (brute
force, finite differences, closed forms) so that library results can be
checked against code that shares none of the library's shortcuts.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import brentq

from tracefem.levelset import Torus, TorusBenchmark
from tracefem.mapping import build_theta
from tracefem.mesh import ActiveMesh, MeshParams
from tracefem.reference import interpolate

_CASE_CACHE: dict = {}


def torus_mesh(n: int, k: int):
    """Cached (levelset, mesh) for the default torus; no mapping built."""
    key = ("torus-mesh", n, k)
    if key not in _CASE_CACHE:
        ls = Torus()
        _CASE_CACHE[key] = (ls, ActiveMesh.build(MeshParams(n), ls, k))
    return _CASE_CACHE[key]


def torus_case(n: int, k: int):
    """Cached (levelset, mesh, dls, mapping) for the default torus."""
    key = ("torus", n, k)
    if key not in _CASE_CACHE:
        ls, mesh = torus_mesh(n, k)
        dls = interpolate(ls, mesh)
        mapping = build_theta(mesh, dls)
        _CASE_CACHE[key] = (ls, mesh, dls, mapping)
    return _CASE_CACHE[key]


def plane_case(levelset, n: int, k: int):
    """Uncached pipeline for a plane level set."""
    mesh = ActiveMesh.build(MeshParams(n), levelset, k)
    dls = interpolate(levelset, mesh)
    mapping = build_theta(mesh, dls)
    return mesh, dls, mapping


def torus_point(phi_ang, theta, R=1.0, r=0.6):
    """Surface point of the torus at the given angles."""
    phi_ang = np.asarray(phi_ang, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    rt = R + r * np.cos(theta)
    return np.stack(
        [rt * np.cos(phi_ang), rt * np.sin(phi_ang), r * np.sin(theta)], axis=-1
    )


def torus_u(phi_ang, theta):
    return np.sin(3.0 * phi_ang) * np.cos(3.0 * theta + phi_ang)


def _fd2(f, x, step):
    """Central second difference with one Richardson sweep."""

    def d2(s):
        return (f(x + s) - 2.0 * f(x) + f(x - s)) / s**2

    return (4.0 * d2(step) - d2(2.0 * step)) / 3.0


def _fd1(f, x, step):
    """Central first difference with one Richardson sweep."""

    def d1(s):
        return (f(x + s) - f(x - s)) / (2.0 * s)

    return (4.0 * d1(step) - d1(2.0 * step)) / 3.0


def fd_laplace_beltrami_torus(phi_ang, theta, R=1.0, r=0.6, step=1e-3):
    """Central-difference surface Laplacian of torus_u in the angle chart."""
    u_pp = _fd2(lambda p: torus_u(p, theta), phi_ang, step)
    u_tt = _fd2(lambda t: torus_u(phi_ang, t), theta, step)
    u_t = _fd1(lambda t: torus_u(phi_ang, t), theta, step)
    rt = R + r * np.cos(theta)
    return u_pp / rt**2 + u_tt / r**2 - np.sin(theta) * u_t / (r * rt)


def sphere_u(theta, phi_ang):
    """x*y*z on the unit sphere in polar coordinates (theta from the z-axis)."""
    st, ct = np.sin(theta), np.cos(theta)
    return st * np.cos(phi_ang) * st * np.sin(phi_ang) * ct


def fd_laplace_beltrami_sphere(theta, phi_ang, step=1e-3):
    """Central-difference Laplace-Beltrami of sphere_u on the unit sphere."""
    u_tt = _fd2(lambda t: sphere_u(t, phi_ang), theta, step)
    u_t = _fd1(lambda t: sphere_u(t, phi_ang), theta, step)
    u_pp = _fd2(lambda p: sphere_u(theta, p), phi_ang, step)
    return u_tt + u_t * np.cos(theta) / np.sin(theta) + u_pp / np.sin(theta) ** 2


def torus_surface_integral(fn, R=1.0, r=0.6, m=512):
    """Periodic trapezoid rule of fn(phi_ang, theta) over the torus."""
    phi_ang = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
    theta = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
    P, T = np.meshgrid(phi_ang, theta, indexing="ij")
    rt = R + r * np.cos(T)
    vals = fn(P, T) * rt * r
    return vals.mean() * (2.0 * np.pi) ** 2


def kuhn_tets_of_cube():
    """Independent Freudenthal subdivision: vertex paths along axis permutations."""
    tets = []
    for p in itertools.permutations(range(3)):
        v = np.zeros((4, 3), dtype=np.int64)
        v[1][p[0]] = 1
        v[2][p[0]] = 1
        v[2][p[1]] = 1
        v[3] = 1
        tets.append(v)
    return tets


def brute_force_active(params: MeshParams, grid: np.ndarray):
    """Mixed-sign tets over the full grid, as a set of vertex-tuple frozensets."""
    n = params.n
    v = np.array(grid, dtype=np.float64)
    v[v == 0.0] = 1e-14 * params.h
    tets = kuhn_tets_of_cube()
    active = set()
    for i in range(n):
        for j in range(n):
            for kz in range(n):
                base = np.array([i, j, kz], dtype=np.int64)
                for t in tets:
                    verts = base + t
                    vals = v[verts[:, 0], verts[:, 1], verts[:, 2]]
                    if vals.min() < 0.0 and vals.max() > 0.0:
                        active.add(frozenset(map(tuple, verts)))
    return active


def mesh_active_sets(mesh: ActiveMesh):
    """Library active elements in the same vertex-set encoding."""
    return {frozenset(map(tuple, verts)) for verts in mesh.verts_lattice.tolist()}


def clip_polygon_oracle(vphi, verts):
    """Zero-level polygon of the linear interpolant on one tet.

    Walks all six edges, collects sign-change intersection points, and
    orders them around their centroid inside the cut plane.  Returns the
    ordered (m, 3) polygon vertices (m in {3, 4}).
    """
    vphi = np.asarray(vphi, dtype=np.float64)
    verts = np.asarray(verts, dtype=np.float64)
    pts = []
    for a, b in itertools.combinations(range(4), 2):
        va, vb = vphi[a], vphi[b]
        if va * vb < 0.0:
            t = va / (va - vb)
            pts.append((1.0 - t) * verts[a] + t * verts[b])
    pts = np.array(pts)
    if len(pts) <= 3:
        return pts
    cen = pts.mean(axis=0)
    normal = np.cross(pts[1] - pts[0], pts[2] - pts[0])
    normal /= np.linalg.norm(normal)
    b1 = pts[0] - cen
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(normal, b1)
    ang = np.arctan2((pts - cen) @ b2, (pts - cen) @ b1)
    return pts[np.argsort(ang)]


def polygon_area(poly):
    """Area of a planar convex polygon given ordered 3D vertices."""
    if len(poly) < 3:
        return 0.0
    cen = poly.mean(axis=0)
    area = 0.0
    m = len(poly)
    for i in range(m):
        area += 0.5 * np.linalg.norm(
            np.cross(poly[i] - cen, poly[(i + 1) % m] - cen)
        )
    return area


def polygon_integral_linear(poly, coef, const=0.0):
    """Exact integral of coef.x + const over a planar polygon (vertex fan,
    midpoint rule per triangle, exact for affine integrands)."""
    cen = poly.mean(axis=0)
    total = 0.0
    m = len(poly)
    for i in range(m):
        a, b = poly[i], poly[(i + 1) % m]
        area = 0.5 * np.linalg.norm(np.cross(a - cen, b - cen))
        mids = [(a + b) / 2.0, (b + cen) / 2.0, (cen + a) / 2.0]
        total += area * np.mean([np.dot(coef, mm) + const for mm in mids])
    return total


def plane_box_section_area(normal, offset, lo, hi):
    """Area of the cross-section of the plane n.x = offset with a box."""
    normal = np.asarray(normal, dtype=np.float64)
    normal = normal / np.linalg.norm(normal)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    corners = np.array(list(itertools.product(*zip(lo, hi))))
    edges = [
        (a, b)
        for a, b in itertools.combinations(range(8), 2)
        if np.sum(corners[a] != corners[b]) == 1
    ]
    pts = []
    for a, b in edges:
        fa = corners[a] @ normal - offset
        fb = corners[b] @ normal - offset
        if fa * fb < 0.0:
            t = fa / (fa - fb)
            pts.append((1.0 - t) * corners[a] + t * corners[b])
    pts = np.unique(np.round(np.array(pts), 12), axis=0)
    if len(pts) < 3:
        return 0.0
    cen = pts.mean(axis=0)
    b1 = pts[0] - cen
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(normal, b1)
    ang = np.arctan2((pts - cen) @ b2, (pts - cen) @ b1)
    return polygon_area(pts[np.argsort(ang)])


def smallest_root_bisection(g, delta, samples=4096):
    """Smallest-|d| root of the scalar function g on [-delta, delta]."""
    ts = np.linspace(-delta, delta, samples + 1)
    vals = np.array([g(t) for t in ts])
    roots = []
    for i in range(samples):
        if vals[i] == 0.0:
            roots.append(ts[i])
        elif vals[i] * vals[i + 1] < 0.0:
            roots.append(brentq(g, ts[i], ts[i + 1], xtol=1e-15, rtol=1e-15))
    if vals[-1] == 0.0:
        roots.append(ts[-1])
    if not roots:
        raise ValueError("oracle found no root in the bracket")
    return min(roots, key=abs)


def tri_monomial_integral(a, b):
    """Integral of x^a y^b over the reference triangle {x,y>=0, x+y<=1}."""
    from math import factorial

    return factorial(a) * factorial(b) / factorial(a + b + 2)


def tet_monomial_integral(a, b, c):
    """Integral of x^a y^b z^c over the reference tetrahedron."""
    from math import factorial

    return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)


def benchmark_interpolant(mesh, problem) -> np.ndarray:
    """Nodal values of the exact (extended) solution on the active dofs."""
    return np.asarray(problem.exact_solution(mesh.dof_points), dtype=np.float64)


def torus_benchmark() -> TorusBenchmark:
    return TorusBenchmark()

"""Legacy-VTK text export of meshes, interfaces and lifted points."""

from __future__ import annotations

import os

import numpy as np

from .cutquad import extract_cuts


def _write_points(fh, points):
    fh.write(f"POINTS {len(points)} double\n")
    for p in points:
        fh.write(f"{p[0]:.16g} {p[1]:.16g} {p[2]:.16g}\n")


def write_unstructured_tets(path, points, tets, scalars=None, scalar_name="phi"):
    """Tetrahedral mesh as an ASCII legacy UNSTRUCTURED_GRID file."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\ntracefem mesh\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        _write_points(fh, points)
        fh.write(f"CELLS {len(tets)} {5 * len(tets)}\n")
        for t in tets:
            fh.write(f"4 {t[0]} {t[1]} {t[2]} {t[3]}\n")
        fh.write(f"CELL_TYPES {len(tets)}\n")
        fh.write("\n".join(["10"] * len(tets)) + "\n")
        if scalars is not None:
            fh.write(f"POINT_DATA {len(points)}\n")
            fh.write(f"SCALARS {scalar_name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(f"{v:.16g}" for v in scalars) + "\n")


def write_triangles(path, points, tris):
    """Triangle soup as an ASCII legacy POLYDATA file."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\ntracefem interface\nASCII\n")
        fh.write("DATASET POLYDATA\n")
        _write_points(fh, points)
        fh.write(f"POLYGONS {len(tris)} {4 * len(tris)}\n")
        for t in tris:
            fh.write(f"3 {t[0]} {t[1]} {t[2]}\n")


def write_point_cloud(path, points):
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\ntracefem points\nASCII\n")
        fh.write("DATASET POLYDATA\n")
        _write_points(fh, points)
        fh.write(f"VERTICES {len(points)} {2 * len(points)}\n")
        for i in range(len(points)):
            fh.write(f"1 {i}\n")


def _mesh_vertex_arrays(mesh, deformed=None):
    verts = mesh.verts_lattice.reshape(-1, 3)
    keys = (verts[:, 0] * (mesh.params.n + 1) + verts[:, 1]) * (mesh.params.n + 1) + verts[:, 2]
    uniq, inv = np.unique(keys, return_inverse=True)
    pos = np.empty((len(uniq), 3))
    pts = mesh.verts_phys.reshape(-1, 3) if deformed is None else deformed.reshape(-1, 3)
    pos[inv] = pts
    cells = inv.reshape(-1, 4)
    return pos, cells


def export_level(outdir, tag, mesh, dls, mapping):
    """Write the standard bundle for one refinement level."""
    os.makedirs(outdir, exist_ok=True)
    pos, cells = _mesh_vertex_arrays(mesh)
    write_unstructured_tets(os.path.join(outdir, f"active_mesh_{tag}.vtk"), pos, cells)

    tri_elem, tri_bary, _ = extract_cuts(mesh.vertex_phi, mesh.verts_phys)
    pts = np.einsum("tcm,tmi->tci", tri_bary, mesh.verts_phys[tri_elem]).reshape(-1, 3)
    tris = np.arange(len(pts)).reshape(-1, 3)
    write_triangles(os.path.join(outdir, f"interface_lin_{tag}.vtk"), pts, tris)

    if mesh.k > 1:
        # deformed vertices coincide with the originals; export nodal images instead
        corners = mesh.bary_of_points(
            np.repeat(np.arange(mesh.nelems), 4), mesh.verts_phys.reshape(-1, 3)
        )
        y, _ = mapping.eval(np.repeat(np.arange(mesh.nelems), 4), corners)
        pos_d, cells_d = _mesh_vertex_arrays(mesh, deformed=y.reshape(mesh.nelems, 4, 3))
        write_unstructured_tets(
            os.path.join(outdir, f"deformed_mesh_{tag}.vtk"), pos_d, cells_d
        )

    from .assembly import SurfaceData

    surf = SurfaceData.build(mesh, dls, mapping, max(0, 2 * mesh.k - 2))
    write_point_cloud(os.path.join(outdir, f"interface_lifted_{tag}.vtk"), surf.y)

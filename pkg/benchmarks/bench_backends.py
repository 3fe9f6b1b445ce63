"""Timing comparison of the numpy and Cython kernel backends.

Exercises the three hot kernels on representative data taken from a
torus discretization (basis evaluation at quadrature points, the
deformation root solve at the element nodes, and the local-matrix
accumulation used by stiffness assembly), then times one full
convergence level through the pipeline under each backend.

Usage: python benchmarks/bench_backends.py [--n 32] [--k 3] [--repeat 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from tracefem import backends
from tracefem.backends import py as pybackend
from tracefem.levelset import Torus
from tracefem.mesh import ActiveMesh, MeshParams
from tracefem.reference import ReferenceElement, interpolate


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_kernels(n: int, k: int, repeat: int) -> None:
    names = backends.available()
    mods = [backends.get_backend(name) for name in names]

    params = MeshParams(n)
    levelset = Torus()
    mesh = ActiveMesh.build(params, levelset, k)
    dls = interpolate(levelset, mesh)
    ref = ReferenceElement(k)
    nelems, nb = mesh.nelems, ref.ndofs

    lam = np.ascontiguousarray(np.broadcast_to(ref.nodes_bary, (nelems, nb, 4)).reshape(-1, 4))
    elems = np.repeat(np.arange(nelems), nb)
    coeffs = dls.coeffs[elems]
    vals, dlam = pybackend.eval_basis(k, lam)
    search_dir = np.einsum("pbm,pb,pmi->pi", dlam, coeffs, mesh.bary_grad[elems])
    phihat = np.einsum("pm,pm->p", lam, mesh.vertex_phi[elems])
    glam = np.einsum("pmi,pi->pm", mesh.bary_grad[elems], search_dir)
    delta = 0.5 * params.h

    rng = np.random.default_rng(0)
    vec = rng.standard_normal((4096, (k + 1) ** 2, nb, 3))
    wq = rng.standard_normal((4096, (k + 1) ** 2))

    print(f"mesh: n={n}, k={k}, {nelems} active elements, {len(lam)} root solves")
    header = f"{'kernel':<18}" + "".join(f"{name:>12}" for name in names)
    if len(mods) == 2:
        header += f"{'speedup':>10}"
    print(header)

    cases = [
        ("eval_basis", lambda m: m.eval_basis(k, lam)),
        ("solve_dh", lambda m: m.solve_dh(k, coeffs, lam, glam, phihat, delta)),
        ("accumulate_sym", lambda m: m.accumulate_sym(vec, wq)),
    ]
    for label, call in cases:
        times, outs = [], []
        for mod in mods:
            t, out = _best(lambda mod=mod: call(mod), repeat)
            times.append(t)
            outs.append(out)
        if len(outs) == 2:
            a = outs[0][0] if isinstance(outs[0], tuple) else outs[0]
            b = outs[1][0] if isinstance(outs[1], tuple) else outs[1]
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)
        row = f"{label:<18}" + "".join(f"{t * 1e3:>10.1f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


def bench_pipeline(n: int, k: int) -> None:
    from tracefem.study import StudyConfig, run_convergence

    print(f"\nfull level pipeline (torus, n={n}, k={k}, normal_volume rho=1/h):")
    for name in backends.available():
        cfg = StudyConfig(
            benchmark="torus", k=k, levels=1, base_n=n, stab="normal_volume",
            rho="h_inv", backend=name,
        )
        t0 = time.perf_counter()
        _, reports = run_convergence(cfg)
        elapsed = time.perf_counter() - t0
        r = reports[0]
        print(f"  {name:<8} {elapsed:6.2f}s  e_l2={r['e_l2']:.6e}  n_its={r['n_its']}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32, help="background resolution")
    ap.add_argument("--k", type=int, default=3, help="polynomial degree")
    ap.add_argument("--repeat", type=int, default=5, help="timing repetitions")
    args = ap.parse_args()
    if not backends.HAVE_CYTHON:
        print("note: compiled core not available, timing the numpy backend only")
    bench_kernels(args.n, args.k, args.repeat)
    bench_pipeline(args.n, min(args.k, 2))


if __name__ == "__main__":
    main()

import math

import numpy as np
import pytest

from nlifem.geometry import (GeometryError, build_dof_map, build_mesh, build_regions, eval_basis,
                             lagrange_basis)
from nlifem.kernels import make_kernel
from nlifem.operators import get_example


def kernels(*deltas, kind="constant"):
    return [make_kernel(kind, delta=d) for d in deltas]


def test_ex1_zones(ex1_regions):
    al = math.pi / 6
    z = ex1_regions.zones(0)
    assert z.j_right == pytest.approx((al - 0.5, al))
    assert z.j_left == pytest.approx((al, al + 0.25))
    assert z.gamma == pytest.approx((al - 0.5, al + 0.25))
    assert z.omega_j == pytest.approx((al + 0.25, al + 0.5))
    assert ex1_regions.domain(0) == pytest.approx((-0.25, al))
    assert ex1_regions.domain(1) == pytest.approx((al, 1.5))
    assert ex1_regions.region(0) == pytest.approx((-0.25, al + 0.25))
    assert ex1_regions.collar(1) == pytest.approx((1.0, 1.5))


def test_equal_horizons_have_no_omega_j():
    reg = build_regions(0, 1, [0.45], kernels(0.25, 0.25))
    assert reg.zones(0).omega_j is None


def test_ex3_three_fields():
    reg = get_example("ex3").regions((0.125, 0.25, 0.5))
    assert reg.nfields == 3 and reg.collar(1) is None and reg.collars(1) == []
    assert reg.lo == pytest.approx(-0.125) and reg.hi == pytest.approx(2.5)


@pytest.mark.parametrize("interfaces,deltas", [
    ([0.9], (0.25, 0.5)),          # left reach of the first field would exit
    ([0.5], (0.5, 0.25)),          # horizons must not decrease across an interface
    ([0.3], (0.25, 0.5)),          # Gamma reaches the left collar
    ([0.6, 0.4], (0.1, 0.1, 0.1)),  # interfaces out of order
    ([0.5], (0.25,)),              # kernel count
])
def test_invalid_regions(interfaces, deltas):
    with pytest.raises(GeometryError):
        build_regions(0.0, 1.0, interfaces, kernels(*deltas))


def test_alpha_near_right_end_rejected():
    with pytest.raises(GeometryError):
        build_regions(0.0, 1.0, [0.9], kernels(0.125, 0.5))


def test_mesh_element_count(ex1_regions):
    mesh = build_mesh(ex1_regions, 0.25)
    assert mesh.nelem == 7
    assert mesh.nodes[0] == -0.25 and mesh.nodes[-1] == 1.5
    assert list(mesh.cut.items()) == [(3, 0)]
    assert "cut" in mesh.tags[3] and "TG0" in mesh.tags[1]


def test_mesh_commensurability(ex1_regions):
    with pytest.raises(GeometryError, match="integer multiple"):
        build_mesh(ex1_regions, 0.3)
    with pytest.raises(GeometryError):
        build_mesh(ex1_regions, 0.0)


def test_alpha_on_node_rejected():
    reg = build_regions(0.0, 1.0, [0.5], kernels(0.25, 0.25))
    with pytest.raises(GeometryError, match="grid node"):
        build_mesh(reg, 0.125)


def test_lagrange_partition_and_nodality():
    xi = np.linspace(0, 1, 13)
    for k in (1, 2, 3, 4):
        b = lagrange_basis(k, xi)
        assert np.allclose(b.sum(axis=-1), 1.0)
        assert np.allclose(lagrange_basis(k, np.linspace(0, 1, k + 1)), np.eye(k + 1))


@pytest.mark.parametrize("k", [1, 2, 3])
def test_partition_of_unity_per_field(ex1_regions, k, rng):
    dm = build_dof_map(build_mesh(ex1_regions, 0.125), k)
    for i in range(dm.nfields):
        lo, hi = ex1_regions.region(i)
        x = rng.uniform(lo, hi, 40)
        assert np.allclose(dm.evaluate(i, np.ones(dm.ndofs), x), 1.0, atol=1e-13)
        gids = np.arange(dm.offsets[i], dm.offsets[i + 1])
        total = sum(eval_basis(dm, i, g, x) for g in gids)
        assert np.allclose(total, 1.0, atol=1e-13)


def test_cut_element_has_duplicated_branches(ex1_dofmap):
    mesh = ex1_dofmap.mesh
    (e, _), = mesh.cut.items()
    al = ex1_dofmap.regions.interfaces[0]
    d0, d1 = ex1_dofmap.piece_dofs[(e, 0)], ex1_dofmap.piece_dofs[(e, 1)]
    assert len(set(d0) & set(d1)) == 0
    x0, x1 = ex1_dofmap.composite_x[d0], ex1_dofmap.composite_x[d1]
    # each branch carries its own nodes on its side of alpha, both ending at alpha
    assert x0[0] == mesh.nodes[e] and x0[-1] == pytest.approx(al)
    assert x1[0] == pytest.approx(al) and x1[-1] == mesh.nodes[e + 1]


def test_branches_are_independent(ex1_dofmap):
    # a function equal to 1 on branch 1 of the cut element only jumps across alpha
    mesh, dm = ex1_dofmap.mesh, ex1_dofmap
    (e, _), = mesh.cut.items()
    al = dm.regions.interfaces[0]
    c = np.zeros(dm.ndofs)
    c[dm.piece_gids(0, e, 1)] = 1.0
    assert dm.evaluate(0, c, al - 1e-9) == pytest.approx(0.0, abs=1e-6)
    assert dm.evaluate(0, c, al + 1e-9) == pytest.approx(1.0, abs=1e-6)


def test_dirichlet_and_identification(ex1_dofmap):
    dm = ex1_dofmap
    x0 = [dm.dof_x(g) for g in dm.dirichlet[0]]
    x1 = [dm.dof_x(g) for g in dm.dirichlet[1]]
    assert min(x0) == pytest.approx(-0.25) and max(x0) == pytest.approx(0.0)
    assert min(x1) == pytest.approx(1.0) and max(x1) == pytest.approx(1.5)
    for slave, master, m in dm.identification:
        assert dm.field_of(slave) == 1 and dm.field_of(master) == 0 and m == 0
        assert dm.dof_x(slave) == dm.dof_x(master)
    z = dm.regions.zones(0)
    xs = [dm.dof_x(s) for s, _, _ in dm.identification]
    h = dm.mesh.h
    assert min(xs) >= z.gamma[0] - h - 1e-12 and max(xs) <= z.gamma[1] + h + 1e-12
    dec = build_dof_map(dm.mesh, dm.k, "decoupled")
    assert dec.identification == []


def test_locate_outside_region(ex1_dofmap):
    with pytest.raises(GeometryError):
        ex1_dofmap.locate(0, 1.2)


def test_construction_is_deterministic(ex1_regions):
    a = build_dof_map(build_mesh(ex1_regions, 0.0625), 3)
    b = build_dof_map(build_mesh(ex1_regions, 0.0625), 3)
    assert np.array_equal(a.composite_x, b.composite_x)
    assert a.identification == b.identification
    assert all(np.array_equal(p, q) for p, q in zip(a.dirichlet, b.dirichlet))
    assert np.array_equal(a.offsets, b.offsets)


def test_invalid_dofmap_args(ex1_regions):
    mesh = build_mesh(ex1_regions, 0.25)
    with pytest.raises(GeometryError):
        build_dof_map(mesh, 0)
    with pytest.raises(GeometryError):
        build_dof_map(mesh, 1, "loose")

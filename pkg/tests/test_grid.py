import math

import numpy as np
import pytest

from magnetodecay.errors import ValidationError
from magnetodecay.grid import CELL, DIRICHLET, PERIODIC, Grid, Operators, edge_loc, face_loc

GRIDS = [
    Grid((1.0, 1.3, 0.8), (9, 10, 11)),
    Grid((2.0, 1.0, 1.0), (12, 8, 1), (DIRICHLET, PERIODIC, PERIODIC)),
    Grid((1.0, 2.0, 1.5), (9, 10, 8), (PERIODIC, DIRICHLET, PERIODIC)),
]
IDS = ["dirichlet", "reduced", "mixed"]


def _faces(grid, rng):
    return tuple(rng.normal(size=grid.shape(face_loc(c))) for c in range(3))


def _edges(grid, rng):
    return tuple(rng.normal(size=grid.shape(edge_loc(c))) for c in range(3))


def _nodes(grid, rng, ops):
    return ops.mask_nodes(rng.normal(size=(3, *grid.n)))


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# -- construction -------------------------------------------------------------


def test_grid_validation():
    with pytest.raises(ValidationError):
        Grid((1.0, 1.0, 1.0), (4, 8, 8))
    with pytest.raises(ValidationError):
        Grid((1.0, 1.0, 1.0), (8, 8, 8), (PERIODIC,) * 3)
    with pytest.raises(ValidationError):
        Grid((1.0, -1.0, 1.0), (8, 8, 8))
    with pytest.raises(ValidationError):
        Grid((1.0, 1.0, 1.0), (8, 8, 1))  # n = 1 only on a periodic axis
    g = Grid((1.0, 1.0, 1.0), (8, 8, 1), (DIRICHLET, DIRICHLET, PERIODIC))
    assert g.active_axes == (0, 1)


def test_refined_halves_spacing():
    for g in GRIDS:
        r = g.refined()
        for a in g.active_axes:
            assert r.h[a] == pytest.approx(g.h[a] / 2)
        assert Grid.from_dict(r.to_dict()) == r


# -- adjoint pairs --------------------------------------------------------------


@pytest.mark.parametrize("grid", GRIDS, ids=IDS)
def test_adjoint_pairs(grid, rng):
    ops = Operators(grid)
    h, e, v = _faces(grid, rng), _edges(grid, rng), _nodes(grid, rng, ops)
    q = rng.normal(size=grid.shape(CELL))
    B = (0.3, -1.1, 0.7)
    assert _rel(ops.dot(ops.curl(h), e), ops.dot(h, ops.curl_T(e))) <= 1e-12
    assert _rel(ops.dot(ops.couple(v, B), e), ops.dot(v, ops.couple_T(e, B))) <= 1e-12
    assert _rel(ops.dot(ops.div_cell(v), q), ops.dot(v, ops.div_cell_T(q))) <= 1e-12
    assert _rel(ops.dot(ops.div_faces(h), q), ops.dot(h, ops.div_faces_T(q))) <= 1e-12


@pytest.mark.parametrize("grid", GRIDS, ids=IDS)
def test_elastic_form_symmetric_positive(grid, rng):
    ops = Operators(grid)
    u, v = _nodes(grid, rng, ops), _nodes(grid, rng, ops)
    lam, mu = 0.5, 0.25
    assert _rel(ops.dot(ops.elastic(u, lam, mu), v), ops.dot(u, ops.elastic(v, lam, mu))) <= 1e-12
    quad = ops.dot(u, ops.elastic(u, lam, mu))
    assert quad > 0
    assert _rel(0.5 * quad, ops.shear_energy(u, mu) + ops.compressional_energy(u, lam, mu)) <= 1e-12
    assert quad <= ops.spectral_radius_bound(lam, mu) * ops.norm2(u) * (1 + 1e-12)


# -- exact sequence identities -------------------------------------------------


@pytest.mark.parametrize("grid", GRIDS, ids=IDS)
def test_div_curl_and_curl_grad_vanish(grid, rng):
    ops = Operators(grid)
    e = _edges(grid, rng)
    q = rng.normal(size=grid.shape(CELL))
    h = ops.curl_T(e)
    assert np.max(np.abs(ops.div_faces(h))) <= 1e-12 * max(np.max(np.abs(x)) for x in h) / grid.h_min
    g = ops.div_faces_T(q)
    assert max(np.max(np.abs(x)) for x in ops.curl(g)) <= 1e-12 * max(np.max(np.abs(x)) for x in g) / grid.h_min
    u = ops.div_cell_T(q)
    assert np.max(np.abs(ops.curl_cell(u))) <= 1e-12 * np.max(np.abs(u)) / grid.h_min


# -- symbols ------------------------------------------------------------------


def test_laplacian_symbol_on_modes():
    g = Grid((2.0, 1.5, 1.0), (13, 10, 1), (DIRICHLET, PERIODIC, PERIODIC))
    ops = Operators(g)
    kx, ky = 3, 2
    X, Y, _ = g.mesh()
    f = np.sin(kx * math.pi * X / 2.0) * np.cos(2 * math.pi * ky * Y / 1.5)
    v = np.stack([f, 0 * f, 0 * f])
    hx, hy = g.h[0], g.h[1]
    sym = (2 / hx * math.sin(kx * math.pi / (2 * (g.n[0] - 1)))) ** 2 + (2 / hy * math.sin(math.pi * ky / g.n[1])) ** 2
    # boundary rows of the unmasked operator are not part of the Dirichlet problem
    np.testing.assert_allclose(ops.mask_nodes(ops.neg_laplacian(v)), sym * v, atol=1e-10 * sym)


@pytest.mark.parametrize("grid", GRIDS, ids=IDS)
def test_preconditioner_exact_on_solenoidal_fields(grid, rng):
    ops = Operators(grid)
    h = ops.curl_T(_edges(grid, rng))
    c1 = 0.37
    lhs = tuple(x + c1 * y for x, y in zip(h, ops.curl_T(ops.curl(h))))
    back = ops.face_shifted_inverse(c1)(lhs)
    scale = max(np.max(np.abs(x)) for x in h)
    assert max(np.max(np.abs(a - b)) for a, b in zip(back, h)) <= 1e-10 * scale

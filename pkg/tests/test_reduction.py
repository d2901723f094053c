import numpy as np
import pytest

from rdstab.reduction import (
    CoupledPlant,
    OdePlant,
    assemble,
    decompose_reaction,
    lifting,
    trace_coefficients,
)
from rdstab.spectral import closed_form_basis, gauss_rule

HALF = np.pi / 2


def small_ode():
    return OdePlant(a=[[0.2, 1.0], [0.0, -0.5]], b=[1.0, 2.0], c=[[1.0, -1.0]])


def test_reaction_shift_default_rule():
    q_c, q = decompose_reaction(-3.0)
    assert (q_c, q) == (4.0, 1.0)
    q_c, q = decompose_reaction(2.0)
    assert (q_c, q) == (1.0, 3.0)
    q_c, q = decompose_reaction(lambda x: np.sin(np.pi * x) - 2.0)
    assert q_c == pytest.approx(3.0, abs=1e-6)
    xs = np.linspace(0, 1, 11)
    assert np.min(q(xs)) > 0
    assert decompose_reaction(-3.0, 10.0) == (10.0, 7.0)
    with pytest.raises(ValueError):
        decompose_reaction(-3.0, 2.0)


def test_ode_plant_shapes_and_eigenvalues():
    ode = small_ode()
    assert ode.dim == 2
    assert ode.b.shape == (2, 1)
    assert ode.c.shape == (1, 2)
    assert sorted(ode.eigenvalues().real) == pytest.approx([-0.5, 0.2])
    with pytest.raises(ValueError):
        OdePlant(a=[[1.0, 0.0]], b=[1.0], c=[[1.0]])
    with pytest.raises(ValueError):
        OdePlant(a=[[1.0]], b=[1.0, 2.0], c=[[1.0]])


def test_coupled_plant_validation_and_shift():
    plant = CoupledPlant(
        theta1=HALF, theta2=0.0, p=1.0, q_tilde=-3.0,
        zeta_m=0.25, trace_kind="value", ode=small_ode(),
    )
    assert plant.q_c == 4.0
    assert plant.problem.q_const == 1.0
    with pytest.raises(ValueError):
        CoupledPlant(
            theta1=HALF, theta2=0.0, p=1.0, q_tilde=-3.0,
            zeta_m=1.5, trace_kind="value", ode=small_ode(),
        )
    with pytest.raises(ValueError):
        CoupledPlant(
            theta1=HALF, theta2=0.0, p=1.0, q_tilde=-3.0,
            zeta_m=0.25, trace_kind="flux", ode=small_ode(),
        )


def test_lifting_dirichlet_right_end():
    plant = CoupledPlant(
        theta1=HALF, theta2=0.0, p=1.0, q_tilde=-3.0,
        zeta_m=0.25, trace_kind="value", ode=small_ode(),
    )
    lift = lifting(plant)
    xs = np.linspace(0, 1, 9)
    assert lift.den == 1.0
    assert np.allclose(lift.shape(xs), xs**2)
    assert np.allclose(lift.a(xs), 2 + 3 * xs**2)
    assert np.allclose(lift.b(xs), -(xs**2))
    assert lift.mu_m == pytest.approx(1 / 16)


def test_lifting_neumann_right_end():
    plant = CoupledPlant(
        theta1=0.0, theta2=HALF, p=1.0, q_tilde=-3.0,
        zeta_m=0.25, trace_kind="derivative", ode=small_ode(),
    )
    lift = lifting(plant)
    xs = np.linspace(0, 1, 9)
    assert lift.den == 2.0
    assert np.allclose(lift.shape(xs), xs**2 / 2)
    assert np.allclose(lift.a(xs), (2 + 3 * xs**2) / 2)
    assert lift.mu_m == pytest.approx(0.25)


def test_lifting_variable_diffusion_uses_derivative():
    kwargs = dict(
        theta1=HALF, theta2=0.3, q_tilde=-1.0,
        zeta_m=0.5, trace_kind="value", ode=small_ode(),
    )
    p = lambda x: 1 + 0.5 * x
    numeric = lifting(CoupledPlant(p=p, **kwargs))
    exact = lifting(CoupledPlant(p=p, dp=lambda x: np.full(np.shape(x), 0.5), **kwargs))
    xs = np.linspace(0, 1, 21)
    assert np.allclose(numeric.a(xs), exact.a(xs), atol=1e-7)
    den = np.cos(0.3) + 2 * np.sin(0.3)
    assert np.allclose(exact.a(xs), (2 * p(xs) + xs - (-1) * xs**2) / den)


def test_trace_rows_match_eigenfunction_values():
    plant = CoupledPlant(
        theta1=HALF, theta2=0.0, p=1.0, q_tilde=-3.0,
        zeta_m=0.25, trace_kind="value", ode=small_ode(),
    )
    basis = closed_form_basis(plant.problem, 6)
    row = trace_coefficients(basis, 0.25, "value", 4)
    assert row[0] == pytest.approx(np.sqrt(2) * np.cos(np.pi / 8), rel=1e-14)
    drow = trace_coefficients(basis, 0.25, "derivative", 4)
    assert drow[0] == pytest.approx(-np.sqrt(2) * (np.pi / 2) * np.sin(np.pi / 8), rel=1e-14)
    with pytest.raises(ValueError):
        trace_coefficients(basis, 0.25, "slope", 4)


def dirichlet_plant():
    return CoupledPlant(
        theta1=HALF, theta2=0.0, p=1.0, q_tilde=-3.0,
        zeta_m=0.25, trace_kind="value", ode=small_ode(),
    )


def test_assemble_matches_hand_built_blocks():
    plant = dirichlet_plant()
    basis = closed_form_basis(plant.problem, 3)
    model = assemble(plant, basis, 1)

    lam1 = (np.pi / 2) ** 2 + 1
    # exact projections of a = 2 + 3 xi^2 and b = -xi^2 on sqrt(2) cos(pi xi / 2)
    int_cos = 2 / np.pi
    int_x2cos = 2 / np.pi - 16 / np.pi**3
    a1 = np.sqrt(2) * (2 * int_cos + 3 * int_x2cos)
    b1 = -np.sqrt(2) * int_x2cos
    c1 = np.sqrt(2) * np.cos(np.pi / 8)
    ode = plant.ode
    aem = ode.a + (1 / 16) * (ode.b @ ode.c)
    cb = (ode.c @ ode.b)[0, 0]

    assert model.lam[0] == pytest.approx(lam1, rel=1e-14)
    assert model.lam_next == pytest.approx((3 * np.pi / 2) ** 2 + 1, rel=1e-14)
    assert model.a_coef[0] == pytest.approx(a1, rel=1e-12)
    assert model.b_coef[0] == pytest.approx(b1, rel=1e-12)
    assert model.c_row[0, 0] == pytest.approx(c1, rel=1e-14)
    assert model.cb == pytest.approx(cb)
    assert np.allclose(model.ae, aem)

    f_hand = np.block([
        [np.array([[4.0 - lam1 + b1 * cb * c1]]), a1 * ode.c + b1 * (ode.c @ aem)],
        [ode.b * c1, aem],
    ])
    g_hand = np.vstack([[[b1 * cb]], ode.b])
    tail_a = 9.8 - a1**2
    tail_b = 0.2 - b1**2
    h_hand = np.zeros((3, 3))
    h_hand[0, 0] = tail_b * cb**2 * c1**2
    h_hand[1:, 1:] = tail_a * (ode.c.T @ ode.c) + tail_b * (aem.T @ ode.c.T @ ode.c @ aem)
    assert np.allclose(model.f, f_hand, atol=1e-12)
    assert np.allclose(model.g, g_hand, atol=1e-12)
    assert np.allclose(model.h, h_hand, atol=1e-10)
    assert model.dim == 3


@pytest.mark.parametrize("theta2,scale", [(0.0, 1.0), (HALF, 2.0)])
def test_residual_energies_close_parseval(theta2, scale):
    # ||a||^2 = 9.8 and ||b||^2 = 0.2 for the unscaled lifting profiles
    plant = CoupledPlant(
        theta1=HALF if theta2 == 0.0 else 0.0, theta2=theta2, p=1.0, q_tilde=-3.0,
        zeta_m=0.25, trace_kind="value" if theta2 == 0.0 else "derivative",
        ode=small_ode(),
    )
    basis = closed_form_basis(plant.problem, 13)
    model = assemble(plant, basis, 12)
    assert model.tail_a + np.sum(model.a_coef**2) == pytest.approx(9.8 / scale**2, rel=1e-10)
    assert model.tail_b + np.sum(model.b_coef**2) == pytest.approx(0.2 / scale**2, rel=1e-10)
    assert model.tail_a > 0 and model.tail_b > 0


def test_assemble_requires_one_spare_mode():
    plant = dirichlet_plant()
    basis = closed_form_basis(plant.problem, 3)
    with pytest.raises(ValueError):
        assemble(plant, basis, 3)


def test_assemble_shapes_scale_with_truncation():
    plant = dirichlet_plant()
    basis = closed_form_basis(plant.problem, 8)
    for n in (2, 5):
        model = assemble(plant, basis, n)
        d = n + 2
        assert model.f.shape == (d, d)
        assert model.g.shape == (d, 1)
        assert model.h.shape == (d, d)
        evals = np.linalg.eigvalsh(model.h)
        assert evals.min() >= -1e-12
        # the tail-of-b block is a single outer product
        assert np.linalg.matrix_rank(model.h[:n, :n], tol=1e-10) <= 1


def test_zero_output_row_removes_feedback_path():
    # with C = 0 nothing flows from the LTI block back into the modes:
    # the top-right block of F vanishes and both diagonal blocks are bare
    ode = OdePlant(a=[[0.2, 1.0], [0.0, -0.5]], b=[1.0, 2.0], c=[[0.0, 0.0]])
    plant = CoupledPlant(
        theta1=HALF, theta2=0.0, p=1.0, q_tilde=-3.0,
        zeta_m=0.25, trace_kind="value", ode=ode,
    )
    basis = closed_form_basis(plant.problem, 4)
    model = assemble(plant, basis, 3)
    assert np.allclose(model.f[:3, 3:], 0.0)
    assert np.allclose(model.f[:3, :3], np.diag(plant.q_c - model.lam[:3]))
    assert np.allclose(model.f[3:, 3:], ode.a)
    # the trace still drives the LTI block, so F is lower block-triangular
    assert np.allclose(model.f[3:, :3], ode.b @ model.c_row)
    assert np.allclose(model.g[:3], 0.0)
    assert np.allclose(model.g[3:], ode.b)
    assert np.allclose(model.h, 0.0)


def test_lifting_offset_obeys_angle_bound():
    for theta2 in np.linspace(0.0, HALF, 7):
        den = np.cos(theta2) + 2 * np.sin(theta2)
        for kind, cap in (("value", 1.0 / den), ("derivative", 2.0 / den)):
            plant = CoupledPlant(
                theta1=0.4, theta2=theta2, p=1.0, q_tilde=-3.0,
                zeta_m=0.9, trace_kind=kind, ode=small_ode(),
            )
            assert abs(lifting(plant).mu_m) <= cap + 1e-12

"""
Tests for the ball Green's functions and samplers.

Gradients are checked against central differences of the ball Green's function
G(x, y) = -1/(4π|x - y|) + R/(4π|q|), q = |y| x - (R²/|y|) y, and the samplers
against closed-form ball integrals.
"""

import numpy as np
import pytest
from scipy import integrate

from app.errors import KernelDomainError
from app.services.kernels import (
    FOUR_PI,
    center_kernel,
    green_poisson,
    green_screened,
    grad_green_poisson_center,
    grad_green_poisson_offcenter,
    grad_green_screened_center,
    sample_ball_inv_distance,
    sample_ball_inv_sq,
    sample_sphere_uniform,
    screened_gradient_weight,
    screened_weight,
)


def ball_green(x, y, R):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    y_norm = np.linalg.norm(y)
    q = y_norm * x - (R**2 / y_norm) * y
    return -1.0 / (FOUR_PI * np.linalg.norm(x - y)) + R / (FOUR_PI * np.linalg.norm(q))


def central_gradient(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    grad = np.zeros(3)
    for axis in range(3):
        step = np.zeros(3)
        step[axis] = h
        grad[axis] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad


def test_green_poisson_values():
    """Value at half the radius, and zero on the sphere."""
    assert green_poisson(0.5, 1.0) == pytest.approx(-1.0 / FOUR_PI)
    assert green_poisson(2.0, 2.0) == pytest.approx(0.0)


def test_green_poisson_matches_ball_green_at_center():
    """With the source point at the center the two forms agree."""
    y = np.array([0.2, -0.3, 0.4])
    assert green_poisson(np.linalg.norm(y), 1.5) == pytest.approx(ball_green(np.zeros(3), y, 1.5))


def test_green_screened_closed_form():
    """Compare with sinh((r - R)k) / (4π r sinh(Rk))."""
    r, R, sigma = 0.5, 1.0, 1.0
    expected = np.sinh(r - R) / (FOUR_PI * r * np.sinh(R))
    assert green_screened(r, R, sigma) == pytest.approx(expected, rel=1e-12)


def test_green_screened_large_sigma_is_finite():
    """No overflow for very stiff screening."""
    value = green_screened(0.5, 1.0, 1e6)
    assert np.isfinite(value)
    assert value < 0


def test_green_screened_tends_to_poisson():
    """σ → 0 recovers the Poisson kernel."""
    assert green_screened(0.3, 1.0, 1e-10) == pytest.approx(green_poisson(0.3, 1.0), rel=1e-6)
    assert green_screened(0.3, 1.0, 0.0) == pytest.approx(green_poisson(0.3, 1.0))


def test_offcenter_gradient_matches_finite_differences():
    """∇_x G(x, y) against central differences."""
    R = 1.3
    y = np.array([0.3, -0.2, 0.5])
    for x in (np.array([0.1, 0.4, -0.2]), np.array([-0.5, 0.0, 0.1])):
        expected = central_gradient(lambda p: ball_green(p, y, R), x)
        np.testing.assert_allclose(grad_green_poisson_offcenter(x, y, R), expected, rtol=1e-4)


def test_center_gradient_is_offcenter_gradient_at_origin():
    """The center gradient is ∇_x G(x, y) evaluated at x = 0."""
    R = 2.0
    y = np.array([[0.5, 0.2, -0.1], [0.0, 1.5, 0.3]])
    np.testing.assert_allclose(
        grad_green_poisson_center(y, R),
        grad_green_poisson_offcenter(np.zeros((2, 3)), y, R),
        rtol=1e-12,
    )


def test_offcenter_gradient_with_source_at_center():
    """The image term vanishes when y is the center."""
    x = np.array([0.2, 0.0, 0.0])
    grad = grad_green_poisson_offcenter(x, np.zeros(3), 1.0)
    np.testing.assert_allclose(grad, x / (FOUR_PI * 0.2**3), rtol=1e-12)


def test_screened_center_gradient_fixed_ball_value():
    """k = 1, R = 1, r = 0.5 against elementary spherical Bessel functions."""
    r, R = 0.5, 1.0
    k1 = lambda z: np.exp(-z) * (1.0 + z) / z**2
    i1 = lambda z: (z * np.cosh(z) - np.sinh(z)) / z**2
    magnitude = (k1(r) - i1(r) * k1(R) / i1(R)) / FOUR_PI

    rvec = np.array([0.0, 0.3, 0.4])
    grad = grad_green_screened_center(rvec, R, 1.0)
    np.testing.assert_allclose(grad, -magnitude * rvec / r, rtol=1e-8)
    assert np.linalg.norm(grad) == pytest.approx(0.2624, abs=1e-4)


def test_screened_center_gradient_unbounded_limit():
    """For a huge ball the gradient is the free-space one, e^{-kr}(1 + kr)/(4πr²)."""
    rvec = np.array([0.5, 0.0, 0.0])
    grad = grad_green_screened_center(rvec, 1000.0, 1.0)
    expected = np.exp(-0.5) * 1.5 / (FOUR_PI * 0.25)
    assert np.linalg.norm(grad) == pytest.approx(expected, rel=1e-10)
    assert grad[0] < 0


def test_screened_center_gradient_tends_to_poisson():
    """σ → 0 recovers the Poisson center gradient."""
    rvec = np.array([[0.1, 0.2, 0.3], [0.6, 0.0, -0.2]])
    np.testing.assert_allclose(
        grad_green_screened_center(rvec, 1.0, 1e-6),
        grad_green_poisson_center(rvec, 1.0),
        rtol=1e-4,
    )


def test_center_kernel_bundles_value_and_gradient():
    """KernelEval carries both pieces; the gradient is optional."""
    rvec = np.array([[0.3, 0.0, 0.0]])
    plain = center_kernel(rvec, 1.0)
    assert plain.gradient is None
    full = center_kernel(rvec, 1.0, sigma=2.0, gradient=True)
    np.testing.assert_allclose(full.value, green_screened(0.3, 1.0, 2.0))
    np.testing.assert_allclose(full.gradient, grad_green_screened_center(rvec, 1.0, 2.0))


def test_screened_weights():
    """c = z / sinh z and (z/3) / i₁(z), both exactly 1 without screening."""
    assert screened_weight(1.0, 1.0) == pytest.approx(1.0 / np.sinh(1.0))
    assert screened_weight(1.0, 0.0) == 1.0
    assert screened_gradient_weight(1.0, 0.0) == 1.0
    assert screened_gradient_weight(1.0, 1.0) == pytest.approx(np.e / 3.0, rel=1e-12)


@pytest.mark.parametrize("z", [0.049, 0.051, 0.5])
def test_screened_gradient_weight_branches_agree(z):
    """The small-z series and the closed form describe the same function."""
    expected = (z / 3.0) * z**2 / (z * np.cosh(z) - np.sinh(z))
    assert screened_gradient_weight(z, 1.0) == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("k, R", [(2.0, 1.0), (2.0, 0.6), (0.5, 1.5)])
def test_screened_sphere_gradient_of_sinh(k, R):
    """
    u = sinh(k y₁) solves Δu = k²u; the weighted sphere term (3/R) w ⟨u ŷ₁⟩
    recovers ∇u(0) = k exactly.
    """
    mean, _ = integrate.quad(lambda t: 0.5 * np.sinh(k * R * t) * t, -1.0, 1.0, epsabs=1e-14)
    gradient = (3.0 / R) * screened_gradient_weight(R, k**2) * mean
    assert gradient == pytest.approx(k, rel=1e-10)


@pytest.mark.parametrize("sigma, R", [(1.0, 1.0), (4.0, 0.7), (0.25, 2.0)])
def test_screened_gradient_with_source(sigma, R):
    """
    u = y₁ solves Δu - σu = -σy₁. The sphere term w plus ∫ f ∇G over the ball
    gives ∇u(0) = 1.
    """

    def shell(r):
        magnitude = -grad_green_screened_center(np.array([r, 0.0, 0.0]), R, sigma)[0]
        return sigma * magnitude * FOUR_PI * r**3 / 3.0

    volume, _ = integrate.quad(shell, 0.0, R, epsabs=1e-13, epsrel=1e-12)
    assert screened_gradient_weight(R, sigma) + volume == pytest.approx(1.0, rel=1e-8)


def test_domain_errors():
    """Center, outside and negative-σ evaluations are rejected."""
    with pytest.raises(KernelDomainError):
        green_poisson(0.0, 1.0)
    with pytest.raises(KernelDomainError):
        green_poisson(1.5, 1.0)
    with pytest.raises(KernelDomainError):
        green_screened(0.5, 1.0, -1.0)
    with pytest.raises(KernelDomainError):
        grad_green_poisson_offcenter(np.ones(3), np.ones(3), 2.0)
    with pytest.raises(KernelDomainError):
        sample_sphere_uniform(np.random.default_rng(0), np.zeros(3), 0.0, 4)


def test_sphere_samples_lie_on_spheres(rng):
    """Every sample sits at distance r from its center."""
    centers = rng.normal(size=(50, 3))
    radii = rng.uniform(0.1, 2.0, 50)
    points = sample_sphere_uniform(rng, centers, radii)
    np.testing.assert_allclose(np.linalg.norm(points - centers, axis=1), radii)


@pytest.mark.parametrize(
    "sampler, tolerance",
    [(sample_ball_inv_distance, 1e-2), (sample_ball_inv_sq, 2e-2)],
)
def test_ball_samplers_integrate_volume(rng, sampler, tolerance):
    """E[1/pdf] is the ball volume and samples stay inside the ball."""
    r = 2.0
    sample = sampler(rng, np.ones(3), r, 200_000)
    assert np.all(sample.distances <= r)
    assert np.all(sample.distances > 0)
    np.testing.assert_allclose(sample.points - np.ones(3), sample.offsets)
    volume = 4.0 / 3.0 * np.pi * r**3
    assert np.mean(1.0 / sample.pdf) == pytest.approx(volume, rel=tolerance)


def test_poisson_ball_integral(rng):
    """∫_B G dV = -R²/6 estimated with the 1/ρ sampler."""
    R = 1.0
    sample = sample_ball_inv_distance(rng, np.zeros(3), R, 200_000)
    estimate = np.mean(green_poisson(sample.distances, R) / sample.pdf)
    assert estimate == pytest.approx(-(R**2) / 6.0, rel=1e-2)

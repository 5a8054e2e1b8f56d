"""
Green's functions of the ball and the samplers paired with them.

Sign convention: the solved equations are Δu = f and Δu - σu = f, so every
Green's function is negative inside the ball and vanishes on its sphere.
All functions are vectorized over leading array dimensions; vector arguments
carry their three components on the last axis.

Functions:
- green_poisson, green_screened: Ball Green's functions with the source at the center.
- grad_green_poisson_center, grad_green_screened_center: Gradients with respect to
  the ball center.
- grad_green_poisson_offcenter: Gradient with respect to x for an arbitrary pair
  inside a ball centered at the origin.
- center_kernel: Value (and optionally gradient) bundled as a KernelEval.
- screened_weight: Expected survival weight c of a screened sphere step.
- sample_sphere_uniform, sample_ball_inv_distance, sample_ball_inv_sq: Samplers.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from app.errors import KernelDomainError

FOUR_PI = 4.0 * np.pi

# Ball samples closer than this fraction of the radius to the center are redrawn.
NEAR_CENTER = 1e-9


@dataclass(frozen=True)
class KernelEval:
    """Kernel values and, when requested, gradients with respect to the ball center."""

    value: np.ndarray
    gradient: Optional[np.ndarray] = None


@dataclass(frozen=True)
class BallSample:
    """
    Volume samples of a ball.

    `offsets` are the sample positions relative to the center, `distances` their
    norms and `pdf` the density with respect to the volume measure.
    """

    points: np.ndarray
    offsets: np.ndarray
    distances: np.ndarray
    pdf: np.ndarray


def _check_radii(r, R):
    r = np.asarray(r, dtype=float)
    R = np.asarray(R, dtype=float)
    if np.any(r <= 0):
        raise KernelDomainError("Kernel evaluated at the ball center (r = 0).")
    if np.any(r > R * (1.0 + 1e-12)):
        raise KernelDomainError("Kernel evaluated outside the ball (r > R).")
    return r, R


def _sqrt_sigma(sigma):
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise KernelDomainError("sigma must be nonnegative.")
    return np.sqrt(sigma)


def green_poisson(r, R):
    """G(r) = (1/4π)(r - R)/(rR) for the ball of radius R with the source at its center."""
    r, R = _check_radii(r, R)
    return (r - R) / (FOUR_PI * r * R)


def green_screened(r, R, sigma):
    """
    G_σ(r) = (1/4π) sinh((r - R)√σ) / (r sinh(R√σ)).

    Evaluated as -(1/4π) e^{-rk} (1 - e^{-2(R-r)k}) / ((1 - e^{-2Rk}) r), which
    neither overflows for large k = √σ nor loses precision as k → 0.
    """
    r, R = _check_radii(r, R)
    k = _sqrt_sigma(sigma)
    if np.all(k == 0):
        return green_poisson(r, R)
    k_safe = np.where(k > 0, k, 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.exp(-r * k_safe) * np.expm1(-2.0 * (R - r) * k_safe) / np.expm1(-2.0 * R * k_safe)
    screened = -ratio / (FOUR_PI * r)
    return np.where(k > 0, screened, (r - R) / (FOUR_PI * r * R))


def _norms(vectors):
    vectors = np.asarray(vectors, dtype=float)
    return vectors, np.linalg.norm(vectors, axis=-1)


def grad_green_poisson_center(rvec, R):
    """-(1/4π)(1/r³ - 1/R³) r⃗ with r⃗ = y - x pointing from the center to the source."""
    rvec, r = _norms(rvec)
    r, R = _check_radii(r, R)
    scale = -(1.0 / r**3 - 1.0 / R**3) / FOUR_PI
    return scale[..., None] * rvec


def _screened_gradient_magnitude(r, R, k):
    """
    (k²/4π) [k₁(kr) - i₁(kr) k₁(kR) / i₁(kR)] with the modified spherical Bessel
    functions normalized so that k₀(z) = e^{-z}/z, written with the exponentially
    scaled `kve` / `ive` so every exponent is nonpositive.
    """
    kr = k * r
    kR = k * R
    first = special.kve(1.5, kr) * np.exp(-kr)
    second = special.ive(1.5, kr) * special.kve(1.5, kR) / special.ive(1.5, kR)
    second = second * np.exp(kr - 2.0 * kR)
    return (k**2 / FOUR_PI) * np.sqrt(2.0 / (np.pi * kr)) * (first - second)


def grad_green_screened_center(rvec, R, sigma):
    """
    Gradient of the screened ball Green's function with respect to the center.

    This is the exact derivative of the fixed-ball kernel; it is radial, points
    along -r⃗ and reduces to grad_green_poisson_center as σ → 0.
    """
    rvec, r = _norms(rvec)
    r, R = _check_radii(r, R)
    k = _sqrt_sigma(sigma)
    if np.all(k == 0):
        return grad_green_poisson_center(rvec, R)
    k_b = np.broadcast_to(k, r.shape)
    k_safe = np.where(k_b > 0, k_b, 1.0)
    magnitude = np.where(
        k_b > 0,
        _screened_gradient_magnitude(r, np.broadcast_to(R, r.shape), k_safe),
        (1.0 / r**2 - r / np.broadcast_to(R, r.shape) ** 3) / FOUR_PI,
    )
    return -(magnitude / r)[..., None] * rvec


def grad_green_poisson_offcenter(x, y, R):
    """
    ∇_x G(x, y) for the Poisson Green's function of the ball of radius R at the origin.

    -(1/4π)(r⃗/r³ + (R|y|/q³) q⃗) with r⃗ = y - x and q⃗ = |y| x - (R²/|y|) y⃗.
    For y at the origin the image term vanishes and the limit -(1/4π) r⃗/r³ is used.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rvec = y - x
    r = np.linalg.norm(rvec, axis=-1)
    if np.any(r <= 0):
        raise KernelDomainError("Off-center gradient evaluated at x = y.")
    y_norm = np.linalg.norm(y, axis=-1)
    at_center = y_norm <= NEAR_CENTER * np.asarray(R, dtype=float)
    y_safe = np.where(at_center, 1.0, y_norm)
    qvec = y_safe[..., None] * x - (np.asarray(R) ** 2 / y_safe)[..., None] * y
    q = np.linalg.norm(qvec, axis=-1)
    image = np.where(at_center, 0.0, np.asarray(R) * y_safe / np.where(q > 0, q, 1.0) ** 3)
    return -(rvec / r[..., None] ** 3 + image[..., None] * qvec) / FOUR_PI


def center_kernel(rvec, R, sigma=0.0, gradient=False):
    """Kernel value (and gradient with respect to the center) for source offsets `rvec`."""
    rvec, r = _norms(rvec)
    if np.all(np.asarray(sigma) == 0):
        value = green_poisson(r, R)
        grad = grad_green_poisson_center(rvec, R) if gradient else None
    else:
        value = green_screened(r, R, sigma)
        grad = grad_green_screened_center(rvec, R, sigma) if gradient else None
    return KernelEval(value=value, gradient=grad)


def screened_weight(r, sigma):
    """c = r√σ / sinh(r√σ), exactly 1 when σ = 0."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(r * _sqrt_sigma(sigma), dtype=float)
    z_safe = np.where(z > 0, z, 1.0)
    weight = 2.0 * z_safe * np.exp(-z_safe) / -np.expm1(-2.0 * z_safe)
    return np.where(z > 0, weight, 1.0)


def screened_gradient_weight(r, sigma):
    """
    Factor of the sphere term of a screened gradient estimate relative to the Poisson
    one: (z³/3) / (z cosh z - sinh z) with z = r√σ, i.e. (z/3) / i₁(z). Exactly 1 for σ = 0.
    """
    r = np.asarray(r, dtype=float)
    z = np.asarray(r * _sqrt_sigma(sigma), dtype=float)
    small = z < 0.05
    z2 = z * z
    series = 1.0 / (1.0 + z2 / 10.0 + z2 * z2 / 280.0)
    z_safe = np.where(small, 1.0, z)
    closed = (2.0 * z_safe**3 / 3.0) * np.exp(-z_safe) / (
        (z_safe - 1.0) + (z_safe + 1.0) * np.exp(-2.0 * z_safe)
    )
    return np.where(small, series, closed)


def random_directions(rng, n):
    """n unit vectors uniform on the sphere."""
    v = rng.standard_normal((n, 3))
    norms = np.linalg.norm(v, axis=1)
    while np.any(norms == 0):
        bad = norms == 0
        v[bad] = rng.standard_normal((int(bad.sum()), 3))
        norms = np.linalg.norm(v, axis=1)
    return v / norms[:, None]


def _centers_and_radii(center, r, n):
    center = np.broadcast_to(np.asarray(center, dtype=float), (n, 3))
    r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
    if np.any(r <= 0):
        raise KernelDomainError("Sampling radius must be positive.")
    return center, r


def sample_sphere_uniform(rng, center, r, n=None):
    """
    Uniform samples on spheres.

    :param center: (3,) or (n, 3) centers.
    :param r: Scalar or (n,) radii.
    :param n: Sample count; defaults to the number of centers.
    :return: (n, 3) points.
    """
    n = n if n is not None else len(np.atleast_2d(center))
    center, r = _centers_and_radii(center, r, n)
    return center + r[:, None] * random_directions(rng, n)


def _radial_fractions(rng, n, floor, transform):
    u = rng.random(n)
    frac = transform(u)
    redraw = frac < floor
    while np.any(redraw):
        frac[redraw] = transform(rng.random(int(redraw.sum())))
        redraw = frac < floor
    return frac


def inv_distance_pdf(distance, r):
    """Density of sample_ball_inv_distance: 1 / (2π r² ρ)."""
    return 1.0 / (2.0 * np.pi * np.asarray(r) ** 2 * np.asarray(distance))


def inv_sq_pdf(distance, r):
    """Density of sample_ball_inv_sq: 1 / (4π r ρ²)."""
    return 1.0 / (FOUR_PI * np.asarray(r) * np.asarray(distance) ** 2)


def sample_ball_inv_distance(rng, center, r, n=None):
    """Ball samples with density proportional to 1/ρ (ρ = r√u)."""
    n = n if n is not None else len(np.atleast_2d(center))
    center, r = _centers_and_radii(center, r, n)
    rho = r * _radial_fractions(rng, n, NEAR_CENTER, np.sqrt)
    offsets = rho[:, None] * random_directions(rng, n)
    return BallSample(center + offsets, offsets, rho, inv_distance_pdf(rho, r))


def sample_ball_inv_sq(rng, center, r, n=None):
    """Ball samples with density proportional to 1/ρ² (ρ = r u)."""
    n = n if n is not None else len(np.atleast_2d(center))
    center, r = _centers_and_radii(center, r, n)
    rho = r * _radial_fractions(rng, n, NEAR_CENTER, lambda u: u)
    offsets = rho[:, None] * random_directions(rng, n)
    return BallSample(center + offsets, offsets, rho, inv_sq_pdf(rho, r))

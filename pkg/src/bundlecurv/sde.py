r"""Drift and diffusion of the reduced stochastic process.

After the group is factored out, the local process on the orbit space
solves

.. math::

    d\tilde\xi(t) = \tfrac12 \mu^2\kappa\, \tilde b\, dt
        + \mu\sqrt\kappa\, \tilde X\, d\tilde w,

where the drift is the divergence part of the Laplace-Beltrami operator
of the orbit-space metric and :math:`\tilde X\tilde X^\top` is its block
inverse. Two consistency layers are exposed:

* algebra: ``diffusion_coefficients`` squares back to the block inverse,
  and the transcribed drift displays agree with the divergence form
  :math:`\tilde b^{A'} = H^{-1/2}\partial_{B'}(H^{1/2}\tilde h^{A'B'})`,
* statistics: ``euler_maruyama_check`` simulates one short step and
  compares sample moments with the analytic ones at a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import (ChartPoint, ConfigError, DEFAULT_ENGINE, DerivEngine,
                     FieldHandle, NearSingularError, invert_spd, partial)
from .geometry import (AdaptedGeometry, OriginalGeometry, compile_adapted,
                       point_frame)

__all__ = [
    "SdeParams",
    "DiffusionBlocks",
    "ReducedSdeCoeffs",
    "MomentReport",
    "symmetric_sqrt",
    "density_H",
    "diffusion_coefficients",
    "drift_coefficients",
    "drift_divergence_form",
    "reduced_sde_coefficients",
    "euler_maruyama_check",
]

#: Most negative eigenvalue tolerated (relative to scale) when taking a
#: PSD square root; anything lower means the block was not a Gram matrix.
SQRT_EIGENVALUE_FLOOR = -1e-12


@dataclass(frozen=True)
class SdeParams:
    """Physical constants of the diffusion generator.

    ``mu2`` is the diffusivity scale (hbar over mass), ``kappa`` the real
    positive semigroup parameter.
    """

    mu2: float = 1.0
    kappa: float = 1.0
    m: float = 1.0
    hbar: float = 1.0

    def __post_init__(self):
        for name in ("mu2", "kappa", "m", "hbar"):
            if not float(getattr(self, name)) > 0.0:
                raise ConfigError(f"SdeParams.{name} must be positive")


@dataclass(frozen=True)
class DiffusionBlocks:
    r"""The three diffusion blocks.

    ``base`` is :math:`(h^{ij})^{1/2}`, ``mixed`` the induced
    :math:`\tilde X^a_{\bar m} = \tilde X^k_{\bar m}\,
    {}^{(\gamma)}\!\mathcal A^\mu_k K^a_\mu`, and ``vector`` the root of
    :math:`\gamma^{\alpha\beta}K^a_\alpha K^b_\beta + G^{ab}`.
    """

    base: np.ndarray
    mixed: np.ndarray
    vector: np.ndarray

    @property
    def full(self) -> np.ndarray:
        n_x = self.base.shape[0]
        n_v = self.vector.shape[0]
        x = np.zeros((n_x + n_v, n_x + n_v))
        x[:n_x, :n_x] = self.base
        x[n_x:, :n_x] = self.mixed
        x[n_x:, n_x:] = self.vector
        return x


@dataclass(frozen=True)
class ReducedSdeCoeffs:
    """Reduced-process coefficients at one point.

    ``b`` stacks the base and vector drift components; ``X`` is the full
    lower-block-triangular diffusion matrix with ``X Xᵀ`` equal to the
    block inverse of the orbit-space metric; ``H`` its determinant.
    """

    b: np.ndarray
    X: np.ndarray
    H: float
    n_x: int
    n_v: int


@dataclass(frozen=True)
class MomentReport:
    """One-step Euler-Maruyama moments against their analytic targets."""

    n_paths: int
    dt: float
    seed: int
    sigma_limit: float
    mean_target: np.ndarray
    mean_sample: np.ndarray
    mean_max_sigma: float
    cov_target: np.ndarray
    cov_sample: np.ndarray
    cov_max_sigma: float
    passed: bool


def symmetric_sqrt(mat: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root by eigendecomposition.

    Any factor with ``X Xᵀ = mat`` gives the same process law; the
    symmetric root is chosen for determinism. Eigenvalues below the
    rounding floor raise; tiny negatives are clamped to zero.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.size == 0:
        return np.zeros_like(mat)
    scale = max(1.0, float(np.max(np.abs(mat))))
    if np.max(np.abs(mat - mat.T)) > 1e-10 * scale:
        raise ValueError("matrix square root input is not symmetric")
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    if np.min(w) < SQRT_EIGENVALUE_FLOOR * scale:
        raise NearSingularError(
            f"matrix is not positive semidefinite (min eigenvalue "
            f"{np.min(w):.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _as_adapted(geometry):
    if isinstance(geometry, OriginalGeometry):
        return compile_adapted(geometry)
    return geometry


def density_H(geometry, point: ChartPoint) -> float:
    """Determinant of the orbit-space block metric at a point."""
    adapted = _as_adapted(geometry)
    if adapted.orig is not None:
        return point_frame(adapted.orig, point).det_h
    _, det = invert_spd(np.asarray(adapted.h_tilde(point), dtype=float))
    return det


def diffusion_coefficients(geometry, point: ChartPoint) -> DiffusionBlocks:
    """Diffusion blocks whose assembled square reproduces the block inverse.

    With bundle data the blocks follow the transcribed displays; without
    it they are recovered from the quadrants of the block inverse, which
    agrees by the gauge identity behind the inverse-metric display.
    """
    adapted = _as_adapted(geometry)
    n_x = adapted.n_x
    if adapted.orig is not None:
        frame = point_frame(adapted.orig, point)
        x_base = symmetric_sqrt(frame.h_base_inv)
        gamma_inv, _ = invert_spd(frame.gamma)
        g_v_inv, _ = invert_spd(adapted.orig.G_V)
        mixed = frame.K_V @ frame.A_gamma @ x_base
        x_vector = symmetric_sqrt(
            frame.K_V @ gamma_inv @ frame.K_V.T + g_v_inv)
        return DiffusionBlocks(base=x_base, mixed=mixed, vector=x_vector)
    h_inv, _ = invert_spd(np.asarray(adapted.h_tilde(point), dtype=float))
    quad_xx = h_inv[:n_x, :n_x]
    quad_vx = h_inv[n_x:, :n_x]
    quad_vv = h_inv[n_x:, n_x:]
    h_mat, _ = invert_spd(quad_xx)
    x_base = symmetric_sqrt(quad_xx)
    mixed = quad_vx @ h_mat @ x_base
    x_vector = symmetric_sqrt(quad_vv - quad_vx @ h_mat @ quad_vx.T)
    return DiffusionBlocks(base=x_base, mixed=mixed, vector=x_vector)


def _sqrt_density(orig: OriginalGeometry):
    def eval_at(point):
        return float(np.sqrt(point_frame(orig, point).det_h))
    return eval_at


def drift_coefficients(geometry, point: ChartPoint,
                       engine: DerivEngine = DEFAULT_ENGINE) -> np.ndarray:
    r"""Drift vector from the transcribed displays.

    .. math::

        \tilde b^i = \frac1{\sqrt H}\partial_{x^j}(\sqrt H\, h^{ij})
            + {}^{(\gamma)}\!\mathcal A^\mu_n h^{ni}
              \frac1{\sqrt H}\partial_{\tilde f^b}(\sqrt H\, K^b_\mu),

    .. math::

        \tilde b^a = \frac1{\sqrt H}\partial_{x^j}
              (\sqrt H\, h^{mj}\, {}^{(\gamma)}\!\mathcal A^\mu_m)K^a_\mu
            + (G^{ab} + W^{ab})\frac1{\sqrt H}\partial_{\tilde f^b}\sqrt H
            + \partial_{\tilde f^b} W^{ab},

    with :math:`W^{ab} = G^{AB}N^a_A N^b_B`. The last term sits outside
    the density factor exactly as displayed; ``drift_divergence_form`` is
    the arbiter that the whole transcription generates the
    Laplace-Beltrami operator.
    """
    adapted = _as_adapted(geometry)
    orig = adapted.orig
    if orig is None:
        raise ValueError("drift displays need original bundle data")
    n_x, n_v = adapted.n_x, adapted.n_v
    frame0 = point_frame(orig, point)
    sqrt_h = _sqrt_density(orig)
    sqrt_h0 = sqrt_h(point)
    g_v_inv, _ = invert_spd(orig.G_V) if n_v else (np.zeros((0, 0)), 1.0)

    def w_matrix(p):
        fr = point_frame(orig, p)
        n_vp = fr.projectors.N_vP
        return n_vp @ fr.G_P_inv @ n_vp.T

    f_dens_hinv = FieldHandle(
        lambda p: sqrt_h(p) * point_frame(orig, p).h_base_inv,
        "matrix", ("base",))
    f_dens_killing = FieldHandle(
        lambda p: sqrt_h(p) * point_frame(orig, p).K_V,
        "matrix", ("vector",))
    f_dens_conn = FieldHandle(
        lambda p: (lambda fr: sqrt_h(p) * fr.h_base_inv @ fr.A_gamma.T)(
            point_frame(orig, p)),
        "matrix", ("base",))
    f_dens = FieldHandle(lambda p: sqrt_h(p), "scalar", ())
    f_w = FieldHandle(w_matrix, "matrix", ("vector",))

    div_hinv = np.zeros((n_x, n_x))       # div_hinv[j, i] = d_j(vH h^{ij})
    for j in range(n_x):
        div_hinv[j] = partial(engine, f_dens_hinv, point, j)[:, j]
    div_killing = np.zeros(orig.n_g)      # sum_b d_b(vH K^b_mu)
    div_conn = np.zeros(orig.n_g)         # sum_j d_j(vH h^{mj} gA^mu_m)
    grad_dens = np.zeros(n_v)
    div_w = np.zeros(n_v)                 # sum_b d_b W^{ab}
    for b in range(n_v):
        slot = n_x + b
        div_killing += partial(engine, f_dens_killing, point, slot)[b]
        grad_dens[b] = partial(engine, f_dens, point, slot)
        div_w += partial(engine, f_w, point, slot)[:, b]
    for j in range(n_x):
        div_conn += partial(engine, f_dens_conn, point, j)[j]

    b_base = (div_hinv.sum(axis=0) / sqrt_h0
              + np.einsum("mn,ni,m->i", frame0.A_gamma, frame0.h_base_inv,
                          div_killing) / sqrt_h0)
    w0 = w_matrix(point)
    b_vector = (frame0.K_V @ div_conn / sqrt_h0
                + (g_v_inv + w0) @ grad_dens / sqrt_h0
                + div_w)
    return np.concatenate([b_base, b_vector])


def drift_divergence_form(geometry, point: ChartPoint,
                          engine: DerivEngine = DEFAULT_ENGINE
                          ) -> np.ndarray:
    r"""The divergence form :math:`H^{-1/2}\partial_{B'}(H^{1/2}\tilde h^{A'B'})`.

    Independent oracle for ``drift_coefficients``: equality of the two
    certifies that the transcribed displays, together with
    :math:`\tfrac12\tilde h^{A'B'}\partial^2`, generate the
    Laplace-Beltrami operator of the orbit-space metric.
    """
    adapted = _as_adapted(geometry)
    n_h = adapted.n_h
    orig = adapted.orig
    if orig is not None:
        def dens_inv(p):
            fr = point_frame(orig, p)
            return np.sqrt(fr.det_h) * fr.h_tilde_inv
    else:
        def dens_inv(p):
            inv, det = invert_spd(np.asarray(adapted.h_tilde(p),
                                             dtype=float))
            return np.sqrt(det) * inv
    field = FieldHandle(dens_inv, "matrix", ("mixed",))
    sqrt_h0 = np.sqrt(density_H(adapted, point))
    drift = np.zeros(n_h)
    for slot in range(n_h):
        drift += partial(engine, field, point, slot)[:, slot]
    return drift / sqrt_h0


def reduced_sde_coefficients(geometry, point: ChartPoint,
                             engine: DerivEngine = DEFAULT_ENGINE
                             ) -> ReducedSdeCoeffs:
    adapted = _as_adapted(geometry)
    blocks = diffusion_coefficients(adapted, point)
    return ReducedSdeCoeffs(
        b=drift_coefficients(adapted, point, engine),
        X=blocks.full,
        H=density_H(adapted, point),
        n_x=adapted.n_x,
        n_v=adapted.n_v)


def euler_maruyama_check(provider, point: ChartPoint = None,
                         params: SdeParams = SdeParams(), dt: float = 1e-4,
                         n_paths: int = 200_000, seed: int = 0,
                         sigma_limit: float = 4.0,
                         engine: DerivEngine = DEFAULT_ENGINE
                         ) -> MomentReport:
    """One explicit Euler step; sample moments against analytic targets.

    ``provider`` is either a ReducedSdeCoeffs (any coefficient set,
    including full-space blocks) or a geometry, in which case ``point``
    selects where the coefficients are evaluated. The increment is

    ``0.5 mu2 kappa b dt + sqrt(mu2 kappa dt) Z Xᵀ``

    with a counter-based generator, so a fixed seed gives a bit-identical
    report. Mean deviations are scored in sample standard errors, the
    covariance entries in the Gaussian standard error
    ``sqrt((C_ii C_jj + C_ij^2)/(n-1))``.
    """
    if int(n_paths) < 1:
        raise ConfigError("n_paths must be at least 1")
    if not float(dt) > 0.0:
        raise ConfigError("dt must be positive")
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise ConfigError("seed must be an integer")
    if isinstance(provider, ReducedSdeCoeffs):
        coeffs = provider
    else:
        if point is None:
            raise ConfigError("a chart point is required when the "
                              "provider is a geometry")
        coeffs = reduced_sde_coefficients(provider, point, engine)
    n_paths = int(n_paths)
    n_dim = coeffs.b.shape[0]
    scale = params.mu2 * params.kappa
    mean_target = 0.5 * scale * coeffs.b * dt
    cov_target = scale * dt * (coeffs.X @ coeffs.X.T)

    rng = np.random.Generator(np.random.Philox(seed))
    noise = rng.standard_normal((n_paths, n_dim))
    incr = mean_target[None, :] + np.sqrt(scale * dt) * (noise @ coeffs.X.T)

    mean_sample = incr.mean(axis=0)
    if n_paths > 1:
        mean_se = incr.std(axis=0, ddof=1) / np.sqrt(n_paths)
        centered = incr - mean_sample[None, :]
        cov_sample = centered.T @ centered / (n_paths - 1)
        cov_se = np.sqrt(
            (np.outer(np.diag(cov_target), np.diag(cov_target))
             + cov_target ** 2) / (n_paths - 1))
    else:
        mean_se = np.full(n_dim, np.inf)
        cov_sample = np.zeros((n_dim, n_dim))
        cov_se = np.full((n_dim, n_dim), np.inf)
    mean_max = float(np.max(np.abs(mean_sample - mean_target)
                            / np.maximum(mean_se, 1e-300))) if n_dim else 0.0
    cov_max = float(np.max(np.abs(cov_sample - cov_target)
                           / np.maximum(cov_se, 1e-300))) if n_dim else 0.0
    return MomentReport(
        n_paths=n_paths, dt=float(dt), seed=int(seed),
        sigma_limit=float(sigma_limit),
        mean_target=mean_target, mean_sample=mean_sample,
        mean_max_sigma=mean_max,
        cov_target=cov_target, cov_sample=cov_sample,
        cov_max_sigma=cov_max,
        passed=bool(mean_max <= sigma_limit and cov_max <= sigma_limit))

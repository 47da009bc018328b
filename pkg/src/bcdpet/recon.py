"""Poisson image reconstruction: MLEM, MAP-EM, BCD-Net, TV-PDHG, NLM-ADMM.

All algorithms minimize ``f(x) + R(x)`` over ``x >= 0`` where

    f(x) = sum_i (Ax + r)_i - y_i log (Ax + r)_i

is the Poisson negative log-likelihood.  ``A`` is passed as a
:class:`~bcdpet.projector.Projector` (a :class:`~bcdpet.projector.Geometry`
is accepted and resolved to its cached projector).  Iterates are kept at
zero on voxels the scanner cannot see (zero sensitivity).
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.ndimage import uniform_filter

from .denoiser import CidModel, cid_forward, normalize_g1
from .phantoms import Measurement
from .projector import Geometry, Projector, get_projector

log = logging.getLogger(__name__)

ALGORITHMS = ("em", "bcdnet", "tv_pdhg", "nlm_admm")


def _proj(A) -> Projector:
    if isinstance(A, Projector):
        return A
    if isinstance(A, Geometry):
        return get_projector(A)
    raise TypeError(f"expected Projector or Geometry, got {type(A).__name__}")


# -- data term -----------------------------------------------------------------

def poisson_nll(x, m: Measurement, A) -> float:
    """``1'(Ax + r) - y' log(Ax + r)``; rays with ``y = 0`` contribute ``ybar`` only."""
    P = _proj(A)
    ybar = P.forward(x) + m.r_bar
    pos = m.y > 0
    if np.any(ybar[pos] <= 0):
        raise ValueError("zero predicted mean on a ray with counts")
    return float(ybar.sum() - np.sum(m.y[pos] * np.log(ybar[pos])))


def _ratio(P: Projector, x, m: Measurement) -> np.ndarray:
    """``y / ybar`` with the ``0/0 = 0`` convention for empty rays."""
    ybar = P.forward(x) + m.r_bar
    pos = m.y > 0
    if np.any(ybar[pos] <= 0):
        raise ValueError("zero predicted mean on a ray with counts")
    out = np.zeros_like(ybar)
    out[pos] = m.y[pos] / ybar[pos]
    return out


def em_backprojection(x, m: Measurement, A) -> np.ndarray:
    """``e_j(x) = sum_i a_ij y_i / ybar_i(x)``."""
    P = _proj(A)
    return P.back(_ratio(P, x, m))


def poisson_gradient(x, m: Measurement, A) -> np.ndarray:
    """``A'(1 - y / ybar)`` = sensitivity minus :func:`em_backprojection`."""
    P = _proj(A)
    return P.sensitivity - em_backprojection(x, m, P)


def em_step(x, m: Measurement, A, a=None) -> np.ndarray:
    """One MLEM update ``x_j e_j(x) / a_j``."""
    P = _proj(A)
    a = P.sensitivity if a is None else a
    x = np.asarray(x, dtype=float)
    blind = a <= 0
    if np.any(x[blind] > 0):
        raise ValueError("positive activity on a zero-sensitivity voxel")
    e = em_backprojection(x, m, P)
    out = np.zeros_like(x)
    seen = ~blind
    out[seen] = x[seen] * e[seen] / a[seen]
    return out


def map_em_root(a, beta, u, nu):
    """Positive root of ``beta x^2 + (a - beta u) x - nu = 0``.

    Uses the cancellation-free branch for each sign of
    ``lam = (a - beta u) / 2``.
    """
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    nu = np.asarray(nu, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if np.any(beta <= 0):
        raise ValueError("beta must be positive")
    lam = 0.5 * (a - beta * u)
    disc = np.sqrt(lam * lam + beta * nu)
    neg = lam < 0
    den = np.where(neg, 1.0, disc + lam)
    pos_branch = np.divide(nu, den, out=np.zeros(np.broadcast(nu, den).shape), where=den > 0)
    return np.where(neg, (disc - lam) / beta, pos_branch)


def surrogate_q(xj, a, beta, u, nu):
    """Per-voxel EM surrogate ``-nu log x + a x + beta/2 (x - u)^2`` (up to a constant)."""
    return -nu * np.log(xj) + a * xj + 0.5 * beta * (xj - u) ** 2


def map_em_step(x, u, beta: float, m: Measurement, A, a=None) -> np.ndarray:
    """Minimize the separable EM surrogate of ``f(x) + beta/2 ||x - u||^2``."""
    P = _proj(A)
    a = P.sensitivity if a is None else a
    x = np.asarray(x, dtype=float)
    nu = x * em_backprojection(x, m, P)
    out = map_em_root(a, beta, u, nu)
    out[a <= 0] = 0.0
    return out


# -- normalization / scaling ---------------------------------------------------

def scale_factor(v, m: Measurement, A, tol: float = 1e-9, max_iter: int = 50) -> float:
    """Maximum-likelihood scale ``s* = argmin_s f(s v)`` by safeguarded Newton.

    Newton starts from the background-subtracted count ratio
    ``sum(y - r)_+ / sum(Av)``, which makes the iteration independent of the
    units of ``v``.  Iterates are confined to ``[1e-6, 1e6]`` times that start
    (and to the range where every ``s [Av]_i + r_i`` stays positive); a step
    that leaves the current bracket or is not finite is replaced by a
    geometric bisection.
    """
    P = _proj(A)
    v = np.asarray(v, dtype=float)
    if v.sum() == 0:
        raise ValueError("cannot scale an all-zero image")
    b = P.forward(v).ravel()
    y = m.y.ravel().astype(float)
    r = m.r_bar.ravel()
    # rays that v does not reach add a constant to f(s v)
    pos = (y > 0) & (b != 0)
    bp, yp, rp = b[pos], y[pos], r[pos]
    if not pos.any():
        raise ValueError("image projects to zero on every ray with counts")
    sb = b.sum()
    s0 = max(np.sum(y - r), 0.0) / sb if sb > 0 else 1.0
    if not (np.isfinite(s0) and s0 > 0):
        s0 = max(y.sum(), 1.0) / max(abs(sb), 1e-300)
    lo, hi = 1e-6 * s0, 1e6 * s0
    neg = b < 0
    if np.any(neg):
        hi = min(hi, np.min(r[neg] / -b[neg]) * (1 - 1e-12))
    s = min(max(s0, lo), hi)

    def d1d2(s):
        den = s * bp + rp
        return sb - np.sum(yp * bp / den), np.sum(yp * (bp / den) ** 2)

    for _ in range(max_iter):
        g, h = d1d2(s)
        if g > 0:
            hi = s
        else:
            lo = s
        if g == 0:
            break
        s_new = s - g / h if h > 0 else math.nan
        if not (np.isfinite(s_new) and lo < s_new < hi):
            s_new = math.sqrt(lo * hi) if lo > 0 else 0.5 * (lo + hi)
        done = abs(s_new - s) < tol * s
        s = s_new
        if done:
            break
    if not np.isfinite(s):
        raise ValueError("scale iteration diverged")
    return float(s)


def scale_g2(v, m: Measurement, A, **kw) -> np.ndarray:
    """``g2(v) = s* v`` with ``s*`` from :func:`scale_factor`."""
    v = np.asarray(v, dtype=float)
    return scale_factor(v, m, A, **kw) * v


class DegenerateBeta(ValueError):
    """The regularizer gradient vanished; adaptive beta is undefined."""


def adaptive_beta(x, u_scaled, m: Measurement, A, c: float, a=None, support=None) -> float:
    """``c * ||a - e(x)|| / ||x - u_scaled||`` over the scanner support."""
    if not c > 0:
        raise ValueError("balance constant c must be positive")
    P = _proj(A)
    a = P.sensitivity if a is None else a
    support = (a > 0) if support is None else support
    num = np.linalg.norm((a - em_backprojection(x, m, P))[support])
    den = np.linalg.norm((np.asarray(x) - u_scaled)[support])
    if den < 1e-12:
        raise DegenerateBeta("image already equals the scaled denoiser output")
    return float(num / den * c)


# -- configuration and traces ---------------------------------------------------

@dataclass
class TVConfig:
    beta: float = 2.0 ** -4
    n_iter: int | None = None  # None: ReconConfig.T
    sigma: float | None = None  # None: 0.99 / ||[A; C]|| (scaled by step_ratio)
    tau: float | None = None
    step_ratio: float = 0.3  # sqrt(tau / sigma) in units of the mean initial activity


@dataclass
class NLMConfig:
    beta: float = 2.0 ** -4
    sigma_f: float = 1.0
    patch: int = 3
    search: int = 7
    n_iter: int | None = None  # None: ReconConfig.T
    rho: float | None = None  # None: mean(a) / mean(x0) on the support
    x_inner: int = 10
    v_inner: int = 5
    mu: float = 10.0
    tau_incr: float = 2.0
    adapt_iters: int = 50


@dataclass
class ReconConfig:
    algorithm: str = "bcdnet"
    T: int = 30
    T_prime: int = 1
    c: float = 0.01
    n_em_init: int = 10
    n_em: int = 40
    beta_fixed: float | None = None
    beta_mode: str = "adaptive"  # "adaptive" | "initial"
    tv: TVConfig = field(default_factory=TVConfig)
    nlm: NLMConfig = field(default_factory=NLMConfig)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if min(self.T, self.T_prime, self.n_em_init, self.n_em) < 1:
            raise ValueError("iteration counts must be >= 1")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.beta_mode not in ("adaptive", "initial"):
            raise ValueError(f"unknown beta_mode {self.beta_mode!r}")
        if isinstance(self.tv, dict):
            self.tv = TVConfig(**self.tv)
        if isinstance(self.nlm, dict):
            self.nlm = NLMConfig(**self.nlm)


@dataclass
class ReconTrace:
    """Per-iteration record; index 0 is the starting image."""

    images: list = field(default_factory=list)
    nll: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    hook: Callable | None = field(default=None, repr=False)

    def record(self, x, nll, objective=None, beta=math.nan):
        self.images.append(np.array(x, copy=True))
        self.nll.append(float(nll))
        self.objective.append(float(nll if objective is None else objective))
        self.beta.append(float(beta))
        if self.hook is not None:
            self.metrics.append(self.hook(x))

    def __len__(self):
        return len(self.images)


def initial_image(m: Measurement, A) -> np.ndarray:
    """Uniform image on the scanner support with total counts matched to the data."""
    P = _proj(A)
    a = P.sensitivity
    sup = a > 0
    net = float(np.sum(m.y) - np.sum(m.r_bar))
    level = net / a[sup].sum() if net > 0 else 1.0
    return np.where(sup, level, 0.0)


def em_reconstruct(m: Measurement, A, n_iter: int = 40, x0=None, hook=None):
    """Plain MLEM; returns the last iterate and a trace of ``n_iter + 1`` snapshots."""
    P = _proj(A)
    x = initial_image(m, P) if x0 is None else np.array(x0, dtype=float)
    trace = ReconTrace(hook=hook)
    trace.record(x, poisson_nll(x, m, P))
    for _ in range(n_iter):
        x = em_step(x, m, P)
        trace.record(x, poisson_nll(x, m, P))
    return x, trace


# -- BCD-Net -------------------------------------------------------------------

def bcd_net_step(x, stage, m: Measurement, A, cfg: ReconConfig, beta=None, update_beta=True):
    """One outer iteration: denoise, rescale, pick beta, ``T_prime`` MAP-EM updates.

    Returns ``(x_next, g2(u), beta)``.  ``beta`` is the previous weight; it is
    recomputed adaptively when ``update_beta`` is set (and ``cfg.beta_fixed``
    is not), and reused when the adaptive rule is undefined.
    """
    P = _proj(A)
    a = P.sensitivity
    u = cid_forward(normalize_g1(x), stage)
    target = scale_g2(u, m, P)
    if cfg.beta_fixed is not None:
        beta = cfg.beta_fixed
    elif update_beta or beta is None:
        try:
            beta = adaptive_beta(x, target, m, P, cfg.c, a, P.support)
        except DegenerateBeta:
            if beta is None:
                raise
            log.debug("adaptive beta undefined; keeping %g", beta)
    # exact data fit gives beta = 0; use the smallest positive weight instead
    b = beta if beta > 0 else 1e-300
    for _ in range(cfg.T_prime):
        x = map_em_step(x, target, b, m, P, a)
    return x, target, beta


def bcd_net_reconstruct(m: Measurement, A, model: CidModel, cfg: ReconConfig, hook=None,
                        x0=None):
    """Unrolled BCD-Net: denoise ``g1(x)``, rescale with ``g2``, then MAP-EM.

    ``trace.extra["denoised"]`` keeps ``g2(u^(n))`` for every outer
    iteration and ``trace.beta[n]`` the regularization weight that produced
    ``x^(n)``.  ``x0`` overrides the EM warm start (the trace still begins
    with it).
    """
    P = _proj(A)
    if model.T < cfg.T:
        raise ValueError(f"model has {model.T} stages, reconstruction needs {cfg.T}")
    if x0 is None:
        x, _ = em_reconstruct(m, P, cfg.n_em_init)
    else:
        x = np.array(x0, dtype=float)
    trace = ReconTrace(hook=hook)
    trace.record(x, poisson_nll(x, m, P))
    denoised = []
    beta = None
    for n in range(cfg.T):
        update = cfg.beta_mode == "adaptive" or n == 0
        x, target, beta = bcd_net_step(x, model.stages[n], m, P, cfg, beta, update)
        denoised.append(target)
        trace.record(x, poisson_nll(x, m, P), beta=beta)
    trace.extra["denoised"] = denoised
    return x, trace


# -- TV via PDHG ---------------------------------------------------------------

def finite_diff(x: np.ndarray) -> np.ndarray:
    """Forward differences along rows and columns, zero on the last line."""
    g = np.zeros((2,) + x.shape)
    g[0, :-1] = x[1:] - x[:-1]
    g[1, :, :-1] = x[:, 1:] - x[:, :-1]
    return g


def finite_diff_adjoint(p: np.ndarray) -> np.ndarray:
    """Exact adjoint of :func:`finite_diff`."""
    out = np.zeros(p.shape[1:])
    out[1:] += p[0, :-1]
    out[:-1] -= p[0, :-1]
    out[:, 1:] += p[1, :, :-1]
    out[:, :-1] -= p[1, :, :-1]
    return out


def tv_objective(x, m, A, beta) -> float:
    return poisson_nll(x, m, A) + beta * float(np.abs(finite_diff(x)).sum())


def stacked_norm(P: Projector, n_iter: int = 60, seed: int = 0) -> float:
    """Power-iteration estimate of ``||[A; C]||``."""
    rng = np.random.default_rng(seed)
    x = rng.random(P.geometry.image_shape)
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(n_iter):
        y = P.back(P.forward(x)) + finite_diff_adjoint(finite_diff(x))
        lam = np.linalg.norm(y)
        x = y / lam
    return math.sqrt(lam)


def _prox_poisson_conj(w, sigma, y, r):
    """Prox of ``sigma F*`` for ``F(v) = sum v + r - y log(v + r)``."""
    b = 1.0 - w - sigma * r
    return 1.0 - 0.5 * (b + np.sqrt(b * b + 4.0 * sigma * y))


def tv_pdhg_reconstruct(m: Measurement, A, cfg: ReconConfig, x0=None, hook=None):
    """PDHG on ``f(x) + beta ||Cx||_1`` with ``x >= 0``; both terms dualized.

    ``K = [A; C]`` with ``C`` the stacked first-order differences.  The data
    dual starts at ``1 - y / ybar(x0)`` (its optimal value for ``x0``) and the
    TV dual at zero.
    """
    P = _proj(A)
    tv = cfg.tv
    n_iter = tv.n_iter or cfg.T
    beta = tv.beta
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if x0 is None:
        x, _ = em_reconstruct(m, P, cfg.n_em_init)
    else:
        x = np.array(x0, dtype=float)
    support = P.sensitivity > 0
    L = stacked_norm(P)
    sigma, tau = tv.sigma, tv.tau
    if sigma is None or tau is None:
        # tau / sigma carries the squared image scale so the iteration does
        # not depend on the activity units
        k = tv.step_ratio * max(float(x[support].mean()), 1e-12)
        sigma = 0.99 / (L * k)
        tau = 0.99 * k / L
    if sigma * tau * L * L >= 1.0:
        warnings.warn(f"PDHG steps violate sigma*tau*L^2 < 1 (= {sigma * tau * L * L:.3g})",
                      RuntimeWarning, stacklevel=2)
    y = m.y.astype(float)
    r = m.r_bar
    ybar = P.forward(x) + r
    q = 1.0 - np.divide(y, ybar, out=np.zeros_like(y), where=ybar > 0)
    p = np.zeros((2,) + x.shape)
    xbar = x.copy()
    trace = ReconTrace(hook=hook)
    trace.record(x, poisson_nll(x, m, P), tv_objective(x, m, P, beta), beta)
    for _ in range(n_iter):
        q = _prox_poisson_conj(q + sigma * P.forward(xbar), sigma, y, r)
        p = np.clip(p + sigma * finite_diff(xbar), -beta, beta)
        x_new = np.maximum(x - tau * (P.back(q) + finite_diff_adjoint(p)), 0.0)
        x_new[~support] = 0.0
        xbar = 2.0 * x_new - x
        x = x_new
        nll = poisson_nll(x, m, P)
        trace.record(x, nll, nll + beta * float(np.abs(finite_diff(x)).sum()), beta)
    trace.extra.update(sigma=sigma, tau=tau, L=L)
    return x, trace


# -- NLM via ADMM --------------------------------------------------------------

def fair_potential(t, sigma_f: float, n_f: int):
    """Fair potential of a squared patch distance ``t``.

    ``p(t) = sigma_f^2 (z - log(1 + z))`` with ``z = sqrt(t / (sigma_f^2 N_f))``;
    smooth, convex in the patch difference, ``p(0) = 0``.
    """
    if not sigma_f > 0:
        raise ValueError("sigma_f must be positive")
    z = np.sqrt(np.maximum(t, 0.0) / (sigma_f ** 2 * n_f))
    return sigma_f ** 2 * (z - np.log1p(z))


def fair_potential_deriv(t, sigma_f: float, n_f: int):
    """``dp/dt = 1 / (2 N_f (1 + z))``."""
    if not sigma_f > 0:
        raise ValueError("sigma_f must be positive")
    z = np.sqrt(np.maximum(t, 0.0) / (sigma_f ** 2 * n_f))
    return 1.0 / (2.0 * n_f * (1.0 + z))


def _search_offsets(search: int):
    h = search // 2
    return [(oy, ox) for oy in range(-h, h + 1) for ox in range(-h, h + 1) if (oy, ox) != (0, 0)]


def _box(v, patch):
    """Zero-padded ``patch x patch`` window sums over the last two axes."""
    size = (1,) * (v.ndim - 2) + (patch, patch)
    return uniform_filter(v, size=size, mode="constant", cval=0.0) * (patch * patch)


def nlm_penalty(x, sigma_f: float, patch: int = 3, search: int = 7, grad: bool = True):
    """Unweighted patch-difference penalty ``sum_i sum_{j in S_i} p(||N_i x - N_j x||^2)``.

    Returns ``(value, gradient)`` (gradient ``None`` when ``grad`` is false).
    Pairs whose partner voxel falls off the grid are dropped; patches are
    zero-padded at the border.
    """
    x = np.asarray(x, dtype=float)
    ny, nx = x.shape
    if patch % 2 == 0 or search % 2 == 0:
        raise ValueError("patch and search sizes must be odd")
    if patch > min(ny, nx) or search > min(ny, nx):
        raise ValueError("patch/search window exceeds the image")
    n_f = patch * patch
    offs = _search_offsets(search)
    hs = search // 2
    xp = np.pad(x, hs)
    mp = np.pad(np.ones_like(x), hs)
    partner = np.empty((len(offs), ny, nx))
    mask = np.empty_like(partner)
    for k, (oy, ox) in enumerate(offs):
        partner[k] = xp[hs + oy:hs + oy + ny, hs + ox:hs + ox + nx]
        mask[k] = mp[hs + oy:hs + oy + ny, hs + ox:hs + ox + nx]
    diff = mask * (x[None] - partner)
    # running-sum box filters can dip slightly below zero
    t = np.maximum(_box(diff * diff, patch), 0.0)
    z = np.sqrt(t / (sigma_f ** 2 * n_f))
    val = float(sigma_f ** 2 * np.sum(mask * (z - np.log1p(z))))
    if not grad:
        return val, None
    h = 2.0 * diff * _box(mask / (2.0 * n_f * (1.0 + z)), patch)
    acc = np.zeros_like(xp)
    for k, (oy, ox) in enumerate(offs):
        acc[hs + oy:hs + oy + ny, hs + ox:hs + ox + nx] -= h[k]
    g = h.sum(axis=0) + acc[hs:hs + ny, hs:hs + nx]
    return val, g


def nlm_lipschitz(search: int) -> float:
    """Upper bound on the gradient Lipschitz constant of :func:`nlm_penalty`."""
    return 4.0 * (search * search - 1)


def nlm_admm_reconstruct(m: Measurement, A, cfg: ReconConfig, x0=None, hook=None):
    """ADMM on ``f(x) + beta R_nlm(v)`` subject to ``x = v``.

    x-step: ``x_inner`` MAP-EM surrogate updates toward ``v - w``.
    v-step: ``v_inner`` gradient steps on ``beta R(v) + rho/2 ||v - x - w||^2``.
    The penalty ``rho`` follows residual balancing for the first
    ``adapt_iters`` iterations and is frozen afterwards.  Primal and dual
    residual norms go to ``trace.extra``.
    """
    P = _proj(A)
    nc = cfg.nlm
    n_iter = nc.n_iter or cfg.T
    beta = nc.beta
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if not nc.sigma_f > 0:
        raise ValueError("sigma_f must be positive")
    ny, nx = P.geometry.image_shape
    if nc.patch > min(ny, nx) or nc.search > min(ny, nx):
        raise ValueError("patch/search window exceeds the image")
    a = P.sensitivity
    support = a > 0
    if x0 is None:
        x, _ = em_reconstruct(m, P, cfg.n_em_init)
    else:
        x = np.array(x0, dtype=float)
    rho = nc.rho
    if rho is None:
        rho = float(a[support].mean() / max(x[support].mean(), 1e-12))
    L_R = nlm_lipschitz(nc.search)
    v = x.copy()
    w = np.zeros_like(x)

    def objective(z):
        nll = poisson_nll(z, m, P)
        if beta == 0:
            return nll, nll
        return nll, nll + beta * nlm_penalty(z, nc.sigma_f, nc.patch, nc.search, grad=False)[0]

    trace = ReconTrace(hook=hook)
    trace.record(x, *objective(x), beta=beta)
    r_hist, s_hist, rho_hist = [], [], []
    for it in range(n_iter):
        for _ in range(nc.x_inner):
            x = map_em_step(x, v - w, rho, m, P, a)
        v_old = v
        target = x + w
        if beta == 0:
            v = target.copy()
        else:
            step = 1.0 / (rho + beta * L_R)
            v = v.copy()
            for _ in range(nc.v_inner):
                _, gr = nlm_penalty(v, nc.sigma_f, nc.patch, nc.search)
                v -= step * (beta * gr + rho * (v - target))
        w = w + x - v
        r_norm = float(np.linalg.norm(x - v))
        s_norm = float(rho * np.linalg.norm(v - v_old))
        r_hist.append(r_norm)
        s_hist.append(s_norm)
        rho_hist.append(rho)
        if it < nc.adapt_iters:
            if r_norm > nc.mu * s_norm:
                rho *= nc.tau_incr
                w /= nc.tau_incr
            elif s_norm > nc.mu * r_norm:
                rho /= nc.tau_incr
                w *= nc.tau_incr
        trace.record(x, *objective(x), beta=beta)
    trace.extra.update(primal_residual=r_hist, dual_residual=s_hist, rho=rho_hist)
    return x, trace


def reconstruct(m: Measurement, A, cfg: ReconConfig, model: CidModel | None = None,
                hook=None):
    """Dispatch on ``cfg.algorithm``."""
    if cfg.algorithm == "em":
        return em_reconstruct(m, A, cfg.n_em, hook=hook)
    if cfg.algorithm == "bcdnet":
        if model is None:
            raise ValueError("bcdnet needs a trained model")
        return bcd_net_reconstruct(m, A, model, cfg, hook=hook)
    if cfg.algorithm == "tv_pdhg":
        return tv_pdhg_reconstruct(m, A, cfg, hook=hook)
    if cfg.algorithm == "nlm_admm":
        return nlm_admm_reconstruct(m, A, cfg, hook=hook)
    raise ValueError(f"unknown algorithm {cfg.algorithm!r}")

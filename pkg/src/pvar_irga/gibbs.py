"""Gibbs sampler for the own-country coefficients of one equation.

The likelihood is the k-row rotated problem with the approximated other-block
moments plugged in, so its covariance is fixed for the whole chain and is
factored once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .horseshoe import HorseshoeState, clamp, inverse_gamma
from .rotation import RotationSplit
from .vamp import ApproxPosterior

JITTER_REL = 1e-10
JITTER_STEPS = 3


class SamplerError(RuntimeError):
    pass


@dataclass
class McmcConfig:
    n_burn: int = 1000
    n_save: int = 2000
    thin: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("n_burn", "n_save", "thin"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
            setattr(self, name, int(getattr(self, name)))
        if int(self.seed) < 0:
            raise ValueError("seed must be non-negative")


def cholesky_jitter(S: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, adding diagonal jitter (1e-10, 1e-9, 1e-8 x mean diag) on failure."""
    S = 0.5 * (S + S.T)
    scale = float(np.mean(np.diag(S))) if S.size else 1.0
    jitter = 0.0
    for attempt in range(JITTER_STEPS):
        try:
            return linalg.cholesky(S + jitter * np.eye(S.shape[0]), lower=True)
        except linalg.LinAlgError:
            jitter = JITTER_REL * abs(scale) * 10.0 ** attempt
    raise SamplerError(f"matrix not positive definite after {JITTER_STEPS} jitter attempts")


@dataclass(frozen=True)
class PluginLikelihood:
    y_tilde: np.ndarray
    X_tilde: np.ndarray
    Sigma: np.ndarray
    chol: np.ndarray
    XtSiX: np.ndarray
    XtSiy: np.ndarray
    sigma2: float

    @classmethod
    def build(cls, y_tilde, X_tilde, Sigma, sigma2=np.nan) -> "PluginLikelihood":
        y_tilde = np.asarray(y_tilde, dtype=float)
        X_tilde = np.asarray(X_tilde, dtype=float)
        Sigma = 0.5 * (np.asarray(Sigma, dtype=float) + np.asarray(Sigma, dtype=float).T)
        L = cholesky_jitter(Sigma)
        Xw = linalg.solve_triangular(L, X_tilde, lower=True)
        yw = linalg.solve_triangular(L, y_tilde, lower=True)
        return cls(y_tilde, X_tilde, Sigma, L, Xw.T @ Xw, Xw.T @ yw, float(sigma2))

    @classmethod
    def from_rotation(cls, rot: RotationSplit, approx: ApproxPosterior) -> "PluginLikelihood":
        k = rot.X1.shape[0]
        if approx.mean.size:
            y_tilde = rot.y1 - rot.Z1 @ approx.mean
            Sigma = approx.var_scalar * (rot.Z1 @ rot.Z1.T) + approx.sigma2_hat * np.eye(k)
        else:
            y_tilde = rot.y1.copy()
            Sigma = approx.sigma2_hat * np.eye(k)
        return cls.build(y_tilde, rot.X1, Sigma, approx.sigma2_hat)

    @property
    def k(self) -> int:
        return self.X_tilde.shape[1]


@dataclass
class ChainDraws:
    A_draws: np.ndarray
    psi2_draws: np.ndarray
    lambda2_draws: np.ndarray
    ess: np.ndarray

    @property
    def n_save(self) -> int:
        return self.A_draws.shape[0]


def posterior_moments(pl: PluginLikelihood, prior_mean, prior_var_diag):
    """Mean and covariance of A given the prior N(prior_mean, diag(prior_var_diag))."""
    prec, L, mu = _posterior_factor(pl, prior_mean, prior_var_diag)
    S = linalg.cho_solve((L, True), np.eye(pl.k))
    return mu, S


def _posterior_factor(pl, prior_mean, prior_var_diag):
    v = np.asarray(prior_var_diag, dtype=float)
    if np.any(~(v > 0)):
        raise ValueError("prior variances must be positive")
    prec = pl.XtSiX + np.diag(1.0 / v)
    L = cholesky_jitter(prec)
    rhs = np.asarray(prior_mean, dtype=float) / v + pl.XtSiy
    mu = linalg.cho_solve((L, True), rhs)
    return prec, L, mu


def conditional_A_draw(pl: PluginLikelihood, prior_mean, prior_var_diag, rng: np.random.Generator) -> np.ndarray:
    _, L, mu = _posterior_factor(pl, prior_mean, prior_var_diag)
    z = rng.standard_normal(pl.k)
    return mu + linalg.solve_triangular(L, z, lower=True, trans="T")


def horseshoe_gibbs_step(phi, hs: HorseshoeState, rng: np.random.Generator) -> HorseshoeState:
    """One sweep over the inverse-Gamma full conditionals of the hierarchy."""
    phi2 = np.asarray(phi, dtype=float) ** 2
    lam_col = hs.global_per_column()
    psi2 = clamp(inverse_gamma(rng, 1.0, 1.0 / hs.nu + phi2 / (2.0 * lam_col)))
    lambda2, xi = {}, {}
    for c in hs.lambda2:
        mask = hs.classes == c
        kc = int(mask.sum())
        lambda2[c] = float(clamp(inverse_gamma(rng, (kc + 1) / 2.0, 1.0 / hs.xi[c] + np.sum(phi2[mask] / (2.0 * psi2[mask])))))
    nu = clamp(inverse_gamma(rng, 1.0, 1.0 + 1.0 / psi2))
    for c in hs.lambda2:
        xi[c] = float(clamp(inverse_gamma(rng, 1.0, 1.0 + 1.0 / lambda2[c])))
    return HorseshoeState(psi2, nu, lambda2, xi, hs.classes)


def effective_sample_size(x: np.ndarray) -> np.ndarray:
    """ESS per column using Geyer's initial positive sequence."""
    x = np.atleast_2d(np.asarray(x, dtype=float).T).T
    n, m = x.shape
    out = np.full(m, float(n))
    if n < 4:
        return out
    centred = x - x.mean(axis=0)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centred, n=nfft, axis=0)
    acov = np.fft.irfft(f * np.conj(f), n=nfft, axis=0)[:n] / n
    for col in range(m):
        if acov[0, col] <= 0:
            continue
        rho = acov[:, col] / acov[0, col]
        tau = -1.0
        for t in range(0, n - 1, 2):
            pair = rho[t] + rho[t + 1]
            if pair < 0:
                break
            tau += 2.0 * pair
        out[col] = n / max(tau, 1.0 / n)
    return out


def run_equation_mcmc(pl: PluginLikelihood, cfg: McmcConfig, rng: np.random.Generator | None = None,
                      hs: HorseshoeState | None = None, freeze_scales: bool = False) -> ChainDraws:
    """Alternate A | scales and scales | A; keep every ``thin``-th draw after burn-in."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    k = pl.k
    hs = hs or HorseshoeState.initial(np.full(k, "A"))
    zero = np.zeros(k)
    A_draws = np.empty((cfg.n_save, k))
    psi2_draws = np.empty((cfg.n_save, k))
    lambda2_draws = np.empty(cfg.n_save)
    total = cfg.n_burn + cfg.n_save * cfg.thin
    kept = 0
    for it in range(total):
        A = conditional_A_draw(pl, zero, hs.variances(), rng)
        if not freeze_scales:
            hs = horseshoe_gibbs_step(A, hs, rng)
        if it >= cfg.n_burn and (it - cfg.n_burn) % cfg.thin == cfg.thin - 1:
            A_draws[kept] = A
            psi2_draws[kept] = hs.psi2
            lambda2_draws[kept] = next(iter(hs.lambda2.values()))
            kept += 1
    if not np.all(np.isfinite(A_draws)):
        raise SamplerError("non-finite coefficient draws")
    return ChainDraws(A_draws, psi2_draws, lambda2_draws, effective_sample_size(A_draws))

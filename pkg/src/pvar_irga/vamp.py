"""Vector approximate message passing for a Gaussian linear model.

The coefficient prior is Gaussian conditional on Horseshoe scales; those
scales and the noise variance are refreshed by EM steps once per cycle.  The
linear-model step works on the SVD of the design so that no K x K system is
ever solved.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .horseshoe import CLAMP_HI, CLAMP_LO, HorseshoeState, clamp

A_SIGMA = 0.01
B_SIGMA = 0.01
SIGMA2_FLOOR = 1e-10


@dataclass
class VampConfig:
    tol: float = 1e-6
    max_iter: int = 500
    damping: float = 0.9
    zeta_init: float = 10.0
    xi_init: np.ndarray | None = None
    a_sigma: float = A_SIGMA
    b_sigma: float = B_SIGMA
    learn_sigma2: bool = True
    learn_scales: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if int(self.max_iter) < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if not self.zeta_init > 0:
            raise ValueError("zeta_init must be positive")
        self.max_iter = int(self.max_iter)


@dataclass(frozen=True)
class SvdCache:
    U: np.ndarray
    D: np.ndarray
    V: np.ndarray

    @classmethod
    def from_matrix(cls, Z: np.ndarray, rtol: float = 1e-12) -> "SvdCache":
        U, D, Vt = np.linalg.svd(np.asarray(Z, dtype=float), full_matrices=False)
        if D.size == 0:
            return cls(U, D, Vt.T)
        r = int(np.sum(D > rtol * D[0]))
        return cls(U[:, :r], D[:r], Vt[:r].T)

    @property
    def K(self) -> int:
        return self.V.shape[0]

    @property
    def rank(self) -> int:
        return self.D.size


class ClampCounter:
    """Counts how often a variance-like quantity had to be clamped."""

    def __init__(self):
        self.count = 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.clip(x, CLAMP_LO, CLAMP_HI)
        self.count += int(np.sum(out != x))
        return out if out.ndim else float(out)


@dataclass
class VampState:
    xi: np.ndarray
    zeta: float
    beta_bar: np.ndarray
    s: float
    xi_star: np.ndarray
    zeta_star: float
    beta_bar_star: np.ndarray
    s_star: float
    sigma2: float


@dataclass
class ApproxPosterior:
    mean: np.ndarray
    var_scalar: float
    sigma2_hat: float
    converged: bool = True
    n_iter: int = 0
    n_clamped: int = 0
    horseshoe: HorseshoeState | None = None
    trace: list = field(default_factory=list)
    state: VampState | None = None

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "delta_sq", "s", "sigma2"])
            w.writerows(self.trace)


def vamp_denoise(xi, zeta, prior_var, counter: ClampCounter | None = None):
    """Posterior mean and average variance of beta_i ~ N(0, v_i) observed as xi_i = beta_i + N(0, zeta)."""
    counter = counter or ClampCounter()
    v = np.asarray(prior_var, dtype=float)
    xi = np.asarray(xi, dtype=float)
    with np.errstate(invalid="ignore"):
        w = np.where(np.isinf(v), 1.0, v / (v + zeta))
    beta_bar = w * xi
    s = counter(np.mean(w * zeta)) if v.size else 0.0
    return beta_bar, s


def vamp_extrinsic(mean_a, var_a, mean_b, var_b, counter: ClampCounter | None = None):
    """Divide Gaussian belief ``a`` by incoming message ``b``; returns the outgoing message."""
    counter = counter or ClampCounter()
    prec = 1.0 / var_a - 1.0 / var_b
    if prec < CLAMP_LO:
        counter.count += 1
        prec = CLAMP_LO
    zeta_out = counter(1.0 / prec)
    xi_out = zeta_out * (np.asarray(mean_a) / var_a - np.asarray(mean_b) / var_b)
    return xi_out, zeta_out


def vamp_lmmse(xi_star, zeta_star, svd: SvdCache, y2, sigma2, counter: ClampCounter | None = None):
    """Posterior of beta* ~ N(xi*, zeta* I) under y2 ~ N(Z beta*, sigma2 I), Z = U diag(D) V'."""
    counter = counter or ClampCounter()
    D = svd.D
    g = D * zeta_star / (sigma2 + D * D * zeta_star)
    resid = svd.U.T @ y2 - D * (svd.V.T @ xi_star)
    beta_star = xi_star + svd.V @ (g * resid)
    s_star = zeta_star * (1.0 - np.sum(D * g) / svd.K)
    return beta_star, counter(s_star)


def em_update_sigma2(residual_ss, T_r, prior=(A_SIGMA, B_SIGMA)) -> float:
    a, b = prior
    return float(np.clip((2.0 * b + residual_ss) / (2.0 * a + T_r), SIGMA2_FLOOR, CLAMP_HI))


def em_update_horseshoe(beta_bar, hs: HorseshoeState, column_class=None, beta_var=None) -> HorseshoeState:
    """One EM refresh of the Horseshoe scales.

    ``beta_var`` (per-coordinate posterior variance) turns ``beta_bar**2`` into
    the second moment E[phi^2]; without it a coefficient at zero would pull its
    local scale to zero for good.  ``nu`` and ``xi`` are stored as the
    auxiliaries themselves, so their refresh is the reciprocal of
    E[1/nu] = 1/(1 + psi^-2) and E[1/xi] = 1/(1 + lambda^-2).
    Update order: local scales, global scales, auxiliaries.
    """
    classes = hs.classes if column_class is None else np.asarray(column_class, dtype=str)
    phi2 = np.asarray(beta_bar, dtype=float) ** 2
    if beta_var is not None:
        phi2 = phi2 + beta_var
    lam_col = np.empty(phi2.size)
    for c, lam2 in hs.lambda2.items():
        lam_col[classes == c] = lam2
    inv_psi2 = clamp(1.0 / (1.0 / hs.nu + phi2 / lam_col / 2.0))
    lambda2, xi = {}, {}
    for c in hs.lambda2:
        mask = classes == c
        inv_lam2 = clamp((mask.sum() + 1.0) / (2.0 / hs.xi[c] + np.sum(phi2[mask] * inv_psi2[mask])))
        lambda2[c] = float(clamp(1.0 / inv_lam2))
        xi[c] = float(clamp(1.0 + inv_lam2))
    nu = clamp(1.0 + inv_psi2)
    return HorseshoeState(clamp(1.0 / inv_psi2), nu, lambda2, xi, classes)


def vamp_fit(y2, Z2, config: VampConfig | None = None, column_class=None,
             hs: HorseshoeState | None = None, sigma2: float | None = None,
             svd: SvdCache | None = None) -> ApproxPosterior:
    """Gaussian approximation N(mean, var_scalar * I) to the posterior of the coefficients of ``Z2``."""
    config = config or VampConfig()
    y2 = np.asarray(y2, dtype=float)
    Z2 = np.asarray(Z2, dtype=float)
    T_r, K = Z2.shape
    prior = (config.a_sigma, config.b_sigma)
    if K == 0:
        return ApproxPosterior(np.zeros(0), 0.0, em_update_sigma2(y2 @ y2, T_r, prior), True, 0, 0, hs)

    if column_class is None:
        column_class = np.full(K, "B")
    hs = hs or HorseshoeState.initial(column_class)
    if sigma2 is None:
        sigma2 = float(clamp(y2 @ y2 / T_r))
    svd = svd or SvdCache.from_matrix(Z2)
    counter = ClampCounter()
    d = config.damping

    xi = np.zeros(K) if config.xi_init is None else np.asarray(config.xi_init, dtype=float).copy()
    zeta = float(config.zeta_init)
    xi_star, zeta_star = None, None
    beta_prev = None
    trace = []
    converged = False
    it = 0
    beta_bar, s = xi, zeta
    frob2 = float(np.sum(svd.D ** 2))
    for it in range(1, config.max_iter + 1):
        prior_var = hs.variances()
        beta_bar, s = vamp_denoise(xi, zeta, prior_var, counter)
        coord_var = zeta * prior_var / (prior_var + zeta)
        new_xi_star, new_zeta_star = vamp_extrinsic(beta_bar, s, xi, zeta, counter)
        if xi_star is None or d == 1.0:
            xi_star, zeta_star = new_xi_star, new_zeta_star
        else:
            xi_star = d * new_xi_star + (1 - d) * xi_star
            zeta_star = d * new_zeta_star + (1 - d) * zeta_star

        beta_star, s_star = vamp_lmmse(xi_star, zeta_star, svd, y2, sigma2, counter)
        new_xi, new_zeta = vamp_extrinsic(beta_star, s_star, xi_star, zeta_star, counter)
        xi = d * new_xi + (1 - d) * xi
        zeta = d * new_zeta + (1 - d) * zeta

        if config.learn_sigma2:
            # expected residual sum of squares under the belief N(beta_bar, s I)
            resid = y2 - Z2 @ beta_bar
            sigma2 = em_update_sigma2(resid @ resid + s * frob2, T_r, prior)
        if config.learn_scales:
            hs = em_update_horseshoe(beta_bar, hs, beta_var=coord_var)

        delta = np.inf if beta_prev is None else float(np.sum((beta_bar - beta_prev) ** 2))
        trace.append((it, delta, s, sigma2))
        beta_prev = beta_bar
        if delta < config.tol:
            converged = True
            break

    state = VampState(xi, zeta, beta_bar, s, xi_star, zeta_star, beta_star, s_star, sigma2)
    return ApproxPosterior(beta_bar, float(s), float(sigma2), converged, it, counter.count, hs, trace, state)

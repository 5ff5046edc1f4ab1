"""Equation-by-equation estimation of the panel VAR and assembly of system draws.

Each equation is rotated, its other-country/contemporaneous block is
approximated by VAMP, and its own-lag block is sampled by Gibbs conditional on
that approximation.  System draws stack the structural rows back into the
reduced form y_t = Phi (y_{t-1}', ..., y_{t-p}')' + U H^{1/2} eta_t.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .gibbs import ChainDraws, McmcConfig, PluginLikelihood, run_equation_mcmc
from .panel_data import PanelDataset, build_equation_design
from .rng import derive_rng
from .rotation import qr_rotation
from .vamp import ApproxPosterior, VampConfig, vamp_fit

log = logging.getLogger(__name__)


class EstimationError(RuntimeError):
    pass


@dataclass
class EquationPosterior:
    country: int
    equation: int
    target: int
    chain: ChainDraws
    approx: ApproxPosterior
    x_lag: np.ndarray
    x_var: np.ndarray
    z_lag: np.ndarray
    z_var: np.ndarray
    seconds: float = 0.0

    @property
    def k(self) -> int:
        return self.x_var.size

    @property
    def K(self) -> int:
        return self.z_var.size

    @property
    def column_class(self) -> np.ndarray:
        return np.where(self.z_lag > 0, "B", "U")


@dataclass
class PvarPosterior:
    n: int
    p: int
    M: tuple
    equations: list = field(default_factory=list)

    @property
    def n_save(self) -> int:
        return min(e.chain.n_save for e in self.equations)

    def by_target(self) -> list:
        return sorted(self.equations, key=lambda e: e.target)


@dataclass(frozen=True)
class SystemDraw:
    Phi: np.ndarray
    U: np.ndarray
    H: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def p(self) -> int:
        return self.Phi.shape[1] // self.n

    @property
    def Sigma(self) -> np.ndarray:
        return (self.U * self.H) @ self.U.T

    @property
    def impact(self) -> np.ndarray:
        """U H^{1/2}: response of y_t to unit orthogonal shocks."""
        return self.U * np.sqrt(self.H)


def estimate_equation(ds: PanelDataset, i: int, j: int, p: int, vamp_cfg: VampConfig,
                      mcmc_cfg: McmcConfig) -> EquationPosterior:
    start = time.perf_counter()
    design = build_equation_design(ds, i, j, p)
    rot = qr_rotation(design)
    approx = vamp_fit(rot.y2, rot.Z2, vamp_cfg, design.column_class)
    if not approx.converged:
        log.warning("VAMP did not converge for equation (%d, %d) after %d iterations", i, j, approx.n_iter)
    pl = PluginLikelihood.from_rotation(rot, approx)
    chain = run_equation_mcmc(pl, mcmc_cfg, derive_rng(mcmc_cfg.seed, "mcmc", i, j))
    return EquationPosterior(i, j, design.target, chain, approx, design.x_lag, design.x_var,
                             design.z_lag, design.z_var, time.perf_counter() - start)


def estimate_pvar(ds: PanelDataset, p: int, vamp_cfg: VampConfig | None = None,
                  mcmc_cfg: McmcConfig | None = None, threads: int = 1) -> PvarPosterior:
    vamp_cfg = vamp_cfg or VampConfig()
    mcmc_cfg = mcmc_cfg or McmcConfig()
    jobs = [(i, j) for i in range(ds.N) for j in range(ds.M[i])]

    def run(job):
        i, j = job
        try:
            return estimate_equation(ds, i, j, p, vamp_cfg, mcmc_cfg)
        except Exception as exc:
            raise EstimationError(f"equation ({i}, {j}) [{ds.variables[ds.offsets[i] + j].column}]: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            eqs = list(pool.map(run, jobs))
    else:
        eqs = [run(job) for job in jobs]
    return PvarPosterior(ds.n, p, ds.M, eqs)


def assemble_system_draw(post: PvarPosterior, draw_index: int, rng: np.random.Generator | None = None,
                         propagate_B_uncertainty: bool = True) -> SystemDraw:
    n, p = post.n, post.p
    if not 0 <= draw_index < post.n_save:
        raise IndexError(f"draw_index {draw_index} outside [0, {post.n_save})")
    if propagate_B_uncertainty and rng is None:
        raise ValueError("rng is required when propagating uncertainty of the approximated block")
    Phi_s = np.zeros((n, n * p))
    L = np.zeros((n, n))
    H = np.empty(n)
    for eq in post.equations:
        a = eq.target
        A = eq.chain.A_draws[draw_index]
        Phi_s[a, (eq.x_lag - 1) * n + eq.x_var] = A
        if eq.K:
            B = eq.approx.mean
            if propagate_B_uncertainty:
                B = B + np.sqrt(eq.approx.var_scalar) * rng.standard_normal(eq.K)
            lagged = eq.z_lag > 0
            Phi_s[a, (eq.z_lag[lagged] - 1) * n + eq.z_var[lagged]] = B[lagged]
            L[a, eq.z_var[~lagged]] = B[~lagged]
        H[a] = eq.approx.sigma2_hat
    U = linalg.solve_triangular(np.eye(n) - L, np.eye(n), lower=True, unit_diagonal=True)
    return SystemDraw(U @ Phi_s, U, H)


def structural_form(sd: SystemDraw):
    """Invert the assembly: returns (Phi_s, L) with L strictly lower triangular."""
    U_inv = linalg.solve_triangular(sd.U, np.eye(sd.n), lower=True, unit_diagonal=True)
    return U_inv @ sd.Phi, np.eye(sd.n) - U_inv


def system_draws(post: PvarPosterior, rng: np.random.Generator, propagate_B_uncertainty: bool = True,
                 max_draws: int | None = None) -> list:
    count = post.n_save if max_draws is None else min(post.n_save, max_draws)
    idx = np.arange(count) if count == post.n_save else np.linspace(0, post.n_save - 1, count).astype(int)
    return [assemble_system_draw(post, int(d), rng, propagate_B_uncertainty) for d in idx]

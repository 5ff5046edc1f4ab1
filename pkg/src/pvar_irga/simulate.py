"""Synthetic sparse panel VARs with known coefficients."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy import linalg

from .panel_data import PanelDataset
from .pvar import SystemDraw
from .rng import derive_rng


class SimulationError(RuntimeError):
    pass


@dataclass
class SimulationSpec:
    N: int = 3
    M: int = 2
    p: int = 1
    T: int = 300
    sparsity: float = 0.1
    seed: int = 0
    own_lag: float = 0.5
    cross_scale: float = 0.2
    contemporaneous: float = 0.3
    noise_sd: float = 1.0
    burn: int = 200
    start: str = "2000-01"

    def __post_init__(self):
        if min(self.N, self.M, self.p, self.T) < 1:
            raise ValueError("N, M, p and T must be positive")
        if not 0 <= self.sparsity <= 1:
            raise ValueError("sparsity must lie in [0, 1]")


@dataclass
class Truth:
    Phi_structural: np.ndarray
    L: np.ndarray
    H: np.ndarray
    M: tuple

    @property
    def system(self) -> SystemDraw:
        n = self.L.shape[0]
        U = linalg.solve_triangular(np.eye(n) - self.L, np.eye(n), lower=True, unit_diagonal=True)
        return SystemDraw(U @ self.Phi_structural, U, self.H)

    def to_json(self) -> str:
        sd = self.system
        return json.dumps({
            "M": list(self.M),
            "Phi_structural": self.Phi_structural.tolist(),
            "L": self.L.tolist(),
            "H": self.H.tolist(),
            "Phi": sd.Phi.tolist(),
            "Sigma": sd.Sigma.tolist(),
            "spectral_radius": spectral_radius(sd.Phi),
        }, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Truth":
        d = json.loads(text)
        return cls(np.array(d["Phi_structural"]), np.array(d["L"]), np.array(d["H"]), tuple(d["M"]))


def companion(Phi: np.ndarray) -> np.ndarray:
    n = Phi.shape[0]
    p = Phi.shape[1] // n
    C = np.zeros((n * p, n * p))
    C[:n] = Phi
    C[n:, :-n] = np.eye(n * (p - 1))
    return C


def spectral_radius(Phi: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(companion(Phi)))))


def draw_truth(spec: SimulationSpec, rng: np.random.Generator, max_tries: int = 100) -> Truth:
    """Own first-lag diagonal ``own_lag``; every other lag coefficient and every
    below-diagonal contemporaneous coefficient is nonzero with probability
    ``sparsity``.  Redrawn until the reduced form is stable."""
    n, p = spec.N * spec.M, spec.p
    for _ in range(max_tries):
        Phi_s = np.zeros((n, n * p))
        mask = rng.random((n, n * p)) < spec.sparsity
        signs = rng.choice([-1.0, 1.0], size=(n, n * p))
        Phi_s[mask] = spec.cross_scale * signs[mask]
        Phi_s[np.arange(n), np.arange(n)] = spec.own_lag
        L = np.zeros((n, n))
        low = np.tril(rng.random((n, n)) < spec.sparsity, k=-1)
        L[low] = spec.contemporaneous * rng.choice([-1.0, 1.0], size=int(low.sum()))
        truth = Truth(Phi_s, L, np.full(n, spec.noise_sd ** 2), (spec.M,) * spec.N)
        if spectral_radius(truth.system.Phi) < 1:
            return truth
    raise SimulationError(f"{max_tries} consecutive unstable draws; use smaller coefficients or sparsity")


def simulate_path(sd: SystemDraw, T: int, rng: np.random.Generator, burn: int = 200) -> np.ndarray:
    n, p = sd.n, sd.p
    total = T + burn
    Y = np.zeros((total + p, n))
    shocks = rng.standard_normal((total, n)) @ sd.impact.T
    for t in range(p, total + p):
        lags = Y[t - p:t][::-1].reshape(-1)
        Y[t] = sd.Phi @ lags + shocks[t - p]
    return Y[-T:]


def simulate_panel(spec: SimulationSpec):
    """Returns ``(dataset, truth)``; identical for identical specs."""
    truth = draw_truth(spec, derive_rng(spec.seed, "simulate", "truth"))
    Y = simulate_path(truth.system, spec.T, derive_rng(spec.seed, "simulate", "path"), spec.burn)
    ds = PanelDataset.from_array(Y, (spec.M,) * spec.N, start=spec.start)
    return ds, truth


def spec_dict(spec: SimulationSpec) -> dict:
    return asdict(spec)

"""State of the Horseshoe hierarchy in its inverse-Gamma auxiliary form.

Each coefficient has prior variance ``psi2[i] * lambda2[class[i]]``.  Columns
are grouped into classes that share one global scale; an equation uses class
``"A"`` for its own-lag block and ``"B"`` / ``"U"`` for lagged other-country
and contemporaneous columns.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

CLAMP_LO = 1e-12
CLAMP_HI = 1e12


def clamp(x):
    return np.clip(x, CLAMP_LO, CLAMP_HI)


@dataclass(frozen=True)
class HorseshoeState:
    psi2: np.ndarray
    nu: np.ndarray
    lambda2: dict
    xi: dict
    classes: np.ndarray

    def __post_init__(self):
        values = [self.psi2, self.nu, list(self.lambda2.values()), list(self.xi.values())]
        if any(np.any(~(np.asarray(v, dtype=float) > 0)) for v in values):
            raise ValueError("Horseshoe scales must be strictly positive")
        missing = set(np.unique(self.classes)) - set(self.lambda2)
        if missing:
            raise ValueError(f"no global scale for column classes {sorted(missing)}")

    @classmethod
    def initial(cls, classes, psi2=1.0, lambda2=1.0) -> "HorseshoeState":
        classes = np.asarray(classes, dtype=str)
        labels = list(dict.fromkeys(classes.tolist()))
        K = classes.size
        return cls(
            psi2=np.full(K, float(psi2)),
            nu=np.ones(K),
            lambda2={c: float(lambda2) for c in labels},
            xi={c: 1.0 for c in labels},
            classes=classes,
        )

    @property
    def K(self) -> int:
        return self.psi2.size

    def global_per_column(self) -> np.ndarray:
        out = np.empty(self.K)
        for c, lam2 in self.lambda2.items():
            out[self.classes == c] = lam2
        return out

    def variances(self) -> np.ndarray:
        """Conditional prior variance of every coefficient."""
        return self.psi2 * self.global_per_column()

    # Named accessors for the two classes used on the approximated block.
    @property
    def lambda2_B(self) -> float:
        return self.lambda2.get("B", np.nan)

    @property
    def lambda2_U(self) -> float:
        return self.lambda2.get("U", np.nan)

    @property
    def xi_aux_B(self) -> float:
        return self.xi.get("B", np.nan)

    @property
    def xi_aux_U(self) -> float:
        return self.xi.get("U", np.nan)

    def with_(self, **kw) -> "HorseshoeState":
        return replace(self, **kw)


def inverse_gamma(rng: np.random.Generator, shape, scale):
    """Draw from IG(shape, scale) (density proportional to x^(-shape-1) exp(-scale/x))."""
    return np.asarray(scale, dtype=float) / rng.standard_gamma(shape, size=np.shape(scale))


def prior_draw(rng: np.random.Generator, classes) -> HorseshoeState:
    """Draw the full hierarchy from the Horseshoe prior."""
    classes = np.asarray(classes, dtype=str)
    K = classes.size
    nu = inverse_gamma(rng, 0.5, np.ones(K))
    psi2 = inverse_gamma(rng, 0.5, 1.0 / nu)
    lam, xi = {}, {}
    for c in dict.fromkeys(classes.tolist()):
        xi[c] = float(inverse_gamma(rng, 0.5, 1.0))
        lam[c] = float(inverse_gamma(rng, 0.5, 1.0 / xi[c]))
    return HorseshoeState(clamp(psi2), clamp(nu), {c: float(clamp(v)) for c, v in lam.items()},
                          {c: float(clamp(v)) for c, v in xi.items()}, classes)

"""
Smooth surrogate for the Dirichlet kernel fitted to Monte Carlo histograms.

The model keeps the separable shape of the envelope,

    p^D(t, x, y) ~ w(t, x) w(t, y) p(t, x - y),   w = q~ exp(f(t, rho)),

and learns f from log(density / (q~ q~ p)) with a ridge regression on the
features phi_j(u) = (1 + u)^(-j), u = rho / t^(1/alpha), summed over both
end points. A linear model on phi(x) + phi(y) splits exactly into
f(x) + f(y) with f(u) = predict(2 phi(u)) / 2.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import joblib
import numpy as np
from sklearn.linear_model import Ridge
from sklearn.pipeline import Pipeline, make_pipeline
from sklearn.preprocessing import StandardScaler

from src.analysis.envelope import _q_from_rho
from src.errors import ContractError, QualityError
from src.geometry.domain import Domain
from src.montecarlo.paths import DensityEstimate
from src.stable.params import StableParams
from src.stable.profile import profile_for

logger = logging.getLogger(__name__)

DEFAULT_MAX_REL_CI = 0.25


def _features(alpha: float, rho: np.ndarray, t: np.ndarray, n_features: int) -> np.ndarray:
    u = np.asarray(rho, dtype=float) / np.asarray(t, dtype=float) ** (1.0 / alpha)
    powers = np.arange(1, n_features + 1)
    with np.errstate(over='ignore', divide='ignore'):
        return (1.0 + u[..., None]) ** (-powers)


@dataclass
class RatioSurface:
    """
    Fitted log-ratio model.

    Attributes:
        params: stable parameters
        domain: the open set the histograms were killed on
        model: StandardScaler + Ridge pipeline on summed features
        median_rel_ci: median relative 95% half-width of the cells used
        n_cells: number of (time, cell) pairs in the fit
        residual: root-mean-square log residual of the fit
    """
    params: StableParams
    domain: Domain
    model: Pipeline
    n_features: int = 4
    median_rel_ci: float = np.inf
    n_cells: int = 0
    residual: float = np.nan
    sources: List[List[float]] = field(default_factory=list)

    @classmethod
    def fit(cls, params: StableParams, domain: Domain, estimates: Sequence[DensityEstimate],
            n_features: int = 4, ridge: float = 1e-3, min_hits: int = 50) -> 'RatioSurface':
        """
        Fit the surface to one or more histogram estimates.

        Cells with fewer than min_hits hits, or whose centre lies outside D,
        are left out; each kept cell is weighted by its hit count.
        """
        profile = profile_for(params)
        rows, targets, weights, rel_ci = [], [], [], []
        for est in estimates:
            rho_x = float(domain.distance(est.start))
            rho_y = domain.distance(est.centers)
            rel = est.relative_ci
            for i, t in enumerate(est.times):
                keep = (est.hits[i] >= min_hits) & (rho_y > 0.0)
                if not keep.any():
                    continue
                q = _q_from_rho(params.alpha, rho_x, t) * _q_from_rho(params.alpha, rho_y[keep], t)
                base = q * profile.kernel(t, est.centers[keep] - est.start)
                rows.append(_features(params.alpha, rho_x, t, n_features)
                            + _features(params.alpha, rho_y[keep], t, n_features))
                targets.append(np.log(est.density[i, keep] / base))
                weights.append(est.hits[i, keep].astype(float))
                rel_ci.append(rel[i, keep])
        if not rows:
            raise QualityError(f"No histogram cell reached {min_hits} hits; nothing to fit")
        X, y, w = np.vstack(rows), np.concatenate(targets), np.concatenate(weights)
        model = make_pipeline(StandardScaler(), Ridge(alpha=ridge))
        model.fit(X, y, ridge__sample_weight=w)
        residual = float(np.sqrt(np.average((model.predict(X) - y) ** 2, weights=w)))
        surface = cls(params=params, domain=domain, model=model, n_features=n_features,
                      median_rel_ci=float(np.median(np.concatenate(rel_ci))),
                      n_cells=len(y), residual=residual,
                      sources=[est.start.tolist() for est in estimates])
        logger.info(f"Ratio surface fitted on {surface.n_cells} cells: rms log residual "
                    f"{residual:.3f}, median relative CI {surface.median_rel_ci:.3f}")
        return surface

    def log_weight(self, t, rho) -> np.ndarray:
        """f(t, rho): the per-point log correction."""
        rho = np.asarray(rho, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), rho.shape)
        phi = _features(self.params.alpha, rho, t, self.n_features)
        flat = phi.reshape(-1, self.n_features)
        return 0.5 * self.model.predict(2.0 * flat).reshape(rho.shape)

    def log_weight_slope(self, t, rho, step: float = 0.05) -> np.ndarray:
        """d f / d rho by central differences with step * t^(1/alpha)."""
        rho = np.asarray(rho, dtype=float)
        delta = step * np.asarray(t, dtype=float) ** (1.0 / self.params.alpha)
        lo = np.maximum(rho - delta, 0.0)
        return (self.log_weight(t, rho + delta) - self.log_weight(t, lo)) / (rho + delta - lo)

    def slope_noise(self, t, rho, step: float = 0.05) -> float:
        """Largest change of the slope when the difference step is halved."""
        coarse = self.log_weight_slope(t, rho, step)
        fine = self.log_weight_slope(t, rho, step / 2.0)
        finite = np.isfinite(coarse) & np.isfinite(fine)
        return float(np.max(np.abs(coarse - fine)[finite], initial=0.0))

    def require_quality(self, max_rel_ci: float = DEFAULT_MAX_REL_CI) -> None:
        if not self.median_rel_ci <= max_rel_ci:
            raise QualityError(f"Median relative confidence width {self.median_rel_ci:.3f} "
                               f"exceeds {max_rel_ci}")

    def describe(self) -> Dict[str, Any]:
        return {'n_features': self.n_features, 'median_rel_ci': self.median_rel_ci,
                'n_cells': self.n_cells, 'residual': self.residual, 'sources': self.sources}

    def save(self, path: str) -> None:
        joblib.dump({'params': self.params.to_dict(), 'domain': self.domain.to_dict(),
                     'model': self.model, **self.describe()}, path)

    @classmethod
    def load(cls, path: str) -> 'RatioSurface':
        try:
            data = joblib.load(path)
        except FileNotFoundError:
            logging.error(f"No ratio surface found at {path}")
            raise
        params = StableParams.from_dict(data['params'])
        if not isinstance(data.get('model'), Pipeline):
            raise ContractError(f"{path} does not hold a fitted surface")
        return cls(params=params, domain=Domain.from_dict(data['domain'], params.d),
                   model=data['model'], n_features=data['n_features'],
                   median_rel_ci=data['median_rel_ci'], n_cells=data['n_cells'],
                   residual=data['residual'], sources=data['sources'])

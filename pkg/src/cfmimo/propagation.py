"""Large-scale propagation: path loss, correlated shadow fading, link gains.

Two empirical models are provided.

Three-slope (2-D distance d, gains in dB):
    PL(d) = -81.2                      d < 10 m
          = -61.2 - 20 log10(d)        10 m <= d < 50 m
          = -35.7 - 35 log10(d) + F    d >= 50 m
with F ~ N(0, 8^2) applied only on the far branch. Shadowing terms are
correlated through a two-sided sum of an AP field and a UE field with
E{F_lu F_ji} = (8^2/2) (2^(-d_ue/100) + 2^(-d_ap/100)).

Urban microcell (3-D distance d3):
    PL(d3) = -30.5 - 36.7 log10(d3) + F,  F ~ N(0, 4^2)
with shadowing independent across APs and correlated across UEs at one AP:
E{F_lu F_li} = 4^2 * 2^(-d_ue/9).

Link gain beta = 10^((PL + F)/10). By default channel covariances are
beta * I_M (uncorrelated antennas, ``cov`` left as None); arbitrary
Hermitian PSD per-link covariances can be attached for the general model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalError
from .topology import Topology, ap_ue_3d, ap_ue_horizontal, wrap_distance_matrix

THREE_SLOPE_BREAK_NEAR_M = 10.0
THREE_SLOPE_BREAK_FAR_M = 50.0


@dataclass(frozen=True)
class LargeScaleModel:
    """Path-loss model selector plus shadowing parameters."""

    kind: str                # "three_slope" | "umi"
    shadow_std_db: float
    decorrelation_m: float

    @classmethod
    def three_slope(cls):
        return cls(kind="three_slope", shadow_std_db=8.0, decorrelation_m=100.0)

    @classmethod
    def urban_micro(cls):
        return cls(kind="umi", shadow_std_db=4.0, decorrelation_m=9.0)

    @classmethod
    def from_kind(cls, kind):
        if kind == "three_slope":
            return cls.three_slope()
        if kind == "umi":
            return cls.urban_micro()
        raise ConfigError(f"unknown propagation model {kind!r}")


@dataclass
class LargeScale:
    """Per-link large-scale state: gains beta (L, U) and antenna count.

    ``cov`` is None for the default beta * I_M covariance, otherwise an
    (L, U, M, M) stack of Hermitian PSD matrices with tr(cov)/M == beta.
    """

    beta: np.ndarray
    n_antennas: int = 1
    cov: np.ndarray | None = None
    _cov_sqrt: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_aps(self) -> int:
        return self.beta.shape[0]

    @property
    def n_ues(self) -> int:
        return self.beta.shape[1]

    @property
    def uncorrelated(self) -> bool:
        return self.cov is None

    def cov_sqrt(self):
        """Batched PSD square roots of ``cov`` (cached); requires cov set."""
        if self.cov is None:
            raise ValueError("cov_sqrt is only defined for explicit covariances")
        if self._cov_sqrt is None:
            self._cov_sqrt = psd_sqrt(self.cov)
        return self._cov_sqrt


def pathloss_three_slope(d):
    """Three-slope path loss in dB from 2-D distance in metres (no shadowing)."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ConfigError("distances must be non-negative")
    with np.errstate(divide="ignore"):
        logd = np.log10(np.maximum(d, 1e-12))
    mid = -61.2 - 20.0 * logd
    far = -35.7 - 35.0 * logd
    pl = np.where(d < THREE_SLOPE_BREAK_NEAR_M, -81.2,
                  np.where(d < THREE_SLOPE_BREAK_FAR_M, mid, far))
    return pl if pl.shape else float(pl)


def pathloss_umi(d3):
    """Urban-microcell path loss in dB from 3-D distance in metres."""
    d3 = np.asarray(d3, dtype=float)
    if np.any(d3 <= 0):
        raise ConfigError("3-D distances must be positive for the UMi model")
    pl = -30.5 - 36.7 * np.log10(d3)
    return pl if pl.shape else float(pl)


def _psd_factor(corr, what):
    """Symmetric factor S with S S^T = corr; eigenvalues clipped at zero.

    Raises if the matrix is indefinite beyond numerical noise, since that
    means the requested correlation structure is not realisable.
    """
    vals, vecs = np.linalg.eigh(corr)
    floor = -1e-8 * max(vals[-1], 1.0)
    if vals[0] < floor:
        raise NumericalError(
            f"{what} correlation matrix is not PSD: min eigenvalue {vals[0]:.3e}")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_shadowing(topo: Topology, model: LargeScaleModel, seed=None, n=None):
    """Draw correlated shadow fading in dB, shape (L, U) (or (n, L, U)).

    Three-slope: F = (std/sqrt(2)) (a_l + b_u) with a ~ N(0, R_ap) across APs
    and b ~ N(0, R_ue) across UEs, R built from 2^(-dist/decorr) on wrap
    distances. UMi: independent N(0, std^2 R_ue) rows per AP.
    """
    rng = np.random.default_rng(seed)
    L, U = topo.n_aps, topo.n_ues
    draws = 1 if n is None else int(n)
    d_ue = wrap_distance_matrix(topo.ue_positions, topo.ue_positions, topo.side)
    r_ue = np.power(2.0, -d_ue / model.decorrelation_m)
    s_ue = _psd_factor(r_ue, "UE shadowing")
    if model.kind == "three_slope":
        d_ap = wrap_distance_matrix(topo.ap_positions, topo.ap_positions, topo.side)
        r_ap = np.power(2.0, -d_ap / model.decorrelation_m)
        s_ap = _psd_factor(r_ap, "AP shadowing")
        a = rng.standard_normal((draws, L)) @ s_ap.T
        b = rng.standard_normal((draws, U)) @ s_ue.T
        shadow = (model.shadow_std_db / np.sqrt(2.0)) * (a[:, :, None] + b[:, None, :])
    elif model.kind == "umi":
        z = rng.standard_normal((draws, L, U))
        shadow = model.shadow_std_db * (z @ s_ue.T)
    else:
        raise ConfigError(f"unknown propagation model {model.kind!r}")
    return shadow[0] if n is None else shadow


def large_scale_gains(topo: Topology, model: LargeScaleModel, shadowing,
                      n_antennas=1):
    """Combine path loss and shadowing into linear link gains beta (L, U).

    For the three-slope model the shadowing term only enters on the far
    branch (d >= 50 m); the UMi model applies it on every link and uses the
    3-D distance. Covariances default to beta * I over ``n_antennas``.
    """
    shadowing = np.asarray(shadowing, dtype=float)
    if shadowing.shape != (topo.n_aps, topo.n_ues):
        raise ConfigError(
            f"shadowing shape {shadowing.shape} does not match (L, U)="
            f"{(topo.n_aps, topo.n_ues)}")
    if model.kind == "three_slope":
        d = ap_ue_horizontal(topo)
        pl = pathloss_three_slope(d)
        f = np.where(d >= THREE_SLOPE_BREAK_FAR_M, shadowing, 0.0)
    elif model.kind == "umi":
        d3 = ap_ue_3d(topo)
        pl = pathloss_umi(d3)
        f = shadowing
    else:
        raise ConfigError(f"unknown propagation model {model.kind!r}")
    beta = np.power(10.0, (pl + f) / 10.0)
    return LargeScale(beta=beta, n_antennas=int(n_antennas), cov=None)


def with_covariance(ls: LargeScale, cov):
    """Attach explicit per-link Hermitian PSD covariances (L, U, M, M).

    The per-link gain is kept consistent: beta is recomputed as tr(cov)/M.
    """
    cov = np.asarray(cov, dtype=complex)
    if cov.ndim != 4 or cov.shape[:2] != ls.beta.shape or cov.shape[2] != cov.shape[3]:
        raise ConfigError(f"covariance stack has shape {cov.shape}, "
                          f"expected (L, U, M, M) with (L, U)={ls.beta.shape}")
    herm_err = np.abs(cov - np.conj(np.swapaxes(cov, -1, -2))).max()
    if herm_err > 1e-10 * max(1.0, np.abs(cov).max()):
        raise ConfigError("covariances must be Hermitian")
    m = cov.shape[2]
    beta = np.trace(cov, axis1=2, axis2=3).real / m
    return LargeScale(beta=beta, n_antennas=m, cov=cov)


def psd_sqrt(mats):
    """Batched Hermitian PSD square root via eigendecomposition."""
    vals, vecs = np.linalg.eigh(mats)
    floor = -1e-8 * max(float(vals.max()), 1.0)
    if float(vals.min()) < floor:
        raise NumericalError(
            f"covariance not PSD: min eigenvalue {float(vals.min()):.3e}")
    root = np.sqrt(np.clip(vals, 0.0, None))
    return np.einsum("...ij,...j,...kj->...ik", vecs, root, np.conj(vecs))


def noise_power_w(noise_dbm):
    """Thermal noise power in watts from its dBm figure."""
    return float(10.0 ** ((noise_dbm - 30.0) / 10.0))

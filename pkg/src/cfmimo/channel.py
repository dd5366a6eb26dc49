"""Pilot assignment, channel realisations and MMSE channel training.

Every UE transmits one of tau mutually orthogonal pilots of length tau
(||phi||^2 = tau). After despreading against pilot t, AP l observes

    r_{l,t} = sum_{i: t_i = t} sqrt(p_i^p tau) h_{li} + n_{l,t},

with n ~ CN(0, sigma^2 I_M). The Gram matrix of that observation is

    Psi_{l,t} = tau sum_{i: t_i = t} p_i^p B_{li} + sigma^2 I_M,

and the MMSE estimate of h_{lu} (pilot t_u) is

    hhat_{lu} = sqrt(p_u^p tau) B_{lu} Psi_{l,t_u}^{-1} r_{l,t_u},

distributed CN(0, p_u^p tau B_{lu} Psi^{-1} B_{lu}). With B = beta I all of
this collapses to scalars, which is the fast path used at network scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .propagation import LargeScale


@dataclass(frozen=True)
class PilotPlan:
    """Pilot indices per UE; ``pilot_of[u]`` in 0..tau-1."""

    tau: int
    pilot_of: np.ndarray

    @property
    def n_ues(self) -> int:
        return self.pilot_of.shape[0]

    def copilot(self, u):
        """Indices of UEs sharing UE u's pilot (u itself included)."""
        return np.flatnonzero(self.pilot_of == self.pilot_of[u])

    def users_on_pilot(self, t):
        return np.flatnonzero(self.pilot_of == t)

    def copilot_matrix(self):
        """(U, U) bool, True where two UEs share a pilot (diagonal True)."""
        return self.pilot_of[:, None] == self.pilot_of[None, :]


@dataclass
class ChannelRealization:
    """One small-scale draw, h of shape (L, U, M)."""

    h: np.ndarray

    @property
    def n_antennas(self) -> int:
        return self.h.shape[2]


@dataclass
class TrainingState:
    """Training statistics and estimates for one realisation.

    psi is (L, tau) real on the scalar path (Psi = psi I) or
    (L, tau, M, M) complex in general. est_cov is the per-link estimate
    covariance, (L, U) per-antenna variance on the scalar path or
    (L, U, M, M) in general.
    """

    psi: np.ndarray
    h_hat: np.ndarray
    est_cov: np.ndarray
    uncorrelated: bool


def assign_pilots(n_ues, tau, policy="round_robin", seed=None, tau_c=None):
    """Map UEs onto tau orthogonal pilots.

    round_robin hands out pilot u mod tau; random draws i.i.d. uniform
    indices. tau_c, when given, bounds tau by the coherence block length.
    """
    if tau < 1:
        raise ConfigError(f"tau must be at least 1, got {tau}")
    if tau_c is not None and tau > tau_c:
        raise ConfigError(f"tau={tau} exceeds coherence block tau_c={tau_c}")
    if n_ues < 1:
        raise ConfigError("need at least one UE")
    if policy == "round_robin":
        pilots = np.arange(n_ues, dtype=np.int64) % tau
    elif policy == "random":
        rng = np.random.default_rng(seed)
        pilots = rng.integers(0, tau, size=n_ues)
    else:
        raise ConfigError(f"unknown pilot policy {policy!r}")
    return PilotPlan(tau=int(tau), pilot_of=pilots)


def _as_power_vector(p, n, what):
    p = np.broadcast_to(np.asarray(p, dtype=float), (n,)).copy()
    if np.any(p < 0):
        raise ConfigError(f"{what} powers must be non-negative")
    return p


def pilot_gram(ls: LargeScale, plan: PilotPlan, p_pilot, sigma2):
    """Despread observation Gram Psi_{l,t} for every AP and pilot.

    Returns (L, tau) real scalars for B = beta I, else (L, tau, M, M).
    """
    p_pilot = _as_power_vector(p_pilot, ls.n_ues, "pilot")
    tau = plan.tau
    # per-pilot sums of p_i^p * B_li over the UEs on that pilot
    onehot = np.zeros((ls.n_ues, tau))
    onehot[np.arange(ls.n_ues), plan.pilot_of] = 1.0
    if ls.uncorrelated:
        return tau * (ls.beta * p_pilot[None, :]) @ onehot + sigma2
    m = ls.n_antennas
    acc = np.einsum("lumn,ut->ltmn", ls.cov * p_pilot[None, :, None, None], onehot)
    return tau * acc + sigma2 * np.eye(m)[None, None, :, :]


def sample_channels(ls: LargeScale, seed=None):
    """One i.i.d. small-scale realisation h_{lu} ~ CN(0, B_{lu})."""
    rng = np.random.default_rng(seed)
    L, U, m = ls.n_aps, ls.n_ues, ls.n_antennas
    z = (rng.standard_normal((L, U, m)) + 1j * rng.standard_normal((L, U, m)))
    z /= np.sqrt(2.0)
    if ls.uncorrelated:
        h = np.sqrt(ls.beta)[:, :, None] * z
    else:
        h = np.einsum("lumn,lun->lum", ls.cov_sqrt(), z)
    return ChannelRealization(h=h)


def received_pilot(real: ChannelRealization, plan: PilotPlan, p_pilot, sigma2,
                   seed=None):
    """Despread pilot observations r_{l,t}, shape (L, tau, M).

    Pilots with no assigned UE despread to pure noise.
    """
    rng = np.random.default_rng(seed)
    L, U, m = real.h.shape
    p_pilot = _as_power_vector(p_pilot, U, "pilot")
    tau = plan.tau
    noise = (rng.standard_normal((L, tau, m)) + 1j * rng.standard_normal((L, tau, m)))
    noise *= np.sqrt(sigma2 / 2.0)
    onehot = np.zeros((U, tau))
    onehot[np.arange(U), plan.pilot_of] = 1.0
    amp = np.sqrt(p_pilot * tau)
    signal = np.einsum("lum,ut->ltm", real.h * amp[None, :, None], onehot)
    return signal + noise


def mmse_estimate(r, ls: LargeScale, plan: PilotPlan, p_pilot, sigma2):
    """MMSE channel estimates for every (AP, UE) link from pilot data."""
    p_pilot = _as_power_vector(p_pilot, ls.n_ues, "pilot")
    tau = plan.tau
    psi = pilot_gram(ls, plan, p_pilot, sigma2)
    amp = np.sqrt(p_pilot * tau)  # per-UE pilot amplitude
    r_sel = r[:, plan.pilot_of, :]  # (L, U, M) observation on each UE's pilot
    if ls.uncorrelated:
        psi_sel = psi[:, plan.pilot_of]  # (L, U)
        if np.any(psi_sel <= 0):
            raise NumericalError("singular training system: Psi has a zero entry")
        scale = amp[None, :] * ls.beta / psi_sel
        h_hat = scale[:, :, None] * r_sel
        est_cov = (p_pilot * tau)[None, :] * ls.beta ** 2 / psi_sel
        return TrainingState(psi=psi, h_hat=h_hat, est_cov=est_cov,
                             uncorrelated=True)
    psi_sel = psi[:, plan.pilot_of]  # (L, U, M, M)
    try:
        filt = np.einsum("lumn,lunk->lumk", ls.cov, np.linalg.inv(psi_sel))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular training system: {exc}") from exc
    h_hat = amp[None, :, None] * np.einsum("lumn,lun->lum", filt, r_sel)
    est_cov = (p_pilot * tau)[None, :, None, None] * np.einsum(
        "lumn,lunk->lumk", filt, ls.cov)
    return TrainingState(psi=psi, h_hat=h_hat, est_cov=est_cov, uncorrelated=False)

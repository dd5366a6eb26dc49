"""Spectral-efficiency evaluation: closed form, Monte Carlo, statistics.

The uplink effective SINR uses the use-and-then-forget bound for MRC over
each UE's serving set A_u: with z_i = sum_{l in A_u} hhat_lu^H h_li,

    SINR_u = p_u^d |E z_u|^2
             / (sum_i p_i^d E|z_i|^2 - p_u^d |E z_u|^2 + sigma^2 E q_u),

q_u = sum_{l in A_u} ||hhat_lu||^2. The closed form expands the moments as

    E z_u   = p_u^p tau sum_l tr(B_lu Psi_l^{-1} B_lu)            (= E q_u)
    E|z_i|^2 = p_u^p tau sum_l tr(B_li B_lu Psi_l^{-1} B_lu)
             + [i copilot] p_u^p p_i^p tau^2
               |sum_l tr(B_li Psi_l^{-1} B_lu)|^2,

while the Monte Carlo route estimates the same moments from sampled
channels, pilot noise and the resulting MMSE estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import PilotPlan, pilot_gram
from .clustering import Association
from .errors import ConfigError
from .propagation import LargeScale


@dataclass
class SinrReport:
    """Per-UE effective SINR and spectral efficiency."""

    sinr: np.ndarray
    se: np.ndarray
    prelog: float


@dataclass
class StatSummary:
    """Order statistics over a pooled sample of SE values."""

    values: np.ndarray  # sorted ascending
    mean: float
    count: int

    def percentile(self, q):
        """Linear-interpolation (type-7) percentile, q in [0, 100]."""
        return float(np.percentile(self.values, q))

    def cdf_points(self):
        """Empirical CDF support and cumulative probabilities (k/n)."""
        n = self.count
        return self.values, np.arange(1, n + 1) / n


def _powers(p, n, what):
    p = np.broadcast_to(np.asarray(p, dtype=float), (n,))
    if np.any(p < 0):
        raise ConfigError(f"{what} powers must be non-negative")
    return p


def closed_form_sinr(ls: LargeScale, assoc: Association, plan: PilotPlan,
                     p_pilot, p_data, sigma2, psi=None):
    """Effective SINR of every UE from the moment expansion (powers in W).

    psi, when given, must be the pilot Gram built at ``p_pilot``; it is
    recomputed otherwise.
    """
    u_tot = ls.n_ues
    p_pilot = _powers(p_pilot, u_tot, "pilot")
    p_data = _powers(p_data, u_tot, "data")
    a = np.asarray(assoc.assign, dtype=float)
    if np.any(a.sum(axis=0) < 1):
        empty = np.flatnonzero(a.sum(axis=0) < 1)
        raise ValueError(f"SINR undefined: UE(s) {empty.tolist()} unserved")
    if psi is None:
        psi = pilot_gram(ls, plan, p_pilot, sigma2)
    tau = plan.tau
    copilot = plan.copilot_matrix()  # diagonal True: the i = u coherent part
    if ls.uncorrelated:
        m = ls.n_antennas
        psi_sel = psi[:, plan.pilot_of]
        w2 = a * ls.beta ** 2 / psi_sel
        w1 = a * ls.beta / psi_sel
        e_ds = p_pilot * tau * m * w2.sum(axis=0)
        nc_sum = m * (w2.T @ ls.beta)             # (u, i)
        c_sum = m * (w1.T @ ls.beta)
    else:
        psi_inv = np.linalg.inv(psi)[:, plan.pilot_of]
        pinv_b = np.einsum("lumn,lunk->lumk", psi_inv, ls.cov)
        t_mat = np.einsum("lumn,lunk->lumk", ls.cov, pinv_b)
        amask = a[:, :, None, None]
        e_ds = p_pilot * tau * np.einsum("lumm->u", t_mat * amask).real
        nc_sum = np.einsum("liab,luba->ui", ls.cov, t_mat * amask).real
        c_sum = np.abs(np.einsum("liab,luba->ui", ls.cov, pinv_b * amask))
    e_sq = p_pilot[:, None] * tau * nc_sum \
        + np.where(copilot, p_pilot[:, None] * p_pilot[None, :] * tau ** 2
                   * c_sum ** 2, 0.0)
    num = p_data * e_ds ** 2
    den = e_sq @ p_data - p_data * e_ds ** 2 + sigma2 * e_ds
    if np.any(den <= 0) or np.any(e_ds <= 0):
        raise ValueError("SINR undefined: non-positive moment terms")
    return num / den


def empirical_sinr(ls: LargeScale, assoc: Association, plan: PilotPlan,
                   p_pilot, p_data, sigma2, n_draws=100_000, seed=None,
                   chunk=20_000):
    """Monte Carlo estimate of the effective SINR (moment averaging).

    Draws channels and pilot noise, runs the MMSE filter, and averages
    E z_u, E |z_i|^2 and E q_u over ``n_draws`` realisations before forming
    the same ratio as the closed form.
    """
    rng = np.random.default_rng(seed)
    L, u_tot, m = ls.n_aps, ls.n_ues, ls.n_antennas
    p_pilot = _powers(p_pilot, u_tot, "pilot")
    p_data = _powers(p_data, u_tot, "data")
    a = np.asarray(assoc.assign, dtype=float)
    tau = plan.tau
    if ls.uncorrelated:
        cov = ls.beta[:, :, None, None] * np.eye(m)[None, None]
        cov_sqrt = np.sqrt(ls.beta)[:, :, None, None] * np.eye(m)[None, None]
    else:
        cov = ls.cov
        cov_sqrt = ls.cov_sqrt()
    psi = pilot_gram(LargeScale(beta=ls.beta, n_antennas=m, cov=cov),
                     plan, p_pilot, sigma2)
    psi_inv_sel = np.linalg.inv(psi)[:, plan.pilot_of]
    # MMSE filter per link: hhat = sqrt(p tau) B Psi^-1 r
    filt = np.sqrt(p_pilot * tau)[None, :, None, None] * np.einsum(
        "lumn,lunk->lumk", cov, psi_inv_sel)
    amp = np.sqrt(p_pilot * tau)
    sum_z = np.zeros(u_tot, dtype=complex)
    sum_sq = np.zeros((u_tot, u_tot))
    sum_q = np.zeros(u_tot)
    done = 0
    while done < n_draws:
        n = min(chunk, n_draws - done)
        z = rng.standard_normal((n, L, u_tot, m)) \
            + 1j * rng.standard_normal((n, L, u_tot, m))
        h = np.einsum("lumn,dlun->dlum", cov_sqrt, z / np.sqrt(2.0))
        noise = rng.standard_normal((n, L, tau, m)) \
            + 1j * rng.standard_normal((n, L, tau, m))
        noise *= np.sqrt(sigma2 / 2.0)
        onehot = np.zeros((u_tot, tau))
        onehot[np.arange(u_tot), plan.pilot_of] = 1.0
        r = np.einsum("dlum,ut->dltm", h * amp[None, None, :, None], onehot) + noise
        h_hat = np.einsum("lumn,dlun->dlum", filt, r[:, :, plan.pilot_of, :])
        h_hat_m = h_hat * a[None, :, :, None]  # zero outside serving sets
        z_ui = np.einsum("dlum,dlim->dui", np.conj(h_hat_m), h)
        sum_z += z_ui[:, np.arange(u_tot), np.arange(u_tot)].sum(axis=0)
        sum_sq += (np.abs(z_ui) ** 2).sum(axis=0)
        sum_q += np.einsum("dlum,dlum->du", np.conj(h_hat_m), h_hat_m).real \
            .sum(axis=0)
        done += n
    e_z = sum_z / n_draws
    e_sq = sum_sq / n_draws
    e_q = sum_q / n_draws
    num = p_data * np.abs(e_z) ** 2
    den = e_sq @ p_data - num + sigma2 * e_q
    return num / den


def spectral_efficiency(sinr, tau, tau_c):
    """Map effective SINR to SE = (1 - tau/tau_c) log2(1 + SINR)."""
    if not 0 < tau < tau_c:
        raise ConfigError(f"need 0 < tau < tau_c, got tau={tau}, tau_c={tau_c}")
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ConfigError("SINR must be non-negative")
    prelog = 1.0 - tau / tau_c
    return SinrReport(sinr=sinr, se=prelog * np.log2(1.0 + sinr), prelog=prelog)


def aggregate_stats(samples):
    """Pool SE samples into sorted order statistics."""
    values = np.sort(np.asarray(samples, dtype=float).ravel())
    if values.size == 0:
        raise ConfigError("cannot aggregate an empty sample set")
    return StatSummary(values=values, mean=float(values.mean()),
                       count=int(values.size))

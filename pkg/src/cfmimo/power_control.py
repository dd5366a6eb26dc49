"""Pilot and data power allocation for the uplink MRC receiver.

Both solvers work on the closed-form effective SINR of UE u,

    SINR_u = A_u / B_u,
    A_u = p_u^d p_u^p tau G_u,
    B_u = sum_i p_i^d NC_ui / G_u
        + tau sum_{i copilot, i != u} p_i^p p_i^d CT_ui / G_u + sigma^2,

with the serving-set trace sums

    G_u  = sum_{l in A_u} tr(B_lu Psi_l^{-1} B_lu),
    NC_ui = sum_{l in A_u} tr(B_li B_lu Psi_l^{-1} B_lu),
    CT_ui = |sum_{l in A_u} tr(B_li Psi_l^{-1} B_lu)|^2.

Pilot powers are optimised for the weighted sum rate by a quadratic
transform: with auxiliary y_u = sqrt(A_u)/B_u and the trace sums frozen at
the current iterate, the surrogate sum_u w_u (2 y_u sqrt(c_u p_u) -
y_u^2 B_u(p)) separates per coordinate and has the closed-form maximiser
p_j = (w_j y_j)^2 c_j / lambda_j^2 clipped to the power box.

Data powers are set max-min fair via bisection on the target t, feasibility
of each t checked by the standard-interference fixed point
p <- t (G p + b) started from t*b, on the linearised coefficient form of
the SINR.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import PilotPlan, pilot_gram
from .clustering import Association
from .errors import ConfigError, UnsupportedModeError
from .propagation import LargeScale

log = logging.getLogger(__name__)

POWER_FLOOR_W = 1e-6  # lower pilot power box edge
WSRM_TOL = 1e-4       # relative power-update stop for the pilot solver
WSRM_MAX_ITER = 100
MAXMIN_TOL = 1e-6     # relative bisection bracket width
FIXED_POINT_TOL = 1e-10
FIXED_POINT_MAX_ITER = 5000


@dataclass
class SinrCoefficients:
    """Trace sums of the closed-form SINR for a fixed training state.

    g is (U,); nc and ct are (U, U) with ct already masked to co-pilot
    pairs excluding the diagonal. Rebuilt whenever pilot powers move.
    """

    g: np.ndarray
    nc: np.ndarray
    ct: np.ndarray
    sigma2: float
    tau: int


@dataclass
class PilotSolveState:
    """Result of the pilot power solve."""

    p_pilot: np.ndarray
    y: np.ndarray
    objective: list
    n_iter: int
    converged: bool
    violations: list = field(default_factory=list)


@dataclass
class PosynomialCoeffs:
    """Linearised SINR denominators for the max-min data solve.

    SINR_u(p) = p_u / ((e p)_u + (f p)_u + b_u) with p in [0, 1]^U
    (normalised data powers). e covers coherent pilot contamination,
    f the non-coherent interference including the self term, b the noise.
    """

    e: np.ndarray
    f: np.ndarray
    b: np.ndarray


@dataclass
class DataSolveState:
    """Result of the max-min data power solve."""

    p_data: np.ndarray
    t_star: float
    trace: list


def _mask(assoc: Association):
    a = np.asarray(assoc.assign, dtype=float)
    if np.any(a.sum(axis=0) < 1):
        empty = np.flatnonzero(a.sum(axis=0) < 1)
        raise ValueError(f"UE(s) {empty.tolist()} have empty serving sets")
    return a


def build_sinr_coefficients(ls: LargeScale, assoc: Association, plan: PilotPlan,
                            p_pilot, sigma2):
    """Evaluate the trace sums G, NC, CT at the given pilot powers."""
    a = _mask(assoc)
    p_pilot = np.broadcast_to(np.asarray(p_pilot, float), (ls.n_ues,))
    psi = pilot_gram(ls, plan, p_pilot, sigma2)
    copilot = plan.copilot_matrix()
    offdiag = copilot & ~np.eye(plan.n_ues, dtype=bool)
    if ls.uncorrelated:
        m = ls.n_antennas
        psi_sel = psi[:, plan.pilot_of]           # (L, U)
        w2 = a * ls.beta ** 2 / psi_sel           # masked beta^2 / psi
        w1 = a * ls.beta / psi_sel
        g = m * w2.sum(axis=0)
        nc = m * (w2.T @ ls.beta)
        csum = m * (w1.T @ ls.beta)
        ct = np.where(offdiag, csum ** 2, 0.0)
        return SinrCoefficients(g=g, nc=nc, ct=ct, sigma2=float(sigma2),
                                tau=plan.tau)
    psi_inv = np.linalg.inv(psi)[:, plan.pilot_of]  # (L, U, M, M)
    pinv_b = np.einsum("lumn,lunk->lumk", psi_inv, ls.cov)    # Psi^-1 B_lu
    t_mat = np.einsum("lumn,lunk->lumk", ls.cov, pinv_b)      # B_lu Psi^-1 B_lu
    amask = a[:, :, None, None]
    g = np.einsum("lumm->u", t_mat * amask).real
    nc = np.einsum("liab,luba->ui", ls.cov, t_mat * amask).real
    csum = np.einsum("liab,luba->ui", ls.cov, pinv_b * amask)
    ct = np.where(offdiag, np.abs(csum) ** 2, 0.0)
    return SinrCoefficients(g=g, nc=nc, ct=ct, sigma2=float(sigma2), tau=plan.tau)


def sinr_ratio_parts(coeffs: SinrCoefficients, p_pilot, p_data):
    """Numerator A_u and denominator B_u of the effective SINR (watt inputs)."""
    g = coeffs.g
    if np.any(g <= 0):
        raise ValueError("SINR undefined: zero combining gain (empty serving set "
                         "or vanished estimates)")
    u = g.shape[0]
    p_pilot = np.broadcast_to(np.asarray(p_pilot, float), (u,))
    p_data = np.broadcast_to(np.asarray(p_data, float), (u,))
    num = p_data * p_pilot * coeffs.tau * g
    den = (coeffs.nc @ p_data) / g \
        + coeffs.tau * (coeffs.ct @ (p_pilot * p_data)) / g \
        + coeffs.sigma2
    return num, den


def update_auxiliary(num, den):
    """Quadratic-transform auxiliary y = sqrt(A)/B at the current powers."""
    return np.sqrt(num) / den


def maximize_surrogate(y, coeffs: SinrCoefficients, p_data, weights,
                       eps=POWER_FLOOR_W, p_max=0.1):
    """Closed-form per-coordinate maximiser of the frozen surrogate.

    The surrogate is sum_u w_u (2 y_u sqrt(c_u p_u) - y_u^2 B_u(p)) with
    c_u = p_u^d tau g_u; the coefficient of p_j collects the contamination
    that UE j inflicts on its co-pilot partners,
    lambda_j = tau p_j^d sum_u w_u y_u^2 CT_uj / g_u. Unconstrained optimum
    (w_j y_j)^2 c_j / lambda_j^2, clipped to [eps, p_max]; lambda_j = 0
    (nobody harmed) puts p_j on the upper box edge.
    """
    u = coeffs.g.shape[0]
    y = np.asarray(y, float)
    weights = np.broadcast_to(np.asarray(weights, float), (u,))
    p_data = np.broadcast_to(np.asarray(p_data, float), (u,))
    c = p_data * coeffs.tau * coeffs.g
    lam = coeffs.tau * p_data * (coeffs.ct.T @ (weights * y ** 2 / coeffs.g))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = (weights * y) ** 2 * c / lam ** 2
    p = np.where(lam > 0, p, p_max)
    return np.clip(p, eps, p_max)


def wsrm_pilot_powers(ls: LargeScale, assoc: Association, plan: PilotPlan,
                      sigma2, tau_c, p_max, p_data=None, weights=None,
                      eps=POWER_FLOOR_W, delta=WSRM_TOL, n_max=WSRM_MAX_ITER):
    """Weighted sum-rate pilot power allocation by quadratic transform.

    Alternates the auxiliary update and the surrogate maximisation from
    p = p_max/2, rebuilding the trace sums at every outer iterate, until the
    relative power update drops below delta. The recorded objective is the
    true weighted sum SE; decreases beyond 1e-9 relative (possible because
    the trace sums move between iterates) are logged and returned.
    """
    n_ues = ls.n_ues
    p_data = np.full(n_ues, p_max) if p_data is None else \
        np.broadcast_to(np.asarray(p_data, float), (n_ues,))
    weights = np.ones(n_ues) if weights is None else \
        np.broadcast_to(np.asarray(weights, float), (n_ues,))
    prelog = 1.0 - plan.tau / tau_c
    p = np.full(n_ues, p_max / 2.0)
    trace = []
    iterates = []
    converged = False
    n_iter = 0
    y = np.zeros(n_ues)
    for n_iter in range(1, n_max + 1):
        coeffs = build_sinr_coefficients(ls, assoc, plan, p, sigma2)
        num, den = sinr_ratio_parts(coeffs, p, p_data)
        trace.append(float(prelog * np.sum(weights * np.log2(1.0 + num / den))))
        iterates.append(p)
        y = update_auxiliary(num, den)
        p_new = maximize_surrogate(y, coeffs, p_data, weights, eps, p_max)
        rel = np.linalg.norm(p_new - p) / np.linalg.norm(p)
        p = p_new
        if rel < delta:
            converged = True
            break
    coeffs = build_sinr_coefficients(ls, assoc, plan, p, sigma2)
    num, den = sinr_ratio_parts(coeffs, p, p_data)
    trace.append(float(prelog * np.sum(weights * np.log2(1.0 + num / den))))
    iterates.append(p)
    violations = [k for k in range(1, len(trace))
                  if trace[k] < trace[k - 1] * (1.0 - 1e-9)]
    for k in violations:
        log.warning("pilot power objective dipped at iteration %d: %.12g -> %.12g",
                    k, trace[k - 1], trace[k])
    if not converged:
        best = int(np.argmax(trace))
        p = iterates[best]
        log.warning("pilot power solve hit the iteration cap (%d); returning "
                    "best iterate %d", n_max, best)
    return PilotSolveState(p_pilot=p, y=y, objective=trace, n_iter=n_iter,
                           converged=converged, violations=violations)


def posynomial_coefficients(ls: LargeScale, assoc: Association, plan: PilotPlan,
                            p_pilot, sigma2):
    """Linearised SINR coefficients on the uncorrelated (B = beta I) model.

    With psi_l = tau sum_{i copilot} p_i^p beta_li + sigma^2 over each UE's
    serving set:

        e_ui = sum_l p_i^p beta_li^2 / (p_u^p sum_l beta_lu^2),  i copilot
        f_ui = sum_l beta_li / (M tau p_u^p sum_l beta_lu^2 / psi_l)
        b_u  = sigma^2   / (M tau p_u^p sum_l beta_lu^2 / psi_l)
    """
    if not ls.uncorrelated:
        raise UnsupportedModeError(
            "the linearised coefficients assume B = beta I; use "
            "maxmin_data_powers_general for explicit covariances")
    a = _mask(assoc)
    m, tau = ls.n_antennas, plan.tau
    p_pilot = np.broadcast_to(np.asarray(p_pilot, float), (ls.n_ues,))
    psi_sel = pilot_gram(ls, plan, p_pilot, sigma2)[:, plan.pilot_of]
    beta = ls.beta
    copilot_off = plan.copilot_matrix() & ~np.eye(plan.n_ues, dtype=bool)
    sum_b2 = ((a * beta ** 2).T @ np.ones(ls.n_aps))  # sum_l beta_lu^2 over A_u
    sum_b2_i = (a.T @ beta ** 2)                      # (u, i) sums of beta_li^2
    sum_b_i = (a.T @ beta)                            # (u, i) sums of beta_li
    denom_fb = m * tau * p_pilot * ((a * beta ** 2 / psi_sel).sum(axis=0))
    if np.any(sum_b2 <= 0) or np.any(denom_fb <= 0):
        raise ValueError("SINR undefined: a UE has zero gain over its serving set")
    e = np.where(copilot_off, (p_pilot[None, :] * sum_b2_i)
                 / (p_pilot[:, None] * sum_b2[:, None]), 0.0)
    f = sum_b_i / denom_fb[:, None]
    b = sigma2 / denom_fb
    return PosynomialCoeffs(e=e, f=f, b=b)


def _interference_form(coeffs):
    """Growth matrix and base vector of the fixed-point map."""
    if isinstance(coeffs, PosynomialCoeffs):
        return coeffs.e + coeffs.f, coeffs.b
    growth, base = coeffs
    return np.asarray(growth, float), np.asarray(base, float)


def posynomial_sinr(coeffs, p_data):
    """SINR of each UE under the linearised coefficient model."""
    growth, base = _interference_form(coeffs)
    p = np.asarray(p_data, float)
    return p / (growth @ p + base)


def feasibility_fixed_point(t, coeffs, box_hi=1.0, tol=FIXED_POINT_TOL,
                            max_iter=FIXED_POINT_MAX_ITER):
    """Check whether min-SINR level t is reachable inside the power box.

    Iterates the monotone map p <- t (G p + b) from p = t*b. The iterates
    increase toward the minimal power profile meeting SINR = t for everyone;
    convergence with that profile inside the box means feasible and any
    component escaping the box means infeasible. If the loop stalls (the
    rate degrades near the critical level) the minimal profile is resolved
    by a direct linear solve and checked against the box.
    """
    growth, base = _interference_form(coeffs)
    if t <= 0:
        return True, np.zeros_like(base)
    p = t * base
    for _ in range(max_iter):
        p_next = t * (growth @ p + base)
        if np.any(p_next > box_hi * (1.0 + 1e-9)):
            return False, p_next
        if np.linalg.norm(p_next - p) <= tol * max(np.linalg.norm(p), 1e-300):
            return True, p_next
        p = p_next
    # near the critical level the linear rate approaches one and the loop
    # stalls inside the box; decide exactly instead: the minimal profile
    # t (I - t G)^-1 b is elementwise nonnegative iff the level is below
    # the interference ceiling (M-matrix property of I - t G)
    try:
        p_star = t * np.linalg.solve(np.eye(base.size) - t * growth, base)
    except np.linalg.LinAlgError:
        return False, p
    if np.any(p_star < 0) or not np.all(np.isfinite(p_star)):
        return False, p
    return bool(np.all(p_star <= box_hi * (1.0 + 1e-9))), p_star


def maxmin_data_powers(coeffs, tol=MAXMIN_TOL):
    """Max-min fair normalised data powers by bisection on the SINR target.

    The bracket starts at [0, t_hi] with t_hi = min_u 1/(f_uu + b_u), each
    UE's SINR alone at full power, which no common target can beat. Records
    (t, feasible) probes in the trace.
    """
    growth, base = _interference_form(coeffs)
    t_hi = float(np.min(1.0 / (np.diag(growth) + base)))
    trace = []
    feasible, p = feasibility_fixed_point(t_hi, (growth, base))
    trace.append((t_hi, feasible))
    if feasible:
        return DataSolveState(p_data=p, t_star=t_hi, trace=trace)
    lo, hi = 0.0, t_hi
    p_best = np.zeros_like(base)
    while hi - lo > tol * t_hi:
        mid = 0.5 * (lo + hi)
        feasible, p = feasibility_fixed_point(mid, (growth, base))
        trace.append((mid, feasible))
        if feasible:
            lo, p_best = mid, p
        else:
            hi = mid
    return DataSolveState(p_data=p_best, t_star=lo, trace=trace)


def maxmin_data_powers_general(coeffs: SinrCoefficients, p_pilot, p_max,
                               tol=MAXMIN_TOL):
    """Max-min data powers from the exact trace sums (any covariance model).

    Normalised power q maps to watts p^d = q p_max; the SINR is
    q_u / ((G q)_u + b_u) with G_ui = (NC_ui + tau p_i^p CT_ui) / (p_u^p tau
    g_u^2) and b_u = sigma^2 / (p_max p_u^p tau g_u), handed to the same
    bisection as the linearised route.
    """
    u = coeffs.g.shape[0]
    p_pilot = np.broadcast_to(np.asarray(p_pilot, float), (u,))
    a_u = p_pilot * coeffs.tau * coeffs.g
    growth = (coeffs.nc + coeffs.tau * p_pilot[None, :] * coeffs.ct) \
        / (a_u[:, None] * coeffs.g[:, None])
    base = coeffs.sigma2 / (p_max * a_u)
    return maxmin_data_powers((growth, base), tol=tol)

"""Independent reference implementations used to cross-check the package.

Everything here recomputes results from first principles along a different
route than the library: linkages from scratch instead of incremental
updates, exhaustive grid search instead of bisection, sample moments
instead of trace algebra.
"""

import numpy as np


def average_linkage(dist, members_a, members_b):
    """Mean pairwise distance between two member lists, from the raw matrix."""
    block = dist[np.ix_(list(members_a), list(members_b))]
    return float(block.mean())


def brute_force_cluster(dist, kappa):
    """Agglomerative average-linkage partition, recomputing every linkage
    from the original distance matrix at every step."""
    n = dist.shape[0]
    clusters = [[i] for i in range(n)]
    while len(clusters) > 1:
        best = (np.inf, None, None)
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                d = average_linkage(dist, clusters[i], clusters[j])
                if d < best[0]:
                    best = (d, i, j)
        d, i, j = best
        if d > kappa:
            break
        clusters[i] = sorted(clusters[i] + clusters[j])
        del clusters[j]
    return sorted([tuple(sorted(c)) for c in clusters])


def partition_as_set(partition):
    return sorted(tuple(c) for c in partition.clusters)


def grid_search_maxmin(growth, base, step=0.01):
    """Exhaustive max-min SINR over the power grid {step, 2*step, ..., 1}^U."""
    u = base.shape[0]
    axis = np.arange(step, 1.0 + step / 2, step)
    grids = np.meshgrid(*([axis] * u), indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)  # (n, U)
    sinr = points / (points @ growth.T + base[None, :])
    worst = sinr.min(axis=1)
    k = int(np.argmax(worst))
    return float(worst[k]), points[k]


def uatf_sinr_scalar(beta, assign, pilot_of, p_pilot, p_data, tau, sigma2):
    """Closed-form effective SINR for B = beta * I_1, written as plain loops."""
    L, U = beta.shape
    psi = np.zeros((L, U))  # per victim UE's pilot
    for l in range(L):
        for u in range(U):
            psi[l, u] = tau * sum(p_pilot[i] * beta[l, i] for i in range(U)
                                  if pilot_of[i] == pilot_of[u]) + sigma2
    sinr = np.zeros(U)
    for u in range(U):
        serving = [l for l in range(L) if assign[l, u]]
        e_ds = p_pilot[u] * tau * sum(beta[l, u] ** 2 / psi[l, u] for l in serving)
        den = sigma2 * e_ds - p_data[u] * e_ds ** 2
        for i in range(U):
            e_sq = p_pilot[u] * tau * sum(
                beta[l, i] * beta[l, u] ** 2 / psi[l, u] for l in serving)
            if pilot_of[i] == pilot_of[u]:
                coh = sum(beta[l, i] * beta[l, u] / psi[l, u] for l in serving)
                e_sq += p_pilot[u] * p_pilot[i] * tau ** 2 * coh ** 2
            den += p_data[i] * e_sq
        sinr[u] = p_data[u] * e_ds ** 2 / den
    return sinr


def random_psd_covariances(beta, m, rng, spread=0.5):
    """Hermitian PSD per-link covariances with tr/m matching beta."""
    L, U = beta.shape
    cov = np.empty((L, U, m, m), dtype=complex)
    for l in range(L):
        for u in range(U):
            x = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            raw = x @ np.conj(x).T
            raw += spread * np.trace(raw).real / m * np.eye(m)
            cov[l, u] = raw * (m * beta[l, u] / np.trace(raw).real)
    return cov

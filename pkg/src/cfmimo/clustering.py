"""AP grouping from estimate correlation, and UE-to-cluster association.

The selection pipeline runs once per large-scale realisation:

1. Stack each AP's channel estimates into one vector and form the pairwise
   coherence rho_lk = |<hhat_l, hhat_k>| / (||hhat_l|| ||hhat_k||), turned
   into the dissimilarity D = 1 - rho in [0, 1].
2. Merge AP clusters agglomeratively under average linkage until the
   smallest inter-cluster linkage exceeds the threshold kappa.
3. Associate each UE with the cluster of its strongest AP, falling back to
   the cluster's non-saturated subset and finally to the best alternative
   cluster when pilots run out. An AP never serves more than tau UEs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError
from .propagation import LargeScale

log = logging.getLogger(__name__)


@dataclass
class ApDistance:
    """Pairwise AP similarity rho and dissimilarity dist = 1 - rho."""

    rho: np.ndarray
    dist: np.ndarray


@dataclass
class Partition:
    """Disjoint AP clusters covering 0..L-1, plus the merge history.

    merge_history holds (members_a, members_b, linkage) tuples in merge
    order; linkages are average-linkage distances at merge time.
    """

    clusters: list
    merge_history: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def cluster_of(self):
        """(L,) array mapping AP index to its cluster's position."""
        n = sum(len(c) for c in self.clusters)
        owner = np.empty(n, dtype=np.int64)
        for s, members in enumerate(self.clusters):
            owner[np.asarray(members)] = s
        return owner


@dataclass
class Association:
    """Serving assignment A (L, U), entries in {0, 1}."""

    assign: np.ndarray

    @property
    def load(self):
        """UEs served per AP."""
        return self.assign.sum(axis=1)

    @property
    def serving_sets(self):
        """List over UEs of served-by AP index arrays."""
        return [np.flatnonzero(self.assign[:, u]) for u in range(self.assign.shape[1])]


def ap_correlation_matrix(h_hat, mode="abs"):
    """Pairwise AP estimate correlation from stacked estimates.

    h_hat has shape (L, U, M); each AP's estimates are flattened to one
    vector of length U*M. The cosine similarity between two such complex
    vectors needs a real reduction before it can act as a similarity:
    mode "abs" (default) takes the coherence |<hhat_l, hhat_k>| / norms,
    giving dist in [0, 1]; mode "signed" keeps the real part, giving dist
    in [0, 2].
    """
    if mode not in ("signed", "abs"):
        raise ConfigError(f"unknown correlation mode {mode!r}")
    stacked = np.asarray(h_hat).reshape(h_hat.shape[0], -1)
    gram = stacked @ np.conj(stacked).T
    norms = np.sqrt(np.maximum(gram.diagonal().real, 0.0))
    zero = norms == 0.0
    if np.any(zero):
        log.warning("AP(s) %s have all-zero estimates; correlation set to 0",
                    np.flatnonzero(zero).tolist())
    denom = np.where(zero, 1.0, norms)
    rho = gram / denom[:, None] / denom[None, :]
    rho = np.abs(rho) if mode == "abs" else rho.real
    rho = np.clip(rho, -1.0, 1.0)
    rho[zero, :] = 0.0
    rho[:, zero] = 0.0
    np.fill_diagonal(rho, 1.0)
    dist = 1.0 - rho
    np.fill_diagonal(dist, 0.0)
    return ApDistance(rho=rho, dist=dist)


def _min_linkage(link):
    """Smallest off-diagonal entry and its first (i, j), i < j, in lex order."""
    n = link.shape[0]
    ii, jj = np.triu_indices(n, k=1)
    vals = link[ii, jj]
    k = int(np.argmin(vals))  # argmin takes the first hit, which is lex order
    return float(vals[k]), int(ii[k]), int(jj[k])


def hierarchical_cluster(dist, kappa):
    """Agglomerative average-linkage clustering with stop threshold kappa.

    ``dist`` is an (L, L) symmetric dissimilarity matrix (or ApDistance).
    Clusters merge while the minimum average linkage is <= kappa; ties go to
    the lexicographically smallest index pair. Linkages are maintained
    incrementally: merging clusters of sizes n_i, n_j updates the linkage to
    any other cluster k as (n_i d_ik + n_j d_jk) / (n_i + n_j).
    """
    if isinstance(dist, ApDistance):
        dist = dist.dist
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ConfigError(f"distance matrix must be square, got {dist.shape}")
    if kappa < 0:
        raise ConfigError(f"kappa must be non-negative, got {kappa}")
    n = dist.shape[0]
    clusters = [[l] for l in range(n)]
    sizes = np.ones(n)
    link = dist.copy()
    history = []
    while len(clusters) > 1:
        d, i, j = _min_linkage(link)
        if d > kappa:
            break
        history.append((tuple(clusters[i]), tuple(clusters[j]), d))
        merged_link = (sizes[i] * link[i, :] + sizes[j] * link[j, :]) / (
            sizes[i] + sizes[j])
        link[i, :] = merged_link
        link[:, i] = merged_link
        link[i, i] = 0.0
        link = np.delete(np.delete(link, j, axis=0), j, axis=1)
        clusters[i] = sorted(clusters[i] + clusters[j])
        sizes[i] += sizes[j]
        del clusters[j]
        sizes = np.delete(sizes, j)
    clusters = sorted([sorted(c) for c in clusters], key=lambda c: c[0])
    return Partition(clusters=clusters, merge_history=history)


def associate_users(partition: Partition, ls: LargeScale, tau,
                    ranking_gain=None, ue_order=None):
    """Assign each UE to a serving AP set under per-AP pilot capacity tau.

    UEs are handled in ascending index (or ``ue_order``). Per UE: take the
    cluster of the strongest AP by ranking gain (beta by default); if some
    of its APs are saturated, fall back to the non-saturated subset; if all
    are saturated, re-route to the cluster maximising the summed gain over
    non-saturated APs (ties to the lowest cluster index). When no AP
    anywhere has spare capacity a CapacityError identifies the UE.
    """
    gains = ls.beta if ranking_gain is None else np.asarray(ranking_gain, float)
    L, U = gains.shape
    if tau < 1:
        raise ConfigError(f"tau must be at least 1, got {tau}")
    if U > L * tau:
        raise CapacityError(
            ue=int(L * tau), message=f"{U} UEs exceed total pilot capacity "
            f"L*tau = {L * tau}")
    owner = partition.cluster_of()
    if owner.shape[0] != L:
        raise ConfigError("partition does not cover the AP set")
    members = [np.asarray(c, dtype=np.int64) for c in partition.clusters]
    order = range(U) if ue_order is None else ue_order
    assign = np.zeros((L, U), dtype=np.int8)
    load = np.zeros(L, dtype=np.int64)
    for u in order:
        ranked = np.argsort(-gains[:, u], kind="stable")
        best_ap = ranked[0]
        home = members[owner[best_ap]]
        free = home[load[home] < tau]
        if free.size == home.size:
            chosen = home
        elif free.size > 0:
            chosen = free
        else:
            # every AP of the home cluster is saturated; re-route
            scores = np.array([
                gains[c[load[c] < tau], u].sum() for c in members])
            if not scores.any():
                raise CapacityError(ue=u)
            target = members[int(np.argmax(scores))]
            chosen = target[load[target] < tau]
        assign[chosen, u] = 1
        load[chosen] += 1
    return Association(assign=assign)


def baseline_association(ls: LargeScale, mode, n=None):
    """Reference serving sets: every AP ("all") or the n strongest ("topn").

    Baselines carry no per-AP capacity cap; they stand in for the
    non-scalable reference schemes.
    """
    L, U = ls.beta.shape
    if mode == "all":
        return Association(assign=np.ones((L, U), dtype=np.int8))
    if mode == "topn":
        if n is None or n < 1 or n > L:
            raise ConfigError(f"topn needs 1 <= n <= L, got {n}")
        assign = np.zeros((L, U), dtype=np.int8)
        for u in range(U):
            ranked = np.argsort(-ls.beta[:, u], kind="stable")[:n]
            assign[ranked, u] = 1
        return Association(assign=assign)
    raise ConfigError(f"unknown baseline mode {mode!r}")

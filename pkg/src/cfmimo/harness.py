"""Experiment orchestration: batches, sweeps, calibration, output files.

One batch is one large-scale realisation: drop the network, draw shadowing,
assign pilots, bootstrap a full-power training pass to drive AP clustering,
associate UEs, allocate powers per the configured schemes and evaluate the
closed-form SE of every UE. Batches are seeded from the run seed through
numpy's SeedSequence spawn keys, so results are bit-identical no matter how
many workers execute them.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import assign_pilots, mmse_estimate, received_pilot, sample_channels
from .clustering import (ap_correlation_matrix, associate_users,
                         baseline_association, hierarchical_cluster)
from .config import SWEEP_AXES, ExperimentConfig
from .errors import CapacityError, ConfigError
from .performance import aggregate_stats, closed_form_sinr, spectral_efficiency
from .power_control import (build_sinr_coefficients,
                            maxmin_data_powers_general, wsrm_pilot_powers)
from .propagation import LargeScaleModel, large_scale_gains, sample_shadowing
from .topology import place_network

log = logging.getLogger(__name__)

KAPPA_GRID = (0.7, 0.8, 0.9, 0.95, 1.0, 1.05, 1.1, 1.2)
CALIBRATION_BATCHES = 50
CALIBRATION_SPAWN = 1 << 20  # keeps calibration seeds clear of batch seeds


@dataclass
class BatchOutcome:
    """Per-batch results; ``error`` is set instead of ``se`` on failure."""

    se: np.ndarray | None
    solver_iters: int = 0
    objective_trace: list | None = None
    n_clusters: int = 0
    mean_serving: float = 0.0
    max_load: int = 0
    error: str | None = None


@dataclass
class RunResult:
    """All outputs of one experiment point."""

    config: ExperimentConfig
    axis: str | None
    axis_value: float | None
    kappa: float | None
    se_samples: np.ndarray
    batch_means: np.ndarray
    solver_iters: np.ndarray
    traces: list
    failures: list
    mean_serving: float
    max_load: int
    wall_ms: float

    @property
    def scheme(self) -> str:
        return self.config.scheme

    @property
    def mean_se(self) -> float:
        return float(self.se_samples.mean()) if self.se_samples.size else float("nan")

    @property
    def se_p5(self) -> float:
        if not self.se_samples.size:
            return float("nan")
        return aggregate_stats(self.se_samples).percentile(5)

    @property
    def mean_std_err(self) -> float:
        """Standard error of the mean from batch-level means."""
        b = self.batch_means
        if b.size < 2:
            return float("nan")
        return float(b.std(ddof=1) / np.sqrt(b.size))


def _batch_seed(seed, index):
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


def run_batch(config: ExperimentConfig, kappa, seed_seq) -> BatchOutcome:
    """Simulate one large-scale realisation end to end."""
    rng = np.random.default_rng(seed_seq)
    sigma2 = config.sigma2_w
    topo = place_network(config.n_aps, config.n_ues, config.side_m,
                         config.ap_height_m, rng)
    model = LargeScaleModel.from_kind(config.model)
    shadow = sample_shadowing(topo, model, rng)
    ls = large_scale_gains(topo, model, shadow, n_antennas=config.n_antennas)
    plan = assign_pilots(config.n_ues, config.tau, config.pilot_policy, rng,
                         tau_c=config.tau_c)
    full_power = np.full(config.n_ues, config.p_max_w)
    n_clusters = 0
    try:
        if config.association == "dappa":
            # bootstrap training pass at full pilot power drives clustering
            real = sample_channels(ls, rng)
            robs = received_pilot(real, plan, full_power, sigma2, rng)
            training = mmse_estimate(robs, ls, plan, full_power, sigma2)
            apd = ap_correlation_matrix(training.h_hat, mode=config.corr_mode)
            part = hierarchical_cluster(apd, kappa)
            n_clusters = part.n_clusters
            assoc = associate_users(part, ls, config.tau)
        elif config.association == "all":
            assoc = baseline_association(ls, "all")
        else:
            assoc = baseline_association(ls, "topn", n=config.topn)
    except CapacityError as exc:
        return BatchOutcome(se=None, error=f"capacity exhausted at UE {exc.ue}")
    solver_iters = 0
    trace = None
    if config.pilot_scheme == "wsrm":
        state = wsrm_pilot_powers(
            ls, assoc, plan, sigma2, tau_c=config.tau_c, p_max=config.p_max_w,
            eps=config.wsrm_eps_w, delta=config.wsrm_delta,
            n_max=config.wsrm_max_iter)
        p_pilot = state.p_pilot
        solver_iters = state.n_iter
        trace = state.objective
    else:
        p_pilot = full_power  # "full" and "equal" both mean uniform P_max
    if config.data_scheme == "maxmin":
        # exact trace-sum coefficients at the final pilot powers; the fair
        # point then realises SINR_u == t* for every UE in the closed form
        coeffs = build_sinr_coefficients(ls, assoc, plan, p_pilot, sigma2)
        dstate = maxmin_data_powers_general(coeffs, p_pilot, config.p_max_w,
                                            tol=config.maxmin_tol)
        p_data = dstate.p_data * config.p_max_w
    else:
        p_data = full_power
    sinr = closed_form_sinr(ls, assoc, plan, p_pilot, p_data, sigma2)
    report = spectral_efficiency(sinr, config.tau, config.tau_c)
    return BatchOutcome(se=report.se, solver_iters=solver_iters,
                        objective_trace=trace, n_clusters=n_clusters,
                        mean_serving=float(assoc.assign.sum(axis=0).mean()),
                        max_load=int(assoc.load.max()))


def _batch_task(args):
    config, kappa, index = args
    return run_batch(config, kappa, _batch_seed(config.seed, index))


def calibrate_kappa(config: ExperimentConfig, cache=None, grid=KAPPA_GRID,
                    n_batches=CALIBRATION_BATCHES):
    """Pick the clustering threshold by a coarse mean-SE sweep.

    Runs ``n_batches`` pilot batches per candidate on dedicated seeds and
    freezes the best mean SE among the candidates with the fewest capacity
    failures (ties to the smaller threshold). Candidates whose clusters are
    too coarse to place every UE under the per-AP cap lose batches and are
    ruled out first, which keeps the pick safe at high load. Pilot batches
    run under equalized powers so the threshold ranking stays independent
    of the solver cost. Cached per (L, U, tau, side, model) within a sweep.
    """
    if config.association != "dappa":
        return None
    if config.kappa is not None:
        return config.kappa
    key = (config.n_aps, config.n_ues, config.tau, config.side_m, config.model)
    if cache is not None and key in cache:
        return cache[key]
    pilot_config = config.replace(pilot_scheme="equal", data_scheme="equal")
    best_kappa, best_score = None, (np.inf, np.inf)
    for kappa in grid:
        means = []
        failed = 0
        for b in range(n_batches):
            seed_seq = np.random.SeedSequence(
                entropy=config.seed, spawn_key=(CALIBRATION_SPAWN, b))
            outcome = run_batch(pilot_config, kappa, seed_seq)
            if outcome.se is None:
                failed += 1
            else:
                means.append(outcome.se.mean())
        mean_se = float(np.mean(means)) if means else -np.inf
        log.info("kappa calibration: %.3f -> mean SE %.4f (%d/%d failed)",
                 kappa, mean_se, failed, n_batches)
        score = (failed, -mean_se)
        if means and score < best_score:
            best_kappa, best_score = kappa, score
    if best_kappa is None:
        raise ConfigError("kappa calibration failed: every batch errored")
    if best_score[0]:
        log.warning("kappa calibration: best candidate %.3f still failed "
                    "%d/%d batches", best_kappa, best_score[0], n_batches)
    if cache is not None:
        cache[key] = best_kappa
    return best_kappa


def run_experiment(config: ExperimentConfig, axis=None, axis_value=None,
                   kappa_cache=None) -> RunResult:
    """Run every batch of one experiment point and pool the SE samples."""
    config.validate()
    start = time.perf_counter()
    kappa = calibrate_kappa(config, cache=kappa_cache)
    tasks = [(config, kappa, b) for b in range(config.batches)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_batch_task, tasks, chunksize=8))
    else:
        outcomes = [_batch_task(t) for t in tasks]
    samples, batch_means, iters, traces, failures, serving = [], [], [], [], [], []
    max_load = 0
    for index, outcome in enumerate(outcomes):
        if outcome.error is not None:
            failures.append((index, outcome.error))
            continue
        samples.append(outcome.se)
        batch_means.append(outcome.se.mean())
        iters.append(outcome.solver_iters)
        serving.append(outcome.mean_serving)
        max_load = max(max_load, outcome.max_load)
        if outcome.objective_trace is not None and len(traces) < config.traces_kept:
            traces.append((index, outcome.objective_trace))
    if failures:
        log.warning("%d/%d batches failed (first: %s)", len(failures),
                    config.batches, failures[0][1])
    wall_ms = (time.perf_counter() - start) * 1e3
    return RunResult(
        config=config, axis=axis, axis_value=axis_value, kappa=kappa,
        se_samples=np.concatenate(samples) if samples else np.empty(0),
        batch_means=np.asarray(batch_means),
        solver_iters=np.asarray(iters, dtype=float),
        traces=traces, failures=failures,
        mean_serving=float(np.mean(serving)) if serving else 0.0,
        max_load=max_load, wall_ms=wall_ms)


def sweep(config: ExperimentConfig, axis, values) -> list:
    """Repeat the experiment along one axis with a common base seed.

    Batch seeds do not depend on the axis value, so consecutive points see
    common random placements (paired comparisons across the axis).
    """
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; options: "
                          f"{sorted(SWEEP_AXES)}")
    field_name = SWEEP_AXES[axis]
    kappa_cache = {}
    results = []
    for value in values:
        cast = float(value) if field_name == "kappa" else int(value)
        point = config.replace(**{field_name: cast})
        results.append(run_experiment(point, axis=axis, axis_value=cast,
                                      kappa_cache=kappa_cache))
    return results


def _fmt(x):
    return f"{x:.10g}"


def _slug(result: RunResult):
    scheme = result.scheme.replace("/", "-")
    if result.axis is None:
        return scheme
    return f"{scheme}__{result.axis}{_fmt(result.axis_value)}"


def emit_outputs(results, outdir, base_config=None, figures=True):
    """Write summary/CDF/trace CSVs, run metadata and (optionally) figures.

    The summary has one row per point: scheme, axis_value, mean_se, se_p5,
    iters_mean, wall_ms. CDF files hold the pooled per-UE SE samples against
    cumulative probability. The timestamp lives only in the metadata file;
    everything else is a pure function of config and seed.
    """
    import os

    os.makedirs(outdir, exist_ok=True)
    from .config import format_config

    if base_config is None and results:
        base_config = results[0].config
    extra = {"package_version": _package_version()}
    for result in results:
        tag = _slug(result)
        extra[f"kappa_resolved__{tag}"] = result.kappa
        extra[f"failed_batches__{tag}"] = len(result.failures)
        extra[f"mean_serving_aps__{tag}"] = round(result.mean_serving, 4)
    extra["timestamp"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(os.path.join(outdir, "metadata.txt"), "w", encoding="utf-8") as fh:
        fh.write(format_config(base_config, extra=extra) if base_config
                 else "# no results\n")
    if not results:
        log.warning("no results to emit; wrote metadata only")
        return
    with open(os.path.join(outdir, "summary.csv"), "w", encoding="utf-8") as fh:
        fh.write("scheme,axis_value,mean_se,se_p5,iters_mean,wall_ms\n")
        for r in results:
            iters_mean = float(r.solver_iters.mean()) if r.solver_iters.size else 0.0
            axis_value = "" if r.axis_value is None else _fmt(r.axis_value)
            fh.write(f"{r.scheme},{axis_value},{_fmt(r.mean_se)},"
                     f"{_fmt(r.se_p5)},{_fmt(iters_mean)},{_fmt(r.wall_ms)}\n")
    for r in results:
        if not r.se_samples.size:
            continue
        values, prob = aggregate_stats(r.se_samples).cdf_points()
        with open(os.path.join(outdir, f"cdf__{_slug(r)}.csv"), "w",
                  encoding="utf-8") as fh:
            fh.write("se_bit_s_hz,cum_prob\n")
            for v, p in zip(values, prob):
                fh.write(f"{_fmt(v)},{_fmt(p)}\n")
        for batch_index, trace in r.traces:
            name = f"trace__{_slug(r)}__b{batch_index}.csv"
            with open(os.path.join(outdir, name), "w", encoding="utf-8") as fh:
                fh.write("iter,objective\n")
                for k, obj in enumerate(trace):
                    fh.write(f"{k},{_fmt(obj)}\n")
    if figures:
        from . import report

        report.render_figures(results, outdir)


def _package_version():
    from . import __version__

    return __version__

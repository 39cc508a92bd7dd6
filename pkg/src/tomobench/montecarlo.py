"""Monte Carlo verification of the decay-rate analysis.

Simulates iid tomography experiments, estimates error probabilities
P(Delta(s_hat, s) > eps^2) and risks E[Delta(s_hat, s)] per trial count N,
fits the empirical decay, and compares against the predicted rates
(-eps^2 / sigma_1(G) for the error probability, tr[H F^+]/2N for the risk).
Also provides expected-state / average / worst-case tester scores and the
polar-grid sweep of both rate scalars.

Reproducibility: every random quantity derives from a counter-based Philox
stream keyed by (config seed, trial-count index, block index).  Blocks are
processed in a fixed order and reduced deterministically, so results are
bit-identical for any thread count (capped by TOMOBENCH_THREADS).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryStateError, InvariantViolation
from .estimators import Frequencies, is_physical, linear_solve_batch, mle_solve_batch
from .loss import LossSpec, evaluate_many
from .qstate import BlochState
from .rates import rate_report
from .tester import Tester, probabilities

BLOCK_SIZE = 2048
WILSON_Z = 1.96
FIT_MIN_COUNT = 10
ESTIMATORS = ("mle", "linear")


def thread_cap() -> int:
    """Worker threads for block processing; TOMOBENCH_THREADS overrides."""
    env = os.environ.get("TOMOBENCH_THREADS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise InvariantViolation("threads", f"TOMOBENCH_THREADS={env!r}") from exc
    return min(4, os.cpu_count() or 1)


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one simulated tomography experiment."""

    tester: Tester
    true_state: BlochState
    loss: LossSpec
    eps_sq: float
    n_values: tuple[int, ...]
    repetitions: int
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if self.eps_sq <= 0.0:
            raise InvariantViolation("eps_sq_positive", f"eps_sq = {self.eps_sq}")
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise InvariantViolation("n_values_positive", "trial counts must be >= 1")
        if any(b <= a for a, b in zip(self.n_values, self.n_values[1:])):
            raise InvariantViolation(
                "n_values_increasing", "trial counts must be strictly increasing"
            )
        if self.repetitions < 1:
            raise InvariantViolation("repetitions_min", "need at least one repetition")

    def describe(self) -> dict:
        return {
            "dim": self.tester.dim,
            "tester": self.tester.to_json_dict(),
            "true_state": self.true_state.s.tolist(),
            "loss": self.loss.name,
            "eps_sq": self.eps_sq,
            "n_values": list(self.n_values),
            "repetitions": self.repetitions,
            "seed": self.seed,
        }


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key))
    )


def sample_outcomes(tester: Tester, state: BlochState, n: int, seed: int) -> Frequencies:
    """One multinomial draw of n trials; deterministic given the seed."""
    if n < 1:
        raise InvariantViolation("trials_min", f"n = {n}")
    p = probabilities(tester, state)
    counts = _stream(seed).multinomial(n, np.clip(p, 0.0, None) / p.sum())
    return Frequencies.from_counts(counts)


@dataclass
class DecayPoint:
    n: int
    exceed_count: int
    reps: int
    p_hat: float
    wilson_low: float
    wilson_high: float
    censored: bool


@dataclass
class DecayRecord:
    """Per-N empirical error probabilities and the fitted decay slope."""

    points: list[DecayPoint]
    slope: float | None
    slope_stderr: float | None
    theory_slope: float
    ratio: float | None
    sigma1: float
    trace_g: float
    unphysical_total: int
    fit_message: str = ""

    @property
    def censored_n(self) -> list[int]:
        return [pt.n for pt in self.points if pt.censored]

    @property
    def all_censored(self) -> bool:
        return all(pt.censored for pt in self.points)


@dataclass
class RiskPoint:
    n: int
    mean_loss: float
    n_times_mean: float
    ratio: float


@dataclass
class RiskTable:
    """Per-N mean loss against the predicted tr[H F^+]/(2N) decay."""

    points: list[RiskPoint]
    theory_rate: float
    sigma1: float
    unphysical_total: int


def wilson_interval(successes: int, total: int, z: float = WILSON_Z) -> tuple[float, float]:
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2.0 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def _block_sizes(total: int) -> list[int]:
    sizes = [BLOCK_SIZE] * (total // BLOCK_SIZE)
    if total % BLOCK_SIZE:
        sizes.append(total % BLOCK_SIZE)
    return sizes


def _simulate_one_n(
    cfg: ExperimentConfig, estimator: str, probs: np.ndarray, n_index: int, n: int
) -> tuple[int, float, int]:
    """(exceedances, loss sum, unphysical count) over all repetitions at one N."""
    true_vec = cfg.true_state.s
    sizes = _block_sizes(cfg.repetitions)

    def run_block(block_index: int) -> tuple[int, float, int]:
        rng = _stream(cfg.seed, n_index, block_index)
        counts = rng.multinomial(n, probs, size=sizes[block_index])
        rel = counts / n
        if estimator == "mle":
            est, _, _, _ = mle_solve_batch(cfg.tester, rel)
            unphysical = 0
        else:
            est = linear_solve_batch(cfg.tester, rel)
            unphysical = sum(
                0 if is_physical(cfg.tester.dim, row) else 1 for row in est
            )
        losses = evaluate_many(cfg.loss, est, true_vec)
        losses = np.where(np.isnan(losses), np.inf, losses)
        return int((losses > cfg.eps_sq).sum()), float(losses.sum()), unphysical

    workers = thread_cap()
    if workers == 1 or len(sizes) == 1:
        results = [run_block(i) for i in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_block, range(len(sizes))))
    exceed = sum(r[0] for r in results)
    loss_sum = math.fsum(r[1] for r in results)
    unphysical = sum(r[2] for r in results)
    return exceed, loss_sum, unphysical


def _simulate(cfg: ExperimentConfig, estimator: str) -> list[tuple[int, float, int]]:
    if estimator not in ESTIMATORS:
        raise InvariantViolation("estimator", f"unknown estimator {estimator!r}")
    probs = probabilities(cfg.tester, cfg.true_state)
    probs = np.clip(probs, 0.0, None) / probs.sum()
    return [
        _simulate_one_n(cfg, estimator, probs, i, n)
        for i, n in enumerate(cfg.n_values)
    ]


def _fit_decay(points: list[DecayPoint]) -> tuple[float | None, float | None, str]:
    """Weighted least squares of log p_hat against N.

    Only points with FIT_MIN_COUNT <= exceedances <= reps - FIT_MIN_COUNT
    enter the fit, weighted by the inverse width of the log Wilson interval.
    """
    usable = [
        pt
        for pt in points
        if FIT_MIN_COUNT <= pt.exceed_count <= pt.reps - FIT_MIN_COUNT
    ]
    if len(usable) < 3:
        return None, None, (
            "not enough fit points (need >= 3 with exceedance counts in "
            f"[{FIT_MIN_COUNT}, reps - {FIT_MIN_COUNT}]); "
            "adjust n_values, repetitions, or eps_sq"
        )
    x = np.array([pt.n for pt in usable], dtype=float)
    y = np.log(np.array([pt.p_hat for pt in usable]))
    widths = np.array(
        [math.log(pt.wilson_high) - math.log(pt.wilson_low) for pt in usable]
    )
    wts = 1.0 / widths
    sw = wts.sum()
    xbar = (wts * x).sum() / sw
    ybar = (wts * y).sum() / sw
    sxx = (wts * (x - xbar) ** 2).sum()
    slope = float((wts * (x - xbar) * (y - ybar)).sum() / sxx)
    intercept = ybar - slope * xbar
    resid = y - intercept - slope * x
    dof = len(usable) - 2
    var = float((wts * resid * resid).sum() / dof / sxx) if dof > 0 else 0.0
    return slope, math.sqrt(max(var, 0.0)), ""


def error_probability_curve(cfg: ExperimentConfig, estimator: str = "mle") -> DecayRecord:
    """Empirical P(Delta > eps^2) per N with the fitted log-linear slope."""
    report = rate_report(cfg.tester, cfg.true_state, cfg.loss)
    stats = _simulate(cfg, estimator)
    points = []
    for n, (exceed, _, _) in zip(cfg.n_values, stats):
        low, high = wilson_interval(exceed, cfg.repetitions)
        points.append(
            DecayPoint(
                n=n,
                exceed_count=exceed,
                reps=cfg.repetitions,
                p_hat=exceed / cfg.repetitions,
                wilson_low=low,
                wilson_high=high,
                censored=exceed == 0,
            )
        )
    slope, stderr, message = _fit_decay(points)
    theory = -cfg.eps_sq / report.sigma1
    return DecayRecord(
        points=points,
        slope=slope,
        slope_stderr=stderr,
        theory_slope=theory,
        ratio=None if slope is None else slope / theory,
        sigma1=report.sigma1,
        trace_g=report.trace_g,
        unphysical_total=sum(s[2] for s in stats),
        fit_message=message,
    )


def risk_curve(cfg: ExperimentConfig, estimator: str = "mle") -> RiskTable:
    """Mean loss per N against the predicted tr[H F^+]/(2N)."""
    report = rate_report(cfg.tester, cfg.true_state, cfg.loss)
    stats = _simulate(cfg, estimator)
    theory = report.risk_rate
    points = []
    for n, (_, loss_sum, _) in zip(cfg.n_values, stats):
        mean = loss_sum / cfg.repetitions
        points.append(
            RiskPoint(n=n, mean_loss=mean, n_times_mean=n * mean, ratio=n * mean / theory)
        )
    return RiskTable(
        points=points,
        theory_rate=theory,
        sigma1=report.sigma1,
        unphysical_total=sum(s[2] for s in stats),
    )


def run_experiment(
    cfg: ExperimentConfig, estimator: str = "mle"
) -> tuple[DecayRecord, RiskTable]:
    """Both curves from a single simulation pass (identical draws either way)."""
    report = rate_report(cfg.tester, cfg.true_state, cfg.loss)
    stats = _simulate(cfg, estimator)
    unphysical = sum(s[2] for s in stats)
    points = []
    risk_points = []
    for n, (exceed, loss_sum, _) in zip(cfg.n_values, stats):
        low, high = wilson_interval(exceed, cfg.repetitions)
        points.append(
            DecayPoint(
                n=n,
                exceed_count=exceed,
                reps=cfg.repetitions,
                p_hat=exceed / cfg.repetitions,
                wilson_low=low,
                wilson_high=high,
                censored=exceed == 0,
            )
        )
        mean = loss_sum / cfg.repetitions
        risk_points.append(
            RiskPoint(
                n=n,
                mean_loss=mean,
                n_times_mean=n * mean,
                ratio=n * mean / report.risk_rate,
            )
        )
    slope, stderr, message = _fit_decay(points)
    theory = -cfg.eps_sq / report.sigma1
    decay = DecayRecord(
        points=points,
        slope=slope,
        slope_stderr=stderr,
        theory_slope=theory,
        ratio=None if slope is None else slope / theory,
        sigma1=report.sigma1,
        trace_g=report.trace_g,
        unphysical_total=unphysical,
        fit_message=message,
    )
    risk = RiskTable(
        points=risk_points,
        theory_rate=report.risk_rate,
        sigma1=report.sigma1,
        unphysical_total=unphysical,
    )
    return decay, risk


@dataclass
class AveragePerformance:
    mean: float
    stderr: float
    n_used: int
    n_skipped: int


def uniform_ball_sampler(rng: np.random.Generator) -> np.ndarray:
    """Uniform measure on the qubit Bloch ball."""
    u = rng.normal(size=3)
    u /= np.linalg.norm(u)
    return u * rng.uniform() ** (1.0 / 3.0)


def average_performance(
    tester: Tester,
    loss: LossSpec,
    sampler="uniform_ball",
    n_samples: int = 2000,
    seed: int = 0,
) -> AveragePerformance:
    """Monte Carlo mean of sigma_1(G_s) under a measure on the state set.

    Boundary draws (where the rate analysis is undefined) are skipped and
    counted.  ``sampler`` is either "uniform_ball" (qubits) or a callable
    rng -> parameter vector.
    """
    if sampler == "uniform_ball":
        if tester.dim != 2:
            raise InvariantViolation(
                "sampler", "uniform_ball sampling is defined for dim 2"
            )
        draw = uniform_ball_sampler
    elif callable(sampler):
        draw = sampler
    else:
        raise InvariantViolation("sampler", f"unknown sampler {sampler!r}")
    rng = _stream(seed)
    values = []
    skipped = 0
    for _ in range(n_samples):
        vec = np.asarray(draw(rng), dtype=float)
        try:
            state = BlochState(tester.dim, vec)
            report = rate_report(tester, state, loss)
        except (BoundaryStateError, InvariantViolation):
            skipped += 1
            continue
        values.append(report.sigma1)
    if not values:
        raise InvariantViolation("sampler", "sampler produced no interior states")
    arr = np.array(values)
    stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return AveragePerformance(
        mean=float(arr.mean()), stderr=stderr, n_used=arr.size, n_skipped=skipped
    )


@dataclass(frozen=True)
class WorstCaseGrid:
    """Search grid: direction count, radii, and the local-ascent budget."""

    n_directions: int = 200
    radii: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    refine_iters: int = 80
    boundary_margin: float = 1e-6
    seed: int = 0


@dataclass
class WorstCaseResult:
    value: float
    argmax: np.ndarray
    n_skipped: int


def _fibonacci_sphere(n: int) -> np.ndarray:
    golden = (1.0 + math.sqrt(5.0)) / 2.0
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = 2.0 * math.pi * i / golden
    r = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def worst_case_performance(
    tester: Tester, loss: LossSpec, grid: WorstCaseGrid | None = None
) -> WorstCaseResult:
    """max over interior states of sigma_1(G_s), by grid search plus local ascent."""
    grid = grid or WorstCaseGrid()
    k = tester.w.shape[1]
    if k == 3:
        directions = _fibonacci_sphere(grid.n_directions)
    else:
        draws = _stream(grid.seed, 1).normal(size=(grid.n_directions, k))
        directions = draws / np.linalg.norm(draws, axis=1, keepdims=True)

    def score(vec: np.ndarray) -> float | None:
        if np.linalg.norm(vec) > 1.0 - grid.boundary_margin:
            return None
        try:
            return rate_report(tester, BlochState(tester.dim, vec), loss).sigma1
        except (BoundaryStateError, InvariantViolation):
            return None

    skipped = 0
    best_val = -math.inf
    best_vec = None
    for r in grid.radii:
        for u in directions:
            val = score(r * u)
            if val is None:
                skipped += 1
                continue
            if val > best_val:
                best_val, best_vec = val, r * u
    if best_vec is None:
        raise InvariantViolation("grid", "no grid point admits the rate analysis")

    step = 0.05
    for _ in range(grid.refine_iters):
        improved = False
        for i in range(k):
            for sign in (1.0, -1.0):
                cand = best_vec.copy()
                cand[i] += sign * step
                nrm = np.linalg.norm(cand)
                if nrm > 1.0 - grid.boundary_margin:
                    cand *= (1.0 - grid.boundary_margin) / nrm
                val = score(cand)
                if val is None:
                    skipped += 1
                    continue
                if val > best_val:
                    best_val, best_vec = val, cand
                    improved = True
        if not improved:
            step *= 0.5
            if step < 1e-9:
                break
    return WorstCaseResult(value=best_val, argmax=best_vec, n_skipped=skipped)


@dataclass
class SweepRow:
    theta: float
    phi: float
    tr_g: float
    sigma1_g: float


@dataclass
class SweepTable:
    radius: float
    rows: list[SweepRow]


def figure2_sweep(
    tester: Tester, radius: float, loss: LossSpec, n_theta: int, n_phi: int
) -> SweepTable:
    """Both rate scalars on a polar grid of Bloch vectors at fixed radius.

    s = r (sin t cos p, sin t sin p, cos t) with t in [0, pi] inclusive and
    p in [0, 2 pi) exclusive.
    """
    if tester.dim != 2:
        raise InvariantViolation("dim_match", "polar sweep is defined for dim 2")
    if not 0.0 < radius < 1.0:
        raise InvariantViolation("radius_range", f"need 0 < r < 1, got {radius}")
    if n_theta < 1 or n_phi < 1:
        raise InvariantViolation("grid", "grid must be at least 1x1")
    thetas = np.linspace(0.0, math.pi, n_theta)
    phis = np.linspace(0.0, 2.0 * math.pi, n_phi, endpoint=False)
    rows = []
    for t in thetas:
        for p in phis:
            vec = radius * np.array(
                [math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)]
            )
            report = rate_report(tester, BlochState(2, vec), loss)
            rows.append(
                SweepRow(theta=float(t), phi=float(p), tr_g=report.trace_g,
                         sigma1_g=report.sigma1)
            )
    return SweepTable(radius=radius, rows=rows)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def decay_csv(record: DecayRecord) -> str:
    lines = ["n,exceed_count,reps,p_hat,wilson_low,wilson_high,censored"]
    for pt in record.points:
        lines.append(
            f"{pt.n},{pt.exceed_count},{pt.reps},{_fmt(pt.p_hat)},"
            f"{_fmt(pt.wilson_low)},{_fmt(pt.wilson_high)},{int(pt.censored)}"
        )
    return "\n".join(lines) + "\n"


def risk_csv(table: RiskTable) -> str:
    lines = ["n,mean_loss,n_times_mean_loss,theory_risk_rate,ratio"]
    for pt in table.points:
        lines.append(
            f"{pt.n},{_fmt(pt.mean_loss)},{_fmt(pt.n_times_mean)},"
            f"{_fmt(table.theory_rate)},{_fmt(pt.ratio)}"
        )
    return "\n".join(lines) + "\n"


def sweep_csv(table: SweepTable) -> str:
    lines = ["theta,phi,tr_g,sigma1_g"]
    for row in table.rows:
        lines.append(
            f"{_fmt(row.theta)},{_fmt(row.phi)},{_fmt(row.tr_g)},{_fmt(row.sigma1_g)}"
        )
    return "\n".join(lines) + "\n"

"""Tuning-parameter grids and cross-validated selection.

Fitting proceeds in three steps: retrieve a labeled sample, score a grid
of smoothing parameters (optionally jointly with the bandwidth) on the
validation block, and freeze the winning estimator.  The grid always
contains theta1 = 0, so the selected fit never scores worse on validation
than the target-only kernel estimate.
"""

from dataclasses import dataclass, replace

import numpy as np

from .blackbox import FunctionModel, PoolOracle
from .core import ConfigError, HolderParams, default_quadrature_points, rng_stream
from .estimator import (
    PersonalizedEstimator,
    VarianceField,
    chebyshev_distances,
    euclidean_distances,
    pilot_bandwidth,
    smoothed_window_means,
)
from .sampling import (
    retrieve_budgeted,
    retrieve_from_pool,
    retrieve_uniform_small_domain,
)

__all__ = [
    "ThetaGrid",
    "build_grid",
    "select_theta",
    "SelectionResult",
    "select_theta_h",
    "FitConfig",
    "FitResult",
    "default_bandwidth_set",
    "rule_bandwidth",
    "fit_personalized",
    "fit_personalized_small_domain",
    "fit_personalized_pool",
    "fit_single_task",
]


@dataclass(frozen=True)
class ThetaGrid:
    """Lexicographically sorted grid {k*c1/m} x {j/m} with m = ceil(ln n)."""

    c1: float
    n: int
    points: tuple

    @property
    def m(self):
        return int(round(len(self.points) ** 0.5)) - 1


def build_grid(n, c1):
    n = int(n)
    if n < 3:
        raise ValueError("grid needs n >= 3")
    if not c1 > 0:
        raise ValueError("c1 must be positive")
    m = int(np.ceil(np.log(n)))
    points = tuple(
        HolderParams(k * c1 / m, j / m) for k in range(m + 1) for j in range(m + 1)
    )
    return ThetaGrid(c1=float(c1), n=n, points=points)


def select_theta(candidates, val_x, val_y):
    """Pick the candidate minimizing the validation sum of squared errors.

    Ties resolve to the lexicographically smallest (theta1, theta2).
    Returns the winner and the full score table.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    val_x = np.atleast_2d(np.asarray(val_x, float))
    val_y = np.asarray(val_y, float)
    if val_x.shape[0] == 0:
        raise ValueError("validation set must be nonempty")
    scores = {}
    best = None
    best_score = np.inf
    for theta in sorted(candidates):
        pred = candidates[theta].predict_batch(val_x)
        score = float(((val_y - pred) ** 2).sum())
        scores[theta] = score
        if score < best_score:
            best = theta
            best_score = score
    return best, scores


@dataclass(frozen=True)
class SelectionResult:
    theta: HolderParams
    bandwidth: float
    score: float
    table: tuple  # rows (theta, bandwidth, score)


def _theta2_powers(dist2, thetas):
    cache = {}
    for theta in thetas:
        t2 = theta.theta2
        if t2 not in cache:
            cache[t2] = dist2**t2 if t2 > 0 else np.where(dist2 > 0, 1.0, 0.0)
    return cache


def _score_pairs(pairs, train_x, train_y, f_train, val_x, val_y, f_val):
    """Validation scores for (theta, h) pairs sharing one training block."""
    dist_inf = chebyshev_distances(val_x, train_x)
    dist2 = euclidean_distances(val_x, train_x)
    powers = _theta2_powers(dist2, [theta for theta, _ in pairs])
    rows = []
    for theta, h in pairs:
        delta = smoothed_window_means(
            train_y, f_train, f_val, dist_inf, powers[theta.theta2], theta.theta1, h
        )
        score = float(((val_y - (f_val + delta)) ** 2).sum())
        rows.append((theta, float(h), score))
    return rows


def select_theta_h(thetas, bandwidths, train_x, train_y, val_x, val_y, model, f_train=None, f_val=None):
    """Joint argmin over the (theta, h) grid of the validation squared error.

    Ties resolve to the smaller bandwidth first, then the lexicographically
    smaller theta.
    """
    thetas = sorted(thetas)
    bandwidths = sorted(float(h) for h in bandwidths)
    if not bandwidths:
        raise ValueError("need at least one bandwidth")
    if any(h <= 0 for h in bandwidths):
        raise ValueError("bandwidths must be positive")
    train_x = np.atleast_2d(np.asarray(train_x, float))
    train_y = np.asarray(train_y, float)
    val_x = np.atleast_2d(np.asarray(val_x, float))
    val_y = np.asarray(val_y, float)
    if val_x.shape[0] == 0:
        raise ValueError("validation set must be nonempty")
    if f_train is None:
        f_train = model.predict_batch(train_x)
    if f_val is None:
        f_val = model.predict_batch(val_x)
    pairs = [(theta, h) for h in bandwidths for theta in thetas]
    rows = _score_pairs(pairs, train_x, train_y, f_train, val_x, val_y, f_val)
    best = None
    for theta, h, score in rows:
        if best is None or score < best[2]:
            best = (theta, h, score)
    return SelectionResult(theta=best[0], bandwidth=best[1], score=best[2], table=tuple(rows))


@dataclass
class FitConfig:
    """Knobs for the fitting pipelines; defaults match the shipped experiments."""

    c1: float = 2.0
    pilot_fraction: float = 0.25
    split: str = "reuse"
    bandwidth: object = "cv"  # "cv", "rule", a number, or a sequence of numbers
    full_bandwidth_set: bool = False
    h_sigma: float | None = None
    quadrature_points_per_dim: int | None = None
    thetas: tuple | None = None
    synthetic_cap: int = 50_000

    def validate(self):
        if not self.c1 > 0:
            raise ConfigError("c1 must be positive")
        if not 0 < self.pilot_fraction < 1:
            raise ConfigError("pilot_fraction must lie in (0, 1)")
        if self.split not in ("reuse", "strict"):
            raise ConfigError(f"unknown split mode {self.split!r}")
        if isinstance(self.bandwidth, str) and self.bandwidth not in ("cv", "rule"):
            raise ConfigError("bandwidth must be 'cv', 'rule', a number, or a list")
        return self

    def to_dict(self):
        return {
            "c1": self.c1,
            "pilot_fraction": self.pilot_fraction,
            "split": self.split,
            "bandwidth": self.bandwidth
            if isinstance(self.bandwidth, (str, int, float))
            else [float(h) for h in self.bandwidth],
            "full_bandwidth_set": self.full_bandwidth_set,
            "h_sigma": self.h_sigma,
            "quadrature_points_per_dim": self.quadrature_points_per_dim,
            "thetas": None
            if self.thetas is None
            else [[t.theta1, t.theta2] for t in self.thetas],
            "synthetic_cap": self.synthetic_cap,
        }


@dataclass
class FitResult:
    """Frozen estimator plus everything needed to audit the fit."""

    estimator: PersonalizedEstimator
    theta: HolderParams
    bandwidth: float
    score: float
    score_table: tuple
    retrieval: object
    mean_sigma: float | None
    n: int
    config: FitConfig

    def to_dict(self):
        return {
            "theta": {"theta1": self.theta.theta1, "theta2": self.theta.theta2},
            "bandwidth": self.bandwidth,
            "validation_score": self.score,
            "mean_sigma": self.mean_sigma,
            "n": self.n,
            "config": self.config.to_dict(),
            "retrieval": self.retrieval.to_dict() if self.retrieval is not None else None,
            "score_table": [
                {"theta1": t.theta1, "theta2": t.theta2, "bandwidth": h, "score": s}
                for t, h, s in self.score_table
            ],
        }


def default_bandwidth_set(n, scale, full=False):
    """Harmonic bandwidth ladder scale/k, k = 1..ceil(sqrt(n)) (or ..n)."""
    top = int(n) if full else int(np.ceil(np.sqrt(n)))
    return [scale / k for k in range(1, max(top, 1) + 1)]


def rule_bandwidth(theta2, n, dim, sigma_bar, domain):
    """Deterministic bandwidth balancing bias and variance for one theta2.

    Follows h = min(sigma_bar**(2/(2*theta2+d)) * n**(-1/(2*theta2+d)),
    min_edge/2), floored so windows keep order-one occupancy.
    """
    expo = 2.0 * theta2 + dim
    raw = max(sigma_bar, 1e-12) ** (2.0 / expo) * float(n) ** (-1.0 / expo)
    cap = domain.min_edge() / 2.0
    floor = min(cap, 0.5 * domain.max_edge() * float(n) ** (-1.0 / dim))
    return float(min(max(raw, floor), cap))


def _resolve_bandwidths(config, n, domain, cap):
    """Candidate bandwidths for CV modes; None means rule mode."""
    bw = config.bandwidth
    if isinstance(bw, str):
        if bw == "rule":
            return None
        scale = cap if cap is not None else domain.max_edge()
        ladder = default_bandwidth_set(n, scale, full=config.full_bandwidth_set)
        return ladder
    if np.isscalar(bw):
        values = [float(bw)]
    else:
        values = [float(h) for h in bw]
    if not values:
        raise ConfigError("bandwidth list must be nonempty")
    if any(h <= 0 for h in values):
        raise ConfigError("bandwidths must be positive")
    if cap is not None:
        bad = [h for h in values if h > cap * (1 + 1e-12)]
        if bad:
            raise ConfigError(
                f"bandwidth {bad[0]} exceeds the small-domain edge {cap}"
            )
    return values


def _mean_sigma_for(rr, config, n, domain):
    qpd = config.quadrature_points_per_dim
    fld = rr.variance_field
    if fld is None:
        # uniform retrieval has no pilot field; estimate from the validation block
        ss = rr.samples
        if ss.val_idx.size == 0:
            return None
        h_sig = config.h_sigma if config.h_sigma is not None else pilot_bandwidth(n, domain.dim)
        fld = VarianceField(ss.val_x, ss.val_y, h_sig, domain)
    return fld.mean_sigma(qpd or default_quadrature_points(domain.dim))


def _select_and_build(model, domain, rr, n, config, cap=None):
    ss = rr.samples
    train_x, train_y = ss.train_x, ss.train_y
    val_x, val_y = ss.val_x, ss.val_y
    if train_x.shape[0] == 0 or val_x.shape[0] == 0:
        raise ConfigError("retrieval produced an empty training or validation block")
    thetas = tuple(config.thetas) if config.thetas else build_grid(n, config.c1).points
    thetas = tuple(t if isinstance(t, HolderParams) else HolderParams(*t) for t in thetas)
    f_train = model.predict_batch(train_x)
    f_val = model.predict_batch(val_x)
    mean_sigma = _mean_sigma_for(rr, config, n, domain)
    bandwidths = _resolve_bandwidths(config, n, domain, cap)
    if bandwidths is None:
        sigma_bar = mean_sigma if mean_sigma is not None else 1.0
        pairs = [
            (theta, min(rule_bandwidth(theta.theta2, n, domain.dim, sigma_bar, domain), cap)
             if cap is not None
             else rule_bandwidth(theta.theta2, n, domain.dim, sigma_bar, domain))
            for theta in sorted(thetas)
        ]
        rows = _score_pairs(pairs, train_x, train_y, f_train, val_x, val_y, f_val)
        best = None
        for theta, h, score in rows:
            if best is None or score < best[2]:
                best = (theta, h, score)
        selection = SelectionResult(best[0], best[1], best[2], tuple(rows))
    else:
        selection = select_theta_h(
            thetas, bandwidths, train_x, train_y, val_x, val_y, model,
            f_train=f_train, f_val=f_val,
        )
    estimator = PersonalizedEstimator(
        train_x, train_y, model, selection.theta, selection.bandwidth, domain,
        f_train=f_train,
    )
    return FitResult(
        estimator=estimator,
        theta=selection.theta,
        bandwidth=selection.bandwidth,
        score=selection.score,
        score_table=selection.table,
        retrieval=rr.diagnostics,
        mean_sigma=mean_sigma,
        n=n,
        config=config,
    )


def fit_personalized(model, domain, n, oracle, config=None, seed=0):
    """Full pipeline on a constant-size target region.

    Retrieves n labeled samples (uniform pilot plus variance-weighted
    draws), scores the smoothing grid on the validation block, and returns
    the frozen winning estimator with its report.
    """
    cfg = (config or FitConfig()).validate()
    rng = rng_stream(seed, "retrieval")
    rr = retrieve_budgeted(
        n,
        cfg.pilot_fraction,
        domain,
        oracle,
        rng,
        split=cfg.split,
        h_sigma=cfg.h_sigma,
        quadrature_points_per_dim=cfg.quadrature_points_per_dim,
    )
    return _select_and_build(model, domain, rr, n, cfg)


def fit_personalized_small_domain(model, domain, n, oracle, config=None, seed=0):
    """Pipeline variant for small target boxes: uniform retrieval, h <= edge."""
    cfg = (config or FitConfig()).validate()
    nu = domain.min_edge()
    rng = rng_stream(seed, "retrieval")
    rr = retrieve_uniform_small_domain(n, domain, oracle, cfg.pilot_fraction, rng)
    return _select_and_build(model, domain, rr, n, cfg, cap=nu)


def fit_personalized_pool(
    model, domain, n, pilot_size, pool_x, pool_y=None, oracle=None, config=None, seed=0
):
    """Pipeline over a fixed pool of unlabeled covariates (labels on demand)."""
    cfg = (config or FitConfig()).validate()
    if oracle is None:
        if pool_y is None:
            raise ConfigError("provide pool labels or an oracle")
        oracle = PoolOracle(pool_x, pool_y)
    rng = rng_stream(seed, "retrieval")
    rr = retrieve_from_pool(
        n,
        pilot_size,
        pool_x,
        oracle,
        rng,
        split=cfg.split,
        synthetic_cap=cfg.synthetic_cap,
        h_sigma=cfg.h_sigma,
        quadrature_points_per_dim=cfg.quadrature_points_per_dim,
        domain=domain,
    )
    return _select_and_build(model, domain, rr, n, cfg)


def fit_single_task(domain, n, oracle, config=None, seed=0):
    """Target-only kernel estimate: theta1 = 0 with a constant-zero model."""
    cfg = (config or FitConfig()).validate()
    cfg = replace(cfg, thetas=(HolderParams(0.0, 0.0),))
    model = FunctionModel(lambda xs: np.zeros(np.atleast_2d(xs).shape[0]))
    return fit_personalized_small_domain(model, domain, n, oracle, cfg, seed)

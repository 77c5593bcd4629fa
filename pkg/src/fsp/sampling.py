"""Sample retrieval: plug-in densities, rejection sampling, budgeted and
pool-based retrieval schemes.

The weighted schemes allocate more of the labeling budget to regions with
higher estimated noise; the pool scheme approximates that allocation over
a fixed set of unlabeled points via a logistic density-ratio fit.
"""

from dataclasses import dataclass, field

import numpy as np

from .blackbox import PoolOracle
from .core import (
    BudgetError,
    ConfigError,
    Domain,
    EnvelopeError,
    SampleSet,
    SeparationError,
    default_quadrature_points,
)
from .estimator import VarianceField, pilot_bandwidth

__all__ = [
    "SamplingDensity",
    "RetrievalDiagnostics",
    "RetrievalResult",
    "uniform_density",
    "plug_in_density",
    "rejection_sample",
    "retrieve_budgeted",
    "retrieve_uniform_small_domain",
    "LogisticFit",
    "fit_density_ratio",
    "weighted_sample_without_replacement",
    "retrieve_from_pool",
]

_MIN_ACCEPT_RATE = 1e-4
_ACCEPT_WINDOW = 100_000


@dataclass(frozen=True)
class SamplingDensity:
    """Normalized sampling density on a box, ready for rejection sampling.

    `weight` is the unnormalized density, `normalization` its integral (by
    midpoint quadrature), and `envelope` bounds sup pdf * volume with a
    safety margin, so that pdf(x) * volume / envelope <= 1.
    """

    domain: object
    weight: object
    normalization: float
    envelope: float
    floor: float = 0.0
    floor_active_fraction: float = 0.0
    uniform_fallback: bool = False

    def pdf(self, xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        return np.asarray(self.weight(xs), float) / self.normalization


def uniform_density(domain, safety=1.1):
    """The flat density on the box (acceptance rate 1/safety)."""
    volume = domain.volume()
    return SamplingDensity(
        domain=domain,
        weight=lambda xs: np.ones(np.atleast_2d(xs).shape[0]),
        normalization=volume,
        envelope=float(safety),
        uniform_fallback=True,
    )


def plug_in_density(variance_field, quadrature_points_per_dim=None, floor_fraction=0.01, safety=1.1):
    """Density proportional to the estimated noise level sigma-hat.

    The weight is floored at floor_fraction times the average sigma-hat so
    every subregion keeps positive mass; a field that is identically zero
    falls back to the uniform density with the fallback flag set.
    """
    domain = variance_field.domain
    qpd = quadrature_points_per_dim or default_quadrature_points(domain.dim)
    centers, _ = domain.grid(qpd)
    sig = variance_field.sigma_batch(centers)
    mean_sig = float(sig.mean())
    if mean_sig <= 0.0:
        return uniform_density(domain, safety=safety)
    floor = floor_fraction * mean_sig

    def weight(xs):
        return np.maximum(variance_field.sigma_batch(xs), floor)

    w_grid = np.maximum(sig, floor)
    grid_mean = float(w_grid.mean())
    normalization = grid_mean * domain.volume()
    envelope = safety * float(w_grid.max()) / grid_mean
    return SamplingDensity(
        domain=domain,
        weight=weight,
        normalization=normalization,
        envelope=envelope,
        floor=floor,
        floor_active_fraction=float((sig < floor).mean()),
    )


def rejection_sample(density, count, rng, return_diagnostics=False):
    """Draw `count` i.i.d. points from the density by accept/reject.

    Proposals are uniform on the box and accepted with probability
    pdf(x) * volume / envelope.  A sustained acceptance rate below 1e-4
    over 1e5 consecutive proposals raises EnvelopeError.
    """
    count = int(count)
    if count < 0:
        raise ValueError("count must be nonnegative")
    domain = density.domain
    volume = domain.volume()
    out = np.empty((count, domain.dim))
    filled = 0
    proposed_total = 0
    accepted_total = 0
    window_proposed = 0
    window_accepted = 0
    rate_estimate = 1.0 / density.envelope
    while filled < count:
        need = count - filled
        size = int(min(262_144, max(64, np.ceil(1.1 * need / max(rate_estimate, 1e-3)))))
        xs = domain.uniform(size, rng)
        accept_prob = density.pdf(xs) * volume / density.envelope
        keep = rng.random(size) < accept_prob
        taken = xs[keep][:need]
        out[filled : filled + len(taken)] = taken
        filled += len(taken)
        proposed_total += size
        accepted_total += int(keep.sum())
        window_proposed += size
        window_accepted += int(keep.sum())
        rate_estimate = max(window_accepted, 1) / window_proposed
        if window_proposed >= _ACCEPT_WINDOW:
            if window_accepted / window_proposed < _MIN_ACCEPT_RATE:
                raise EnvelopeError(
                    f"acceptance rate {window_accepted / window_proposed:.2e} over "
                    f"{window_proposed} proposals; the envelope is misconfigured"
                )
            window_proposed = 0
            window_accepted = 0
    if return_diagnostics:
        rate = accepted_total / proposed_total if proposed_total else 1.0
        return out, {"proposals": proposed_total, "acceptance_rate": rate}
    return out


@dataclass
class RetrievalDiagnostics:
    """Per-retrieval record serialized into run reports."""

    scheme: str
    acceptance_rate: float | None = None
    proposals: int = 0
    floor: float | None = None
    floor_active_fraction: float | None = None
    uniform_fallback: bool = False
    synthetic_draws: int | None = None
    synthetic_cap_applied: bool = False
    logistic_converged: bool | None = None
    logistic_iterations: int | None = None
    pool_indices: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self):
        out = {
            "scheme": self.scheme,
            "acceptance_rate": self.acceptance_rate,
            "proposals": self.proposals,
            "floor": self.floor,
            "floor_active_fraction": self.floor_active_fraction,
            "uniform_fallback": self.uniform_fallback,
            "synthetic_draws": self.synthetic_draws,
            "synthetic_cap_applied": self.synthetic_cap_applied,
            "logistic_converged": self.logistic_converged,
            "logistic_iterations": self.logistic_iterations,
        }
        return {k: v for k, v in out.items() if v is not None}


@dataclass
class RetrievalResult:
    """Retrieved samples plus the variance field and density behind them."""

    samples: SampleSet
    variance_field: VarianceField | None
    density: SamplingDensity | None
    diagnostics: RetrievalDiagnostics


def _pilot_split(n0, split):
    """Index partitions for the pilot block: (variance rows, validation rows)."""
    if split == "strict":
        half = n0 // 2
        return np.arange(half), np.arange(half, n0)
    if split == "reuse":
        return np.arange(n0), np.arange(n0)
    raise ConfigError(f"unknown split mode {split!r} (use 'strict' or 'reuse')")


def retrieve_budgeted(
    n,
    pilot_fraction,
    domain,
    oracle,
    rng,
    split="reuse",
    h_sigma=None,
    quadrature_points_per_dim=None,
):
    """Two-phase retrieval: uniform pilot, then draws from the plug-in density.

    The pilot of size n0 = round(pilot_fraction * n) estimates the noise
    level; the remaining n - n0 covariates are drawn proportional to it.
    Training indices are the weighted block {n0, ..., n-1}; validation is
    the second pilot half under 'strict' or the whole pilot under 'reuse'.
    """
    n = int(n)
    if n < 8:
        raise ConfigError("budgeted retrieval needs n >= 8")
    if not 0 < pilot_fraction < 1:
        raise ConfigError("pilot_fraction must lie in (0, 1)")
    n0 = int(round(pilot_fraction * n))
    n0 = min(max(n0, 2), n - 1)
    pilot_x = domain.uniform(n0, rng)
    pilot_y = oracle.label(pilot_x, rng)
    var_rows, val_rows = _pilot_split(n0, split)
    h_sig = h_sigma if h_sigma is not None else pilot_bandwidth(n, domain.dim)
    fld = VarianceField(pilot_x[var_rows], pilot_y[var_rows], h_sig, domain)
    density = plug_in_density(fld, quadrature_points_per_dim)
    step2_x, rej = rejection_sample(density, n - n0, rng, return_diagnostics=True)
    step2_y = oracle.label(step2_x, rng)
    ss = SampleSet(
        np.vstack([pilot_x, step2_x]),
        np.concatenate([pilot_y, step2_y]),
        train_idx=np.arange(n0, n),
        val_idx=val_rows,
    )
    diag = RetrievalDiagnostics(
        scheme="budgeted",
        acceptance_rate=rej["acceptance_rate"],
        proposals=rej["proposals"],
        floor=density.floor,
        floor_active_fraction=density.floor_active_fraction,
        uniform_fallback=density.uniform_fallback,
    )
    return RetrievalResult(ss, fld, density, diag)


def retrieve_uniform_small_domain(n, domain, oracle, val_fraction, rng):
    """Uniform retrieval for small target boxes: validation first, then training."""
    n = int(n)
    if n < 4:
        raise ConfigError("uniform retrieval needs n >= 4")
    if not 0 < val_fraction < 1:
        raise ConfigError("val_fraction must lie in (0, 1)")
    n0 = min(max(int(round(val_fraction * n)), 1), n - 1)
    xs = domain.uniform(n, rng)
    ys = oracle.label(xs, rng)
    ss = SampleSet(xs, ys, train_idx=np.arange(n0, n), val_idx=np.arange(n0))
    return RetrievalResult(ss, None, None, RetrievalDiagnostics(scheme="uniform"))


@dataclass(frozen=True)
class LogisticFit:
    """Coefficients from the density-ratio logistic regression."""

    beta: np.ndarray
    converged: bool
    iterations: int
    gradient_norm: float

    @property
    def intercept(self):
        return float(self.beta[0])

    @property
    def slope(self):
        return self.beta[1:]


def _log_likelihood(scores, labels):
    return float(labels @ scores - np.logaddexp(0.0, scores).sum())


def fit_density_ratio(class0_x, class1_x, max_iter=100, tol=1e-8, ridge=1e-8):
    """Logistic regression separating two point clouds, by damped Newton.

    class0_x are pool (reference) points, class1_x synthetic target draws;
    the fitted log-odds x'beta estimates the log density ratio up to the
    intercept.  Divergence of the coefficient norm signals perfect
    separation and raises SeparationError.
    """
    a = np.atleast_2d(np.asarray(class0_x, float))
    b = np.atleast_2d(np.asarray(class1_x, float))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("both classes must be nonempty")
    x = np.vstack([a, b])
    design = np.hstack([np.ones((x.shape[0], 1)), x])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise np.linalg.LinAlgError("design matrix is rank deficient")
    labels = np.concatenate([np.zeros(a.shape[0]), np.ones(b.shape[0])])
    beta = np.zeros(design.shape[1])
    scores = design @ beta
    loglik = _log_likelihood(scores, labels)
    grad_norm = np.inf
    iterations = 0
    for iterations in range(1, max_iter + 1):
        p = 1.0 / (1.0 + np.exp(-scores))
        grad = design.T @ (labels - p)
        grad_norm = float(np.abs(grad).max())
        if grad_norm <= tol:
            iterations -= 1
            break
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None]) + ridge * np.eye(design.shape[1])
        direction = np.linalg.solve(hess, grad)
        step = 1.0
        for _ in range(30):
            candidate = beta + step * direction
            cand_scores = design @ candidate
            cand_loglik = _log_likelihood(cand_scores, labels)
            if cand_loglik >= loglik:
                break
            step *= 0.5
        beta = beta + step * direction
        scores = design @ beta
        loglik = _log_likelihood(scores, labels)
        if np.linalg.norm(beta) > 1e3:
            raise SeparationError(
                "perfect separation suspected (coefficient norm exceeded 1e3); "
                "use larger or more overlapping point sets"
            )
    if loglik > -1e-6:
        # a numerically saturated likelihood means the MLE is unbounded
        raise SeparationError(
            "perfect separation suspected (likelihood saturated at 0); "
            "use larger or more overlapping point sets"
        )
    return LogisticFit(
        beta=beta,
        converged=grad_norm <= tol,
        iterations=iterations,
        gradient_norm=grad_norm,
    )


def weighted_sample_without_replacement(weights, count, rng):
    """Sequential weighted sampling without replacement (exponential-keys form).

    Returns `count` indices; the order matches sequential draws with weight
    renormalization after each pick.
    """
    weights = np.asarray(weights, float)
    count = int(count)
    if count > weights.size:
        raise ValueError("cannot draw more items than available")
    if (weights < 0).any():
        raise ValueError("weights must be nonnegative")
    keys = rng.exponential(size=weights.size) / np.clip(weights, 1e-300, None)
    order = np.argsort(keys, kind="stable")
    return order[:count]


def retrieve_from_pool(
    n,
    pilot_size,
    pool_x,
    oracle,
    rng,
    split="reuse",
    synthetic_cap=50_000,
    h_sigma=None,
    quadrature_points_per_dim=None,
    domain=None,
):
    """Budgeted retrieval from a fixed pool of unlabeled covariates.

    A uniform pilot estimates the noise level; synthetic draws from the
    plug-in density and the remaining pool feed a logistic density-ratio
    fit whose weights select the rest of the labeled set, without
    replacement.  When n equals the pool size the remaining points are all
    selected and the ratio step is skipped.
    """
    pool_x = np.atleast_2d(np.asarray(pool_x, float))
    n = int(n)
    n0 = int(pilot_size)
    big_n = pool_x.shape[0]
    if not (big_n >= n > n0 >= 4):
        raise ConfigError(f"need pool N >= n > pilot >= 4, got N={big_n}, n={n}, pilot={n0}")
    if domain is None:
        pad = 1e-9 * np.maximum(1.0, np.abs(pool_x).max(axis=0))
        domain = Domain(pool_x.min(axis=0) - pad, pool_x.max(axis=0) + pad)

    pilot_positions = rng.choice(big_n, size=n0, replace=False)
    pilot_x = pool_x[pilot_positions]
    pilot_y = _pool_labels(oracle, pool_x, pilot_positions, rng)
    var_rows, val_rows = _pilot_split(n0, split)
    h_sig = h_sigma if h_sigma is not None else pilot_bandwidth(n, domain.dim)
    fld = VarianceField(pilot_x[var_rows], pilot_y[var_rows], h_sig, domain)
    density = plug_in_density(fld, quadrature_points_per_dim)

    rest_mask = np.ones(big_n, dtype=bool)
    rest_mask[pilot_positions] = False
    rest_positions = np.flatnonzero(rest_mask)
    take = n - n0
    diag = RetrievalDiagnostics(
        scheme="pool",
        floor=density.floor,
        floor_active_fraction=density.floor_active_fraction,
        uniform_fallback=density.uniform_fallback,
    )
    if take == rest_positions.size:
        selected = rest_positions
    else:
        m_synth = min(big_n - n0, int(synthetic_cap))
        synth_x, rej = rejection_sample(density, m_synth, rng, return_diagnostics=True)
        fit = fit_density_ratio(pool_x[rest_positions], synth_x)
        scores = pool_x[rest_positions] @ fit.slope + fit.intercept
        weights = np.exp(scores - scores.max())
        order = weighted_sample_without_replacement(weights, take, rng)
        selected = rest_positions[order]
        diag.acceptance_rate = rej["acceptance_rate"]
        diag.proposals = rej["proposals"]
        diag.synthetic_draws = m_synth
        diag.synthetic_cap_applied = m_synth < big_n - n0
        diag.logistic_converged = fit.converged
        diag.logistic_iterations = fit.iterations
    selected_y = _pool_labels(oracle, pool_x, selected, rng)
    ss = SampleSet(
        np.vstack([pilot_x, pool_x[selected]]),
        np.concatenate([pilot_y, selected_y]),
        train_idx=np.arange(n0, n),
        val_idx=val_rows,
    )
    diag.pool_indices = np.concatenate([pilot_positions, selected])
    return RetrievalResult(ss, fld, density, diag)


def _pool_labels(oracle, pool_x, positions, rng):
    if isinstance(oracle, PoolOracle):
        if oracle.remaining < positions.size:
            raise BudgetError("pool oracle cannot supply enough labels")
        return oracle.label_indices(positions)
    return oracle.label(pool_x[positions], rng)

"""Kernel machinery: bias correction, personalized prediction, pilot variance.

The bias estimator averages y_i minus the locally-smoothed black-box value
over a sup-norm window of radius h around the query point; the personalized
prediction adds that average back onto the black-box value at the query.
"""

import numpy as np

from .core import HolderParams

__all__ = [
    "chebyshev_distances",
    "euclidean_distances",
    "smoothed_window_means",
    "PersonalizedEstimator",
    "VarianceField",
    "pilot_bandwidth",
]

_CHUNK_ELEMENTS = 2_000_000


def chebyshev_distances(a, b):
    """Pairwise sup-norm distances, shape (len(a), len(b))."""
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)


def euclidean_distances(a, b):
    """Pairwise Euclidean distances, shape (len(a), len(b))."""
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))


def smoothed_window_means(y_train, f_train, f_eval, dist_inf, dist2_pow, theta1, h):
    """Window-averaged residuals against the smoothed black-box values.

    For each eval point (row), averages y_i - omega(f_train_i) over training
    points with sup-norm distance <= h, anchored at the eval point itself;
    dist2_pow holds the Euclidean distances already raised to theta2.  An
    empty window contributes 0 through the max(1, count) guard.
    """
    mask = dist_inf <= h
    counts = mask.sum(axis=1)
    delta = f_train[None, :] - f_eval[:, None]
    trunc = np.sign(delta) * np.minimum(np.abs(delta), theta1 * dist2_pow)
    omega = f_eval[:, None] + trunc
    num = ((y_train[None, :] - omega) * mask).sum(axis=1)
    return num / np.maximum(counts, 1)


class PersonalizedEstimator:
    """Frozen fit artifact: training samples, smoothing parameters, bandwidth.

    Evaluation queries the black-box at the requested points only; its
    values at the training points are cached once at construction.
    """

    def __init__(self, train_x, train_y, model, theta, bandwidth, domain, f_train=None):
        train_x = np.array(train_x, float)
        train_y = np.array(train_y, float)
        if train_x.ndim != 2 or train_x.shape[0] < 1:
            raise ValueError("need at least one training sample")
        if train_y.shape != (train_x.shape[0],):
            raise ValueError("train_y must align with train_x rows")
        if not bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not isinstance(theta, HolderParams):
            theta = HolderParams(*theta)
        domain.require(train_x, "training point")
        if f_train is None:
            f_train = model.predict_batch(train_x)
        f_train = np.asarray(f_train, float)
        for arr in (train_x, train_y):
            arr.setflags(write=False)
        self.train_x = train_x
        self.train_y = train_y
        self.model = model
        self.theta = theta
        self.bandwidth = float(bandwidth)
        self.domain = domain
        self._f_train = f_train

    @property
    def f_train(self):
        return self._f_train

    def estimate_bias(self, x):
        """Kernel estimate of the bias at one point."""
        x = np.atleast_1d(np.asarray(x, float))
        return float(self._bias_batch(x[None, :])[0])

    def predict(self, x):
        x = np.atleast_1d(np.asarray(x, float))
        return float(self.predict_batch(x[None, :])[0])

    def predict_batch(self, xs):
        """Black-box value plus estimated bias, one batched query for xs."""
        xs = np.atleast_2d(np.asarray(xs, float))
        if xs.shape[0] == 0:
            return np.empty(0)
        self.domain.require(xs, "query point")
        f_eval = self.model.predict_batch(xs)
        return f_eval + self._bias_given_f(xs, f_eval)

    def _bias_batch(self, xs):
        self.domain.require(xs, "query point")
        f_eval = self.model.predict_batch(xs)
        return self._bias_given_f(xs, f_eval)

    def _bias_given_f(self, xs, f_eval):
        out = np.empty(xs.shape[0])
        chunk = max(1, _CHUNK_ELEMENTS // max(1, self.train_x.shape[0]))
        t = self.theta
        for start in range(0, xs.shape[0], chunk):
            block = xs[start : start + chunk]
            dist_inf = chebyshev_distances(block, self.train_x)
            dist2 = euclidean_distances(block, self.train_x)
            dist2_pow = dist2**t.theta2 if t.theta2 > 0 else np.where(dist2 > 0, 1.0, 0.0)
            out[start : start + chunk] = smoothed_window_means(
                self.train_y,
                self._f_train,
                f_eval[start : start + chunk],
                dist_inf,
                dist2_pow,
                t.theta1,
                self.bandwidth,
            )
        return out

def pilot_bandwidth(n, dim):
    """Default variance-pilot bandwidth n ** (-1 / (d + 2))."""
    return float(n) ** (-1.0 / (dim + 2))


class VarianceField:
    """Kernel estimate of the conditional noise variance from pilot samples.

    Uses the tent kernel K_h(x, x') = max(0, h - ||x - x'||_inf); both
    moment averages carry a max(1, .) guard in the denominator and the
    resulting variance is clamped at zero.
    """

    def __init__(self, pilot_x, pilot_y, h_sigma, domain):
        pilot_x = np.array(pilot_x, float)
        pilot_y = np.array(pilot_y, float)
        if pilot_x.ndim != 2 or pilot_y.shape != (pilot_x.shape[0],):
            raise ValueError("pilot_x must be (n, d) with aligned pilot_y")
        if not h_sigma > 0:
            raise ValueError("h_sigma must be positive")
        for arr in (pilot_x, pilot_y):
            arr.setflags(write=False)
        self.pilot_x = pilot_x
        self.pilot_y = pilot_y
        self.h_sigma = float(h_sigma)
        self.domain = domain

    def variance_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        out = np.empty(xs.shape[0])
        chunk = max(1, _CHUNK_ELEMENTS // max(1, self.pilot_x.shape[0]))
        for start in range(0, xs.shape[0], chunk):
            block = xs[start : start + chunk]
            weights = np.maximum(0.0, self.h_sigma - chebyshev_distances(block, self.pilot_x))
            wsum = weights.sum(axis=1)
            second = weights @ (self.pilot_y**2) / np.maximum(1.0, wsum)
            first = weights @ self.pilot_y
            out[start : start + chunk] = second - first**2 / np.maximum(1.0, wsum**2)
        return np.maximum(out, 0.0)

    def variance_at(self, x):
        x = np.atleast_1d(np.asarray(x, float))
        return float(self.variance_batch(x[None, :])[0])

    def sigma_batch(self, xs):
        return np.sqrt(self.variance_batch(xs))

    def mean_sigma(self, points_per_dim):
        """Midpoint-rule average of sigma-hat over the domain."""
        centers, _ = self.domain.grid(points_per_dim)
        return float(self.sigma_batch(centers).mean())

"""Black-box predictor backends and label oracles.

A black-box model is anything with `predict` / `predict_batch`; it must be
deterministic within a session and finite on the covariate domain.
Backends: safe arithmetic expressions, lookup tables with nearest-neighbor
fallback, box-kernel smoothers over a stored sample, plain Python
callables, and external child processes speaking a line protocol.
"""

import os
import select
import subprocess
import threading
import time
import types

import numpy as np

from .core import BudgetError, ConfigError, DomainError, QueryError

__all__ = [
    "BlackBoxModel",
    "FunctionModel",
    "ExpressionModel",
    "TableModel",
    "KernelSmoothModel",
    "ExternalProcessModel",
    "blackbox_query",
    "compile_expression",
    "model_from_spec",
    "GaussianNoise",
    "BernoulliNoise",
    "SyntheticOracle",
    "ExternalOracle",
    "PoolOracle",
]


def _finite_or_raise(values, context):
    values = np.asarray(values, float)
    if not np.isfinite(values).all():
        i = int(np.flatnonzero(~np.isfinite(values))[0])
        raise QueryError(f"{context} returned a non-finite value at position {i}")
    return values


class BlackBoxModel:
    """Query-only predictor f: X -> R."""

    def predict(self, x):
        x = np.atleast_1d(np.asarray(x, float))
        return float(self.predict_batch(x[None, :])[0])

    def predict_batch(self, xs):
        raise NotImplementedError

    def spec(self):
        raise ConfigError(f"{type(self).__name__} cannot be serialized")

    def close(self):
        pass


def blackbox_query(model, xs, domain=None):
    """Batched queries, order-aligned with xs; optional domain check."""
    xs = np.atleast_2d(np.asarray(xs, float))
    if domain is not None:
        domain.require(xs, "query point")
    return model.predict_batch(xs)


class FunctionModel(BlackBoxModel):
    """Wrap a Python callable operating on an (m, d) array."""

    def __init__(self, fn):
        self._fn = fn

    def predict_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        out = np.asarray(self._fn(xs), float)
        out = np.broadcast_to(out, (xs.shape[0],)).copy()
        return _finite_or_raise(out, "function model")


_EXPR_NAMESPACE = {
    "abs": np.abs,
    "sign": np.sign,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "minimum": np.minimum,
    "maximum": np.maximum,
    "clip": np.clip,
    "where": np.where,
    "pi": np.pi,
    "e": np.e,
}


def compile_expression(expr, dim):
    """Compile an arithmetic expression of x1..xd into a batch callable.

    Only the whitelisted numpy helpers and the coordinate names are
    visible; anything else is rejected up front.
    """
    try:
        code = compile(str(expr), "<expression>", "eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {expr!r}: {exc}") from None
    allowed = set(_EXPR_NAMESPACE) | {f"x{j + 1}" for j in range(dim)}
    unknown = set(code.co_names) - allowed
    if unknown:
        raise ConfigError(f"expression uses unknown names {sorted(unknown)}")
    if any(isinstance(const, types.CodeType) for const in code.co_consts):
        raise ConfigError("expression must be a plain arithmetic formula")

    def fn(xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        env = dict(_EXPR_NAMESPACE)
        env.update({f"x{j + 1}": xs[:, j] for j in range(dim)})
        value = eval(code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(value, float), (xs.shape[0],)).copy()

    fn.expression = str(expr)
    return fn


class ExpressionModel(BlackBoxModel):
    """Builtin backend defined by an arithmetic expression of x1..xd."""

    def __init__(self, expr, dim):
        self.expr = str(expr)
        self.dim = int(dim)
        self._fn = compile_expression(expr, dim)

    def predict_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        return _finite_or_raise(self._fn(xs), f"expression {self.expr!r}")

    def spec(self):
        return {"kind": "expression", "expr": self.expr, "dim": self.dim}


class TableModel(BlackBoxModel):
    """Lookup table with nearest-neighbor fallback for off-grid queries.

    Ties (equal Euclidean distance) resolve to the lowest stored index, so
    a query at a stored point always returns its stored value.
    """

    def __init__(self, points, values):
        points = np.array(points, float)
        values = np.array(values, float)
        if points.ndim != 2 or points.shape[0] < 1:
            raise ValueError("table needs at least one stored point")
        if values.shape != (points.shape[0],):
            raise ValueError("values must align with stored points")
        points.setflags(write=False)
        values.setflags(write=False)
        self.points = points
        self.values = values

    def predict_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        out = np.empty(xs.shape[0])
        chunk = max(1, 2_000_000 // max(1, self.points.shape[0]))
        for start in range(0, xs.shape[0], chunk):
            block = xs[start : start + chunk]
            d2 = ((block[:, None, :] - self.points[None, :, :]) ** 2).sum(axis=2)
            out[start : start + chunk] = self.values[np.argmin(d2, axis=1)]
        return _finite_or_raise(out, "table model")

    def spec(self):
        return {
            "kind": "table",
            "points": self.points.tolist(),
            "values": self.values.tolist(),
        }


class KernelSmoothModel(BlackBoxModel):
    """Box-kernel local mean over a stored sample.

    Windows use the sup-norm with radius `bandwidth`; an empty window
    yields 0 through the max(1, count) guard, so the model is total.
    """

    def __init__(self, points, values, bandwidth):
        points = np.array(points, float)
        values = np.array(values, float)
        if points.ndim != 2 or values.shape != (points.shape[0],):
            raise ValueError("points must be (n, d) with aligned values")
        if not bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        points.setflags(write=False)
        values.setflags(write=False)
        self.points = points
        self.values = values
        self.bandwidth = float(bandwidth)

    def predict_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        out = np.empty(xs.shape[0])
        chunk = max(1, 2_000_000 // max(1, self.points.shape[0]))
        for start in range(0, xs.shape[0], chunk):
            block = xs[start : start + chunk]
            dist = np.abs(block[:, None, :] - self.points[None, :, :]).max(axis=2)
            mask = dist <= self.bandwidth
            counts = mask.sum(axis=1)
            out[start : start + chunk] = mask @ self.values / np.maximum(counts, 1)
        return _finite_or_raise(out, "kernel-smooth model")

    def spec(self):
        return {
            "kind": "kernel-smooth",
            "points": self.points.tolist(),
            "values": self.values.tolist(),
            "bandwidth": self.bandwidth,
        }


class ExternalProcessModel(BlackBoxModel):
    """Child process queried over standard streams.

    Protocol: on startup we send "DIM <d>" and expect "OK".  Each batch is
    one line per query (d comma-separated decimals) terminated by a blank
    line; the reply is one decimal per line, order preserved.  Access is
    serialized: one in-flight batch at a time.
    """

    def __init__(self, argv, dim, timeout=30.0, start_timeout=10.0):
        if isinstance(argv, str):
            argv = [argv]
        self.argv = [str(a) for a in argv]
        self.dim = int(dim)
        self.timeout = float(timeout)
        self.start_timeout = float(start_timeout)
        self._proc = None
        self._buffer = b""
        self._lock = threading.Lock()

    def start(self):
        with self._lock:
            self._ensure_started()

    def _ensure_started(self):
        if self._proc is not None:
            if self._proc.poll() is not None:
                raise QueryError("model process exited (stage: session)")
            return
        try:
            self._proc = subprocess.Popen(
                self.argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                bufsize=0,
            )
        except OSError as exc:
            raise QueryError(f"cannot start model process (stage: spawn): {exc}") from None
        self._send(f"DIM {self.dim}\n")
        reply = self._read_line(self.start_timeout, stage="handshake")
        if reply.strip() != "OK":
            raise QueryError(f"handshake failed (stage: handshake): expected OK, got {reply!r}")

    def _send(self, text):
        try:
            self._proc.stdin.write(text.encode("utf-8"))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise QueryError(f"model process pipe broke (stage: request): {exc}") from None

    def _read_line(self, timeout, stage):
        deadline = time.monotonic() + timeout
        fd = self._proc.stdout.fileno()
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise QueryError(f"model process timed out (stage: {stage})")
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                raise QueryError(f"model process timed out (stage: {stage})")
            chunk = os.read(fd, 65536)
            if not chunk:
                raise QueryError(f"model process closed its output (stage: {stage})")
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line.decode("utf-8", errors="replace")

    def predict_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, float))
        if xs.shape[1] != self.dim:
            raise QueryError(f"query dimension {xs.shape[1]} != declared {self.dim}")
        if xs.shape[0] == 0:
            return np.empty(0)
        with self._lock:
            self._ensure_started()
            payload = "".join(",".join(repr(float(v)) for v in row) + "\n" for row in xs)
            self._send(payload + "\n")
            out = np.empty(xs.shape[0])
            for i in range(xs.shape[0]):
                line = self._read_line(self.timeout, stage="response")
                try:
                    out[i] = float(line.strip())
                except ValueError:
                    raise QueryError(f"malformed reply line {line!r}") from None
        return _finite_or_raise(out, "external model")

    def spec(self):
        return {"kind": "external", "argv": list(self.argv), "dim": self.dim}

    def close(self):
        with self._lock:
            if self._proc is not None:
                try:
                    self._proc.stdin.close()
                except OSError:
                    pass
                self._proc.terminate()
                try:
                    self._proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    self._proc.kill()
                self._proc = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc_info):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def model_from_spec(spec):
    """Rebuild a serializable backend from its spec dictionary."""
    kind = spec.get("kind")
    if kind == "expression":
        return ExpressionModel(spec["expr"], spec["dim"])
    if kind == "table":
        return TableModel(spec["points"], spec["values"])
    if kind == "kernel-smooth":
        return KernelSmoothModel(spec["points"], spec["values"], spec["bandwidth"])
    if kind == "external":
        return ExternalProcessModel(spec["argv"], spec["dim"])
    raise ConfigError(f"unknown model kind {kind!r}")


class GaussianNoise:
    """Additive Gaussian noise with sigma given as a constant, expression, or callable."""

    def __init__(self, sigma=1.0, dim=None):
        self._descriptor = sigma
        if callable(sigma):
            self._sigma = sigma
        elif isinstance(sigma, str):
            if dim is None:
                raise ConfigError("sigma expressions need the covariate dimension")
            self._sigma = compile_expression(sigma, dim)
        else:
            value = float(sigma)
            if value < 0:
                raise ValueError("sigma must be nonnegative")
            self._sigma = lambda xs: np.full(np.atleast_2d(xs).shape[0], value)

    def sigma(self, xs):
        out = np.asarray(self._sigma(np.atleast_2d(np.asarray(xs, float))), float)
        if (out < 0).any():
            raise ValueError("sigma(x) must be nonnegative")
        return out

    def sample(self, f_values, xs, rng):
        return f_values + self.sigma(xs) * rng.standard_normal(len(f_values))


class BernoulliNoise:
    """Binary labels with P(y=1|x) = f(x); the variance f(1-f) is implied."""

    tolerance = 1e-9

    def sample(self, f_values, xs, rng):
        p = np.asarray(f_values, float)
        if (p < -self.tolerance).any() or (p > 1 + self.tolerance).any():
            raise ValueError("Bernoulli labels need f(x) in [0, 1]")
        p = np.clip(p, 0.0, 1.0)
        return (rng.random(len(p)) < p).astype(float)

    def sigma(self, f_values):
        p = np.clip(np.asarray(f_values, float), 0.0, 1.0)
        return np.sqrt(p * (1.0 - p))


class SyntheticOracle:
    """Label source y = f*(x) + noise for a known regression function."""

    def __init__(self, f_star, noise, domain=None):
        self.f_star = f_star
        self.noise = noise
        self.domain = domain
        self.labels_issued = 0

    def label(self, xs, rng):
        xs = np.atleast_2d(np.asarray(xs, float))
        if self.domain is not None:
            self.domain.require(xs, "labeling point")
        y = self.noise.sample(np.asarray(self.f_star(xs), float), xs, rng)
        self.labels_issued += xs.shape[0]
        return y


class ExternalOracle:
    """Label source backed by any black-box model (e.g. an external process)."""

    def __init__(self, model):
        self.model = model
        self.labels_issued = 0

    def label(self, xs, rng=None):
        xs = np.atleast_2d(np.asarray(xs, float))
        y = self.model.predict_batch(xs)
        self.labels_issued += xs.shape[0]
        return y


class PoolOracle:
    """Finite pool of covariates whose labels are revealed at most once each."""

    def __init__(self, points, labels):
        points = np.array(points, float)
        labels = np.array(labels, float)
        if points.ndim != 2 or labels.shape != (points.shape[0],):
            raise ValueError("pool needs (N, d) points with aligned labels")
        points.setflags(write=False)
        self.points = points
        self._labels = labels
        self._consumed = np.zeros(points.shape[0], dtype=bool)

    def __len__(self):
        return self.points.shape[0]

    @property
    def labels_issued(self):
        return int(self._consumed.sum())

    @property
    def remaining(self):
        return int((~self._consumed).sum())

    def label_indices(self, idx):
        idx = np.asarray(idx, int).ravel()
        if idx.size != np.unique(idx).size:
            raise BudgetError("pool indices requested more than once in a single call")
        if idx.size and (idx.min() < 0 or idx.max() >= len(self)):
            raise DomainError("pool index out of range")
        already = self._consumed[idx]
        if already.any():
            first = int(idx[np.flatnonzero(already)[0]])
            raise BudgetError(f"pool point {first} was already labeled")
        self._consumed[idx] = True
        return self._labels[idx].copy()

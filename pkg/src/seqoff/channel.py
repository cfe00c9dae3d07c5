"""Channel-gain distributions, quadrature rules and seeded sampling.

Expectations over the gain use a fixed quadrature rule. For the exponential
(Rayleigh power) gain the rule is a midpoint rule on the probability scale:
the interval (0, 1 - truncation) is cut into equal cells and each cell is
represented by the gain at its midpoint quantile. Discrete gains are
integrated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

DEFAULT_NODES = 128
DEFAULT_TRUNCATION = 1e-7


@dataclass(frozen=True)
class QuadratureRule:
    """Gain nodes (strictly increasing) and probability weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.shape != weights.shape or nodes.size == 0:
            raise ValueError("nodes and weights must be equal-length 1-d arrays")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("quadrature nodes must be strictly increasing")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("quadrature weights must be non-negative and sum to 1")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def node_count(self) -> int:
        return self.nodes.size

    def expect(self, values: np.ndarray, axis: int = -1) -> np.ndarray:
        """Weighted sum of ``values`` sampled at the nodes along ``axis``."""
        values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
        return values @ self.weights


class GainDistribution:
    """Base class; subclasses provide ``quantile``, ``mean`` and ``rule``."""

    kind: str

    def quantile(self, u):
        raise NotImplementedError

    @property
    def mean(self) -> float:
        raise NotImplementedError

    def rule(self, node_count: int = DEFAULT_NODES, truncation: float = DEFAULT_TRUNCATION) -> QuadratureRule:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def sample(self, stream: np.random.Generator, size=None):
        """Draw gains by inverting the CDF at uniform draws from ``stream``."""
        u = stream.random(size)
        # random() is in [0, 1); map an exact 0 to the smallest positive double
        u = np.where(u == 0.0, np.finfo(float).tiny, u)
        out = self.quantile(u)
        return float(out) if size is None else out


@dataclass(frozen=True)
class Exponential(GainDistribution):
    """Gain with an exponential law, i.e. Rayleigh-faded amplitude."""

    mean_gain: float
    kind: str = field(default="exponential", init=False)

    def __post_init__(self):
        if not (math.isfinite(self.mean_gain) and self.mean_gain > 0):
            raise ValueError("exponential mean must be positive")

    @property
    def mean(self) -> float:
        return self.mean_gain

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("quantile level must lie strictly inside (0, 1)")
        out = -self.mean_gain * np.log1p(-u)
        return out if out.ndim else float(out)

    def pdf(self, h):
        h = np.asarray(h, dtype=float)
        return np.where(h >= 0, np.exp(-h / self.mean_gain) / self.mean_gain, 0.0)

    def rule(self, node_count: int = DEFAULT_NODES, truncation: float = DEFAULT_TRUNCATION) -> QuadratureRule:
        if node_count < 1:
            raise ValueError("need at least one quadrature node")
        if not 0 < truncation < 1:
            raise ValueError("truncation must lie in (0, 1)")
        top = 1.0 - truncation
        u = (np.arange(node_count) + 0.5) * (top / node_count)
        return QuadratureRule(self.quantile(u), np.full(node_count, 1.0 / node_count))

    def to_dict(self) -> dict:
        return {"kind": "exponential", "mean": self.mean_gain}


@dataclass(frozen=True)
class Discrete(GainDistribution):
    """Finite-support gain law, integrated exactly."""

    gains: tuple[float, ...]
    probs: tuple[float, ...]
    kind: str = field(default="discrete", init=False)

    def __post_init__(self):
        gains = tuple(float(g) for g in self.gains)
        probs = tuple(float(p) for p in self.probs)
        if len(gains) == 0 or len(gains) != len(probs):
            raise ValueError("gains and probs must be non-empty and equally long")
        if any(g <= 0 for g in gains):
            raise ValueError("support gains must be positive")
        if any(p < 0 for p in probs) or abs(math.fsum(probs) - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        order = sorted(range(len(gains)), key=gains.__getitem__)
        gains = tuple(gains[i] for i in order)
        probs = tuple(probs[i] for i in order)
        if any(a == b for a, b in zip(gains, gains[1:])):
            raise ValueError("support gains must be distinct")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "probs", probs)

    @property
    def mean(self) -> float:
        return math.fsum(g * p for g, p in zip(self.gains, self.probs))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)):
            raise ValueError("quantile level must lie strictly inside (0, 1)")
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="left")
        out = np.asarray(self.gains)[np.minimum(idx, len(self.gains) - 1)]
        return out if out.ndim else float(out)

    def rule(self, node_count: int = DEFAULT_NODES, truncation: float = DEFAULT_TRUNCATION) -> QuadratureRule:
        # exact; node_count and truncation do not apply
        keep = [i for i, p in enumerate(self.probs) if p > 0]
        return QuadratureRule(
            np.array([self.gains[i] for i in keep]), np.array([self.probs[i] for i in keep])
        )

    def to_dict(self) -> dict:
        return {"kind": "discrete", "gains": list(self.gains), "probs": list(self.probs)}


def from_dict(spec: dict) -> GainDistribution:
    kind = spec.get("kind")
    if kind == "exponential":
        return Exponential(float(spec["mean"]))
    if kind == "discrete":
        return Discrete(tuple(spec["gains"]), tuple(spec["probs"]))
    raise ValueError(f"unknown channel kind {kind!r}")


def quantile(dist: GainDistribution, u):
    return dist.quantile(u)


def expectation(
    dist: GainDistribution,
    g: Callable[[np.ndarray], np.ndarray],
    node_count: int = DEFAULT_NODES,
    truncation: float = DEFAULT_TRUNCATION,
) -> float:
    """E[g(h)] under ``dist`` with the default quadrature rule.

    ``g`` is called once on the array of nodes. A non-finite value at any
    node raises ``FloatingPointError``.
    """
    rule = dist.rule(node_count, truncation)
    values = np.broadcast_to(np.asarray(g(rule.nodes), dtype=float), rule.nodes.shape)
    bad = ~np.isfinite(values)
    if bad.any():
        raise FloatingPointError(
            f"integrand is not finite at gain {rule.nodes[bad][0]:.6g}"
        )
    return float(values @ rule.weights)


def stream(seed: int, substream: int = 0) -> np.random.Generator:
    """Counter-based generator for one (seed, sub-stream) pair.

    Sub-streams with different indices are statistically independent, so
    episode i of a run seeded with ``seed`` always sees the same draws no
    matter how the episodes are scheduled.
    """
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, substream])))


def sample(dist: GainDistribution, rng: np.random.Generator, size=None):
    return dist.sample(rng, size)


def sample_paths(dist: GainDistribution, seed: int, episodes: Sequence[int] | np.ndarray, width: int) -> np.ndarray:
    """One row of ``width`` i.i.d. gains per episode index, each row drawn
    from that episode's own sub-stream."""
    rows = [dist.sample(stream(seed, int(i)), width) for i in episodes]
    return np.asarray(rows, dtype=float).reshape(len(rows), width)

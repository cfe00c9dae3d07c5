"""Domain types and the energy/time primitives shared by every solver.

All internal data sizes are in nats, times in seconds, frequencies in Hz and
energies in joules. Inputs given in bits are converted once with
:func:`bits_to_nats`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Semantic aliases. They document units at call sites; values are plain floats.
Energy = float  # joules
Duration = float  # seconds
Gain = float  # normalized channel gain (SNR per watt)


@dataclass(frozen=True)
class TaskProfile:
    """A chain of sub-tasks; sub-task i runs only after sub-task i-1.

    ``cycles[i]`` is the CPU workload of sub-task i+1 and ``input_nats[i]``
    the size of its input data, which is also the output of the previous one.
    """

    cycles: tuple[float, ...]
    input_nats: tuple[float, ...]

    def __post_init__(self):
        cycles = tuple(float(c) for c in self.cycles)
        data = tuple(float(d) for d in self.input_nats)
        if len(cycles) == 0:
            raise ValueError("a task needs at least one sub-task")
        if len(cycles) != len(data):
            raise ValueError(
                f"cycles has {len(cycles)} entries but input_nats has {len(data)}"
            )
        if any(not math.isfinite(c) or c < 0 for c in cycles):
            raise ValueError("cycle counts must be finite and non-negative")
        if any(not math.isfinite(d) or d < 0 for d in data):
            raise ValueError("input sizes must be finite and non-negative")
        object.__setattr__(self, "cycles", cycles)
        object.__setattr__(self, "input_nats", data)

    @classmethod
    def from_bits(cls, cycles: Sequence[float], input_bits: Sequence[float]) -> "TaskProfile":
        return cls(tuple(cycles), tuple(bits_to_nats(b) for b in input_bits))

    @classmethod
    def from_units(cls, mcycles: Sequence[float], kbits: Sequence[float]) -> "TaskProfile":
        """Build from megacycles and kilobits, the units used in experiment configs."""
        return cls.from_bits([m * 1e6 for m in mcycles], [k * 1e3 for k in kbits])

    @property
    def n_subtasks(self) -> int:
        return len(self.cycles)

    def check_index(self, n: int) -> None:
        if not 1 <= n <= self.n_subtasks:
            raise IndexError(f"sub-task index {n} outside 1..{self.n_subtasks}")

    def prefix_cycles(self, n: int) -> float:
        """Total workload of sub-tasks 1..n-1 (the part computed locally)."""
        self.check_index(n)
        return math.fsum(self.cycles[: n - 1])

    def suffix_cycles(self, n: int) -> float:
        """Total workload of sub-tasks n..N (the part computed at the edge)."""
        self.check_index(n)
        return math.fsum(self.cycles[n - 1 :])

    def data(self, n: int) -> float:
        self.check_index(n)
        return self.input_nats[n - 1]

    def scaled(self, data_factor: float) -> "TaskProfile":
        return TaskProfile(self.cycles, tuple(d * data_factor for d in self.input_nats))


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the device, the link and the edge server."""

    bandwidth_hz: float
    k0: float
    f_max: float
    f_l: float
    f_e: float
    deadline_s: float
    coherence_s: float

    def __post_init__(self):
        for name in ("bandwidth_hz", "k0", "f_max", "f_l", "f_e", "deadline_s", "coherence_s"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if self.f_l > self.f_max:
            raise ValueError(f"f_l={self.f_l} exceeds f_max={self.f_max}")
        if self.f_e <= self.f_max:
            raise ValueError(f"edge frequency f_e={self.f_e} must exceed f_max={self.f_max}")

    def replace(self, **changes) -> "SystemParams":
        from dataclasses import replace

        return replace(self, **changes)


def local_time(l: float, f: float) -> Duration:
    """Seconds needed to run ``l`` cycles at ``f`` Hz."""
    if f <= 0:
        raise ValueError("CPU frequency must be positive (zero frequency never finishes)")
    if l < 0:
        raise ValueError("cycle count must be non-negative")
    return l / f


def local_energy(l: float, f: float, k0: float) -> Energy:
    """Joules spent running ``l`` cycles at ``f`` Hz, with power k0*f^3."""
    if l < 0 or f < 0:
        raise ValueError("cycle count and frequency must be non-negative")
    return k0 * l * f * f


def block_energy(d, h, t, bandwidth_hz):
    """Energy to push ``d`` nats through a block of ``t`` seconds with gain ``h``.

    Inverts the Shannon rate: sending d nats in t seconds needs power
    (exp(d/(W t)) - 1)/h. Works elementwise on arrays; rates too large for
    float64 come back as ``inf``.
    """
    d = np.asarray(d, dtype=float)
    h = np.asarray(h, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(h <= 0):
        raise ValueError("channel gain must be positive")
    if np.any(t <= 0):
        raise ValueError("block duration must be positive")
    if np.any(d < 0):
        raise ValueError("data amount must be non-negative")
    with np.errstate(over="ignore"):
        out = np.expm1(d / (bandwidth_hz * t)) * t / h
    return out if out.ndim else float(out)


def bits_to_nats(bits: float) -> float:
    if bits < 0:
        raise ValueError("bit count must be non-negative")
    return bits * math.log(2.0)


def edge_suffix_time(profile: TaskProfile, n: int, f_e: float) -> Duration:
    """Edge compute time of sub-tasks n..N."""
    return local_time(profile.suffix_cycles(n), f_e)


def local_prefix_time(profile: TaskProfile, n: int, f: float) -> Duration:
    """Device compute time of sub-tasks 1..n-1 at a common frequency ``f``."""
    cycles = profile.prefix_cycles(n)
    if cycles == 0:
        return 0.0
    return local_time(cycles, f)


def local_prefix_energy(profile: TaskProfile, n: int, f: float, k0: float) -> Energy:
    return local_energy(profile.prefix_cycles(n), f, k0)


def offload_budget(profile: TaskProfile, params: SystemParams, n: int, f_local: float) -> Duration:
    """Air time left for uploading d_n once the deadline, the local prefix at
    ``f_local`` and the edge suffix are accounted for. Non-positive means the
    offload index is infeasible."""
    return (
        params.deadline_s
        - local_prefix_time(profile, n, f_local)
        - edge_suffix_time(profile, n, params.f_e)
    )


class InfeasibleError(RuntimeError):
    """No decision meets the deadline for the given instance."""

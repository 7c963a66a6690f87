"""Piecewise-constant control signals.

All controls here are left-continuous: the value at a switch instant is the
value of the arc that ends there.  Integrators cut their time axis at
``breakpoints`` so every integration segment sees a constant control.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConstantControl:
    value_vec: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value_vec", np.atleast_1d(np.asarray(self.value_vec, dtype=float)))

    @property
    def m(self) -> int:
        return self.value_vec.size

    def value(self, t: float) -> np.ndarray:
        return self.value_vec

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        return np.zeros(0)


@dataclass(frozen=True)
class SampledControl:
    """Zero-order hold of sampled values; value on (t_k, t_{k+1}] is values[k]."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if times.ndim != 1 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing")
        if values.shape[0] != times.size:
            raise ValueError("values must have one row per sample time")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def value(self, t: float) -> np.ndarray:
        k = int(np.searchsorted(self.times, t, side="left"))
        return self.values[min(max(k - 1, 0), self.times.size - 1)]

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        inner = self.times[(self.times > t0) & (self.times < t1)]
        return inner


@dataclass(frozen=True)
class BangBangControl:
    """Per-channel bang-bang control alternating between box endpoints.

    Channel i starts at ``initial[i]`` (one of the two box endpoints) and
    flips to the other endpoint at each of its ``switch_times[i]``.
    """

    initial: np.ndarray                      # (m,) starting endpoint per channel
    switch_times: tuple                      # tuple of m increasing arrays
    horizon: float
    box: np.ndarray                          # (m, 2) endpoints the values alternate between

    def __post_init__(self):
        initial = np.atleast_1d(np.asarray(self.initial, dtype=float))
        box = np.asarray(self.box, dtype=float).reshape(initial.size, 2)
        sw = tuple(np.atleast_1d(np.asarray(s, dtype=float)) for s in self.switch_times)
        if len(sw) != initial.size:
            raise ValueError("one switch-time array per channel required")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        for s in sw:
            if s.size and (np.any(np.diff(s) <= 0) or s[0] <= 0 or s[-1] >= self.horizon):
                raise ValueError("switch times must be strictly increasing inside (0, horizon)")
        for i, s0 in enumerate(initial):
            if not (np.isclose(s0, box[i, 0]) or np.isclose(s0, box[i, 1])):
                raise ValueError(f"initial value of channel {i} must be a box endpoint")
        object.__setattr__(self, "initial", initial)
        object.__setattr__(self, "switch_times", sw)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "horizon", float(self.horizon))

    @classmethod
    def single_channel(cls, initial: float, switch_times: Sequence[float], horizon: float,
                       lo: float = -1.0, hi: float = 1.0) -> "BangBangControl":
        return cls(initial=np.array([initial]),
                   switch_times=(np.asarray(switch_times, dtype=float),),
                   horizon=horizon, box=np.array([[lo, hi]]))

    @property
    def m(self) -> int:
        return self.initial.size

    def _other(self, i: int) -> float:
        lo, hi = self.box[i]
        return hi if np.isclose(self.initial[i], lo) else lo

    def value(self, t: float) -> np.ndarray:
        out = np.empty(self.m)
        for i in range(self.m):
            flips = int(np.searchsorted(self.switch_times[i], t, side="left"))
            out[i] = self.initial[i] if flips % 2 == 0 else self._other(i)
        return out

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        all_sw = np.concatenate([s for s in self.switch_times]) if self.m else np.zeros(0)
        all_sw = np.unique(all_sw)
        return all_sw[(all_sw > t0) & (all_sw < t1)]

    def total_switches(self) -> int:
        return int(sum(s.size for s in self.switch_times))

    def with_horizon(self, horizon: float) -> "BangBangControl":
        """Keep switch times, change the horizon (times beyond it are dropped)."""
        sw = tuple(s[s < horizon] for s in self.switch_times)
        return replace(self, switch_times=sw, horizon=horizon)

    def simplified(self, tol: float = 1e-12) -> "BangBangControl":
        """Drop switch pairs closer than ``tol`` (they cancel)."""
        new_sw = []
        for s in self.switch_times:
            keep = list(s)
            changed = True
            while changed:
                changed = False
                for j in range(len(keep) - 1):
                    if keep[j + 1] - keep[j] <= tol:
                        del keep[j:j + 2]
                        changed = True
                        break
            new_sw.append(np.asarray(keep))
        return replace(self, switch_times=tuple(new_sw))


def as_control(obj, m: int):
    """Coerce scalars, arrays, callables or control objects to the control protocol."""
    if hasattr(obj, "value") and hasattr(obj, "breakpoints"):
        return obj
    if callable(obj):
        return _CallableControl(obj, m)
    arr = np.atleast_1d(np.asarray(obj, dtype=float))
    if arr.size != m:
        raise ValueError(f"constant control must have dimension {m}, got {arr.size}")
    return ConstantControl(arr)


class _CallableControl:
    def __init__(self, fn, m: int):
        self._fn = fn
        self.m = m

    def value(self, t: float) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._fn(t), dtype=float))

    def breakpoints(self, t0: float, t1: float) -> np.ndarray:
        return np.zeros(0)

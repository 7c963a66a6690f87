"""Controlled second-order systems with a single unilaterally constrained coordinate.

The state is split into an unconstrained position block ``x`` (dimension n),
the constrained coordinate ``y`` (which physical trajectories keep at ``y <= 0``),
and their velocities ``v = dx/dt`` and ``w = dy/dt``.  The accelerations are
affine in ``w`` and in the control ``u``:

    dv/dt = f1(x,y,v) + f2(x,y,v) * w + f3(x,y,v) @ u
    dw/dt = g1(x,y,v) + g2(x,y,v) * w + g3(x,y,v) . u   (minus the contact force)

Two built-in instances are provided: a point body on a line pushed against a
wall (``builtin_example1``) and a piston sliding inside a spring-mounted
cylinder (``builtin_example2``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

Component = Callable[[np.ndarray, float, np.ndarray], np.ndarray]
ScalarComponent = Callable[[np.ndarray, float, np.ndarray], float]


@dataclass(frozen=True)
class SystemState:
    """State tuple (x, y, v, w) with x, v of dimension n and scalar y, w."""

    x: np.ndarray
    y: float
    v: np.ndarray
    w: float

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "w", float(self.w))
        if self.x.shape != self.v.shape:
            raise ValueError(f"x and v must have equal shape, got {self.x.shape} vs {self.v.shape}")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.v))
                and np.isfinite(self.y) and np.isfinite(self.w)):
            raise ValueError("state entries must be finite")

    @property
    def n(self) -> int:
        return self.x.size

    def stacked(self) -> np.ndarray:
        """Flatten to the canonical ordering [x, y, v, w] of length 2n+2."""
        return np.concatenate([self.x, [self.y], self.v, [self.w]])

    @classmethod
    def from_stacked(cls, z: Sequence[float], n: int) -> "SystemState":
        z = np.asarray(z, dtype=float)
        if z.size != 2 * n + 2:
            raise ValueError(f"stacked state must have length {2 * n + 2}, got {z.size}")
        return cls(x=z[:n], y=z[n], v=z[n + 1:2 * n + 1], w=z[2 * n + 1])


@dataclass(frozen=True)
class CanonicalModel:
    """Dynamics components, control box and dimensions of one backlash system.

    Args:
        n: dimension of the unconstrained block x (0 is allowed).
        m: control dimension.
        f1, f2: maps (x, y, v) -> R^n.
        f3: map (x, y, v) -> R^(n x m).
        g1, g2: maps (x, y, v) -> scalar.
        g3: map (x, y, v) -> R^m.
        control_box: per-channel closed intervals, shape (m, 2) with lo <= hi.
        growth_constant: M such that |f|, |g| <= M(1+|x|+|y|+|v|+|w|).
        partials: optional callable (x, y, v, w, u) returning the dict of
            analytic partial derivatives used by the adjoint integration
            (keys fx, fy, fv, gx, gy, gv).  When absent, central finite
            differences are used.
    """

    n: int
    m: int
    f1: Component
    f2: Component
    f3: Component
    g1: ScalarComponent
    g2: ScalarComponent
    g3: Component
    control_box: np.ndarray
    growth_constant: float = 1.0
    partials: Callable | None = None
    name: str = "custom"
    coefficients: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 0 or self.m <= 0:
            raise ValueError("need n >= 0 and m >= 1")
        box = np.asarray(self.control_box, dtype=float).reshape(self.m, 2)
        if not np.all(np.isfinite(box)):
            raise ValueError("control_box must be bounded")
        if np.any(box[:, 0] > box[:, 1]):
            raise ValueError("control_box requires lo <= hi on every channel")
        object.__setattr__(self, "control_box", box)
        if self.growth_constant <= 0:
            raise ValueError("growth_constant must be positive")

    @property
    def u_lo(self) -> np.ndarray:
        return self.control_box[:, 0]

    @property
    def u_hi(self) -> np.ndarray:
        return self.control_box[:, 1]

    def clip_control(self, u: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.u_lo, self.u_hi)

    def contains_control(self, u: np.ndarray, tol: float = 1e-12) -> bool:
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.u_lo - tol) and np.all(u <= self.u_hi + tol))


def _check_control(model: CanonicalModel, u) -> np.ndarray:
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if u.size != model.m:
        raise ValueError(f"control has dimension {u.size}, model expects {model.m}")
    return u


def eval_f(model: CanonicalModel, s: SystemState, u) -> np.ndarray:
    """Acceleration of the x block: f1 + f2*w + f3 @ u."""
    u = _check_control(model, u)
    if s.n != model.n:
        raise ValueError(f"state has n={s.n}, model expects n={model.n}")
    if model.n == 0:
        return np.zeros(0)
    f3 = np.asarray(model.f3(s.x, s.y, s.v), dtype=float).reshape(model.n, model.m)
    out = (np.asarray(model.f1(s.x, s.y, s.v), dtype=float)
           + np.asarray(model.f2(s.x, s.y, s.v), dtype=float) * s.w
           + f3 @ u)
    return out.reshape(model.n)


def eval_g(model: CanonicalModel, s: SystemState, u) -> float:
    """Acceleration of the constrained coordinate before any contact force."""
    u = _check_control(model, u)
    if s.n != model.n:
        raise ValueError(f"state has n={s.n}, model expects n={model.n}")
    g3 = np.asarray(model.g3(s.x, s.y, s.v), dtype=float).reshape(model.m)
    return float(model.g1(s.x, s.y, s.v)) + float(model.g2(s.x, s.y, s.v)) * s.w + float(g3 @ u)


def builtin_example1() -> CanonicalModel:
    """Point body on a line: y'' = u - N, wall at y = 0, u in [-1, 1].

    The x block is empty (n = 0); only (y, w) evolve.
    """
    zero0 = lambda x, y, v: np.zeros(0)

    def partials(x, y, v, w, u):
        return {
            "fx": np.zeros((0, 0)), "fy": np.zeros(0), "fv": np.zeros((0, 0)),
            "gx": np.zeros(0), "gy": 0.0, "gv": np.zeros(0),
        }

    return CanonicalModel(
        n=0, m=1,
        f1=zero0, f2=zero0, f3=lambda x, y, v: np.zeros((0, 1)),
        g1=lambda x, y, v: 0.0, g2=lambda x, y, v: 0.0,
        g3=lambda x, y, v: np.ones(1),
        control_box=np.array([[-1.0, 1.0]]),
        growth_constant=1.0,
        partials=partials,
        name="ex1",
    )


def builtin_example2(mass_M: float, k: float, alpha: float, beta: float = 0.0) -> CanonicalModel:
    """Piston of unit mass inside a spring-mounted cylinder of mass ``mass_M``.

    In the coordinates x = M*X + Y, y = Y - X the motion is

        v' = -a (x - y) - c (v - w) + u
        w' =  a (x - y) + c (v - w) - b w + u - 2N

    with a = k/(M+1), b = alpha*(M+1)/M, c = beta/(M+1), the contact at
    y = 0 (piston touching the cylinder bottom) and u in [-1, 1].
    """
    if mass_M <= 0:
        raise ValueError("mass_M must be positive")
    if k <= 0:
        raise ValueError("k must be positive")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if beta < 0:
        raise ValueError("beta must be nonnegative")

    a = k / (mass_M + 1.0)
    b = alpha * (mass_M + 1.0) / mass_M
    c = beta / (mass_M + 1.0)

    def partials(x, y, v, w, u):
        return {
            "fx": np.array([[-a]]), "fy": np.array([a]), "fv": np.array([[-c]]),
            "gx": np.array([a]), "gy": -a, "gv": np.array([c]),
        }

    return CanonicalModel(
        n=1, m=1,
        f1=lambda x, y, v: -a * (x - y) - c * v,
        f2=lambda x, y, v: np.array([c]),
        f3=lambda x, y, v: np.ones((1, 1)),
        g1=lambda x, y, v: float(a * (x[0] - y) + c * v[0]),
        g2=lambda x, y, v: -(b + c),
        g3=lambda x, y, v: np.ones(1),
        control_box=np.array([[-1.0, 1.0]]),
        growth_constant=max(1.0, a, c, b + c),
        partials=partials,
        name="ex2",
        coefficients={"a": a, "b": b, "c": c},
    )


@dataclass
class GrowthReport:
    max_ratio: float
    passed: bool
    worst_sample: int = -1


def check_growth_bound(model: CanonicalModel, samples, M: float) -> GrowthReport:
    """Check |f|, |g| <= M(1+|x|+|y|+|v|+|w|) over a sample cloud.

    Args:
        samples: sequence of (SystemState, control) pairs.
        M: candidate growth constant.

    Returns:
        GrowthReport with the worst ratio max(|f|,|g|)/(1+|x|+|y|+|v|+|w|).
    """
    samples = list(samples)
    if not samples:
        raise ValueError("samples must be nonempty")
    worst = 0.0
    worst_i = -1
    for i, (s, u) in enumerate(samples):
        denom = 1.0 + np.linalg.norm(s.x) + abs(s.y) + np.linalg.norm(s.v) + abs(s.w)
        fs = eval_f(model, s, u)
        gs = eval_g(model, s, u)
        ratio = max(np.linalg.norm(fs), abs(gs)) / denom
        if ratio > worst:
            worst, worst_i = ratio, i
    return GrowthReport(max_ratio=float(worst), passed=bool(worst <= M), worst_sample=worst_i)


def sample_cloud(model: CanonicalModel, radius: float = 1.0, count: int = 64,
                 seed: int = 0) -> list:
    """Random (state, control) samples in a ball, for growth checks."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        z = rng.uniform(-radius, radius, size=2 * model.n + 2)
        u = rng.uniform(model.u_lo, model.u_hi)
        out.append((SystemState.from_stacked(z, model.n), u))
    return out

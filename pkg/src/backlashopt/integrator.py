"""Adaptive integration of the penalized and limit backlash dynamics.

The penalized system replaces the contact impulse by the one-sided force
``gamma * max(y,0) * max(w,0)`` (a Hooke force active only while moving
outward), so the full right-hand side is

    x' = v,  y' = w,  v' = f(x,y,v,w,u),  w' = g(x,y,v,w,u) - gamma*y+*w+,

augmented with the cumulative impulse ``nu' = gamma*y+*w+`` so the impulse is
accumulated by the exact same quadrature as the state.  The limit system is
integrated event-driven with two modes: FREE (y < 0, plain ODE) and CONTACT
(y = 0, w = 0 held while g >= 0, with nu accumulating the holding force); an
impact (y reaching 0 with w > 0) deposits an atom of mass w(t-) into nu and
annihilates w.

Both integrators share one embedded Dormand-Prince 5(4) stepper with cubic
Hermite event location.  Zero crossings of y and w are located and inserted
as grid points, and the step size is capped at ``gamma_step_cap/sqrt(gamma)``
whenever y is above ``-contact_band`` so the stiff contact layer (whose width
shrinks like 1/sqrt(gamma)) stays resolved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .controls import as_control
from .model import CanonicalModel, SystemState

__all__ = [
    "IntegratorConfig", "Trajectory", "IntegrationError", "StiffnessError",
    "EventLocationError", "integrate_penalty", "integrate_limit", "step_penalty",
    "boundary_layer_closed_form", "integrate_layer_ode", "resample",
]


class IntegrationError(RuntimeError):
    """Base class for integration failures."""


class StiffnessError(IntegrationError):
    """Step size underflow; carries the time at which integration stalled."""

    def __init__(self, time: float, message: str = ""):
        super().__init__(message or f"step size underflow at t={time:.6g}")
        self.time = time


class EventLocationError(IntegrationError):
    """Event root finding failed; carries the bracketing interval."""

    def __init__(self, bracket, message: str = ""):
        super().__init__(message or f"event location failed on {bracket}")
        self.bracket = bracket


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    dt_max: float = 0.1
    contact_band: float = 1e-9
    gamma_step_cap: float = 0.1

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "dt_max", "contact_band", "gamma_step_cap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class Trajectory:
    """Time grid with states, controls and the cumulative contact impulse.

    ``gamma`` is the penalty stiffness, or None for a limit trajectory.  The
    grid stores right limits at event times; velocity jumps of the limit
    system are recorded in ``atoms`` as (time, mass) pairs.
    """

    times: np.ndarray
    xs: np.ndarray
    ys: np.ndarray
    vs: np.ndarray
    ws: np.ndarray
    us: np.ndarray
    nu: np.ndarray
    gamma: float | None
    atoms: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def is_limit(self) -> bool:
        return self.gamma is None

    @property
    def n(self) -> int:
        return self.xs.shape[1]

    @property
    def m(self) -> int:
        return self.us.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    def state(self, i: int) -> SystemState:
        return SystemState(x=self.xs[i], y=self.ys[i], v=self.vs[i], w=self.ws[i])

    def final_state(self) -> SystemState:
        return self.state(len(self.times) - 1)

    def stacked(self) -> np.ndarray:
        """States as rows [x, y, v, w], shape (N+1, 2n+2)."""
        return np.hstack([self.xs, self.ys[:, None], self.vs, self.ws[:, None]])

    def max_y(self) -> float:
        return float(np.max(self.ys))

    def sup_state_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.stacked(), axis=1)))

    def sample_stacked(self, t) -> np.ndarray:
        """Linear interpolation of [x, y, v, w] at times t."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cols = [np.interp(t, self.times, col) for col in self.stacked().T]
        return np.stack(cols, axis=-1)

    def sample_nu(self, t) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.times, self.nu)

    def sample_w(self, t) -> np.ndarray:
        return np.interp(np.asarray(t, dtype=float), self.times, self.ws)


# Dormand-Prince 5(4) tableau; the fifth-order solution propagates, the
# embedded fourth-order difference drives step control.  FSAL: stage 7 equals
# the first stage of the accepted next step.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])
_DP_E = _DP_B5 - _DP_B4


def _dp_step(rhs, t, z, h, k0=None):
    """One Dormand-Prince step.  Returns (z_new, err_vec, k_stages)."""
    k = np.empty((7, z.size))
    k[0] = rhs(t, z) if k0 is None else k0
    for i in range(1, 7):
        zi = z + h * (np.asarray(_DP_A[i]) @ k[:i])
        k[i] = rhs(t + _DP_C[i] * h, zi)
    z_new = z + h * (_DP_B5 @ k)
    err = h * (_DP_E @ k)
    return z_new, err, k


def _hermite(z0, z1, f0, f1, h, theta):
    """Cubic Hermite interpolant on one step, theta in [0, 1]."""
    t2 = theta * theta
    t3 = t2 * theta
    return ((2 * t3 - 3 * t2 + 1) * z0 + (t3 - 2 * t2 + theta) * h * f0
            + (-2 * t3 + 3 * t2) * z1 + (t3 - t2) * h * f1)


@dataclass
class _Event:
    name: str
    fn: Callable            # fn(t, z) -> float
    direction: int          # +1 upcross, -1 downcross, 0 any
    terminal: bool = False


def _crossed(g0: float, g1: float, direction: int) -> bool:
    if direction > 0:
        return g0 < 0.0 < g1 or (g0 < 0.0 and g1 == 0.0)
    if direction < 0:
        return g0 > 0.0 > g1 or (g0 > 0.0 and g1 == 0.0)
    return g0 * g1 < 0.0


def _integrate_segment(rhs, t0, t1, z0, cfg: IntegratorConfig, max_step_fn,
                       events: Sequence[_Event], record, h_start=None, t_scale=1.0):
    """Advance from t0 to t1 or to the first event, recording accepted steps.

    Returns (status, t, z, h) where status is "end" or an event name.
    """
    t = t0
    z = np.asarray(z0, dtype=float)
    k0 = None
    h = h_start if h_start is not None else min(cfg.dt_max, max(1e-6 * t_scale, 1e-12))
    gprev = [ev.fn(t, z) for ev in events]
    h_floor = 1e-14 * t_scale

    while t < t1:
        if t1 - t < h_floor:
            t = t1
            break
        cap = min(cfg.dt_max, t1 - t)
        if max_step_fn is not None:
            cap = min(cap, max_step_fn(t, z))
        h = min(h, cap)

        z_new, err, k = _dp_step(rhs, t, z, h, k0=k0)
        bad = not np.all(np.isfinite(z_new))
        if bad:
            err_norm = math.inf
        else:
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(z), np.abs(z_new))
            err_norm = math.sqrt(float(np.mean((err / scale) ** 2)))

        if err_norm > 1.0:
            h = h * (0.5 if bad else max(0.2, 0.9 * err_norm ** -0.2))
            if h < h_floor:
                raise StiffnessError(t)
            k0 = None
            continue

        # accepted: look for the earliest event crossing inside the step
        hit = None
        gnew = [ev.fn(t + h, z_new) for ev in events]
        theta_best = 2.0
        for j, ev in enumerate(events):
            if _crossed(gprev[j], gnew[j], ev.direction):
                f0, f1 = k[0], k[6]

                def phi(theta, _ev=ev):
                    return _ev.fn(t + theta * h, _hermite(z, z_new, f0, f1, h, theta))

                try:
                    theta_root = brentq(phi, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)
                except ValueError as exc:
                    raise EventLocationError((t, t + h), str(exc)) from exc
                if theta_root < theta_best:
                    theta_best = theta_root
                    hit = ev

        if hit is not None and theta_best > 1e-12:
            # land exactly on the event by redoing a shortened step
            h_cut = theta_best * h
            z_new, _, k = _dp_step(rhs, t, z, h_cut, k0=k[0])
            t = t + h_cut
            record(t, z_new)
            return hit.name, t, z_new, h
        # a crossing with theta <= 1e-12 starts on the surface; the step
        # already carried the state across it, so accept and move on

        grow = 5.0 if err_norm == 0.0 else min(5.0, 0.9 * err_norm ** -0.2)
        t += h
        z = z_new
        k0 = k[6]
        gprev = gnew
        record(t, z)
        h = h * grow

    return "end", t, z, h


def _penalty_rhs(model: CanonicalModel, gamma: float, control):
    n, m = model.n, model.m
    iy, iw = n, 2 * n + 1
    f1, f2, f3 = model.f1, model.f2, model.f3
    g1, g2, g3 = model.g1, model.g2, model.g3

    def rhs(t, z):
        x = z[:n]
        y = z[iy]
        v = z[n + 1:iw]
        w = z[iw]
        u = control.value(t)
        g = float(g1(x, y, v)) + float(g2(x, y, v)) * w + float(np.dot(np.ravel(g3(x, y, v)), u))
        pen = gamma * max(y, 0.0) * max(w, 0.0)
        out = np.empty(z.size)
        if n:
            fv = (np.asarray(f1(x, y, v), dtype=float)
                  + np.asarray(f2(x, y, v), dtype=float) * w
                  + np.asarray(f3(x, y, v), dtype=float).reshape(n, m) @ u)
            out[:n] = v
            out[n + 1:iw] = fv
        out[iy] = w
        out[iw] = g - pen
        out[iw + 1] = pen
        return out

    return rhs


def _segment_times(control, t_final: float) -> np.ndarray:
    bps = control.breakpoints(0.0, t_final)
    return np.concatenate([[0.0], np.asarray(bps, dtype=float), [t_final]])


def _assemble(model, control, times, zs, gamma, atoms, events) -> Trajectory:
    n = model.n
    times = np.asarray(times)
    Z = np.asarray(zs)
    us = np.asarray([control.value(t) for t in times]).reshape(len(times), model.m)
    return Trajectory(
        times=times, xs=Z[:, :n], ys=Z[:, n], vs=Z[:, n + 1:2 * n + 1],
        ws=Z[:, 2 * n + 1], us=us, nu=Z[:, 2 * n + 2], gamma=gamma,
        atoms=atoms, events=events,
    )


def integrate_penalty(model: CanonicalModel, gamma: float, control, t_final: float,
                      cfg: IntegratorConfig | None = None,
                      init: SystemState | None = None) -> Trajectory:
    """Integrate the penalized dynamics under a given control on [0, t_final].

    Zero crossings of y and of w are located and inserted as grid points;
    control switch times bound the integration segments, so every step sees a
    smooth right-hand side.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    cfg = cfg or IntegratorConfig()
    if init is None:
        raise ValueError("init state required")
    control = as_control(control, model.m)

    n = model.n
    iy, iw = n, 2 * n + 1
    rhs = _penalty_rhs(model, gamma, control)
    cap_contact = cfg.gamma_step_cap / math.sqrt(gamma)

    def max_step(t, z):
        return cap_contact if z[iy] >= -cfg.contact_band else cfg.dt_max

    events = [
        _Event("y-crossing", lambda t, z: z[iy], 0),
        _Event("w-crossing", lambda t, z: z[iw], 0),
    ]

    z = np.concatenate([init.stacked(), [0.0]])
    times = [0.0]
    zs = [z.copy()]
    ev_log = []

    def record(t, zz):
        times.append(t)
        zs.append(zz.copy())

    h = None
    seg = _segment_times(control, t_final)
    for a, b in zip(seg[:-1], seg[1:]):
        t = a
        while t < b - 1e-15 * max(1.0, t_final):
            status, t, z, h = _integrate_segment(
                rhs, t, b, z, cfg, max_step, events, record, h_start=h, t_scale=t_final)
            if status != "end":
                ev_log.append((t, status))
    return _assemble(model, control, times, zs, gamma, [], ev_log)


def step_penalty(model: CanonicalModel, gamma: float, s: SystemState, u, dt: float):
    """One embedded-pair step of the full penalized right-hand side.

    Returns (new_state, nu_increment, error_estimate); the error estimate is
    what the adaptive driver uses for step control.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    control = as_control(np.atleast_1d(u), model.m)
    rhs = _penalty_rhs(model, gamma, control)
    z = np.concatenate([s.stacked(), [0.0]])
    z_new, err, _ = _dp_step(rhs, 0.0, z, dt)
    if not np.all(np.isfinite(z_new)):
        raise IntegrationError("non-finite state inside step")
    new_state = SystemState.from_stacked(z_new[:-1], model.n)
    return new_state, float(z_new[-1]), float(np.linalg.norm(err))


def integrate_limit(model: CanonicalModel, control, t_final: float,
                    cfg: IntegratorConfig | None = None,
                    init: SystemState | None = None) -> Trajectory:
    """Event-driven integration of the inelastic contact dynamics.

    FREE mode is the plain ODE on {y < 0}.  When y reaches 0 with w > 0 the
    velocity w is annihilated and its magnitude is deposited as an atom of
    nu.  CONTACT mode holds y = 0, w = 0 while the outward acceleration
    g(x,0,v,0,u) is nonnegative, accumulating nu at rate g, and releases to
    FREE as soon as g becomes negative (a tie g = 0 stays in CONTACT).
    """
    cfg = cfg or IntegratorConfig()
    if init is None:
        raise ValueError("init state required")
    if init.y > cfg.contact_band:
        raise ValueError(f"limit integration requires init.y <= 0, got y={init.y}")
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    control = as_control(control, model.m)

    n, m = model.n, model.m
    iy, iw, inu = n, 2 * n + 1, 2 * n + 2
    w_tol = 100.0 * cfg.abs_tol

    free_rhs = _penalty_rhs(model, 0.0, control)  # penalty term identically off

    def g_contact(t, z):
        x = z[:n]
        v = z[n + 1:iw]
        u = control.value(t)
        g3 = np.asarray(model.g3(x, 0.0, v), dtype=float).reshape(m)
        return float(model.g1(x, 0.0, v)) + float(g3 @ u)

    def contact_rhs(t, z):
        x = z[:n]
        v = z[n + 1:iw]
        u = control.value(t)
        out = np.zeros(z.size)
        if n:
            f3 = np.asarray(model.f3(x, 0.0, v), dtype=float).reshape(n, m)
            out[:n] = v
            out[n + 1:iw] = (np.asarray(model.f1(x, 0.0, v), dtype=float) + f3 @ u)
        out[inu] = max(g_contact(t, z), 0.0)
        return out

    z = np.concatenate([init.stacked(), [0.0]])
    times = [0.0]
    zs = [z.copy()]
    atoms = []
    ev_log = []

    def record(t, zz):
        times.append(t)
        zs.append(zz.copy())

    def in_contact(t, z):
        return (z[iy] >= -cfg.contact_band and abs(z[iw]) <= w_tol
                and g_contact(t, z) >= 0.0)

    seg = _segment_times(control, t_final)
    h = None
    for a, b in zip(seg[:-1], seg[1:]):
        t = a
        while t < b - 1e-15 * max(1.0, t_final):
            if in_contact(t, z):
                if not ev_log or ev_log[-1][1] != "contact":
                    ev_log.append((t, "contact"))
                z[iy] = 0.0
                z[iw] = 0.0
                events = [_Event("release", g_contact, -1)]
                status, t, z, h = _integrate_segment(
                    contact_rhs, t, b, z, cfg, None, events, record, h_start=h, t_scale=t_final)
                if status == "release":
                    ev_log.append((t, "release"))
                    z[iy] = 0.0
                    z[iw] = 0.0
            else:
                events = [_Event("impact", lambda tt, zz: zz[iy], +1)]
                status, t, z, h = _integrate_segment(
                    free_rhs, t, b, z, cfg, None, events, record, h_start=h, t_scale=t_final)
                if status == "impact":
                    w_pre = z[iw]
                    z[iy] = 0.0
                    if w_pre > 1e-14:
                        atoms.append((t, float(w_pre)))
                        z[iw] = 0.0
                        z[inu] += w_pre
                        ev_log.append((t, "impact"))
                        # overwrite the recorded pre-impact point with the post-impact state
                        zs[-1] = z.copy()
    traj = _assemble(model, control, times, zs, None, atoms, ev_log)
    return traj


def boundary_layer_closed_form(M_bar: float, gamma: float, tau):
    """Exact solution of y' = M_bar - (gamma/2) y**2, y(0) = 0.

    Equals sqrt(2*M_bar/gamma) * tanh(sqrt(M_bar*gamma/2) * tau); this is the
    profile of the contact layer and its asymptote sqrt(2*M_bar/gamma) is the
    layer height.
    """
    if M_bar <= 0 or gamma <= 0:
        raise ValueError("M_bar and gamma must be positive")
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    return np.sqrt(2.0 * M_bar / gamma) * np.tanh(np.sqrt(M_bar * gamma / 2.0) * tau)


def integrate_layer_ode(M_bar: float, gamma: float, taus,
                        rel_tol: float = 1e-10, abs_tol: float = 1e-13) -> np.ndarray:
    """Integrate the scalar layer ODE y' = M_bar - (gamma/2) y**2 numerically.

    Independent check of ``boundary_layer_closed_form`` using the same
    embedded-pair stepper as the full integrator.
    """
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(np.diff(taus) <= 0) and taus.size > 1:
        raise ValueError("taus must be strictly increasing")
    cfg = IntegratorConfig(rel_tol=rel_tol, abs_tol=abs_tol,
                           dt_max=max(float(taus[-1]), 1e-12))

    def rhs(t, z):
        return np.array([M_bar - 0.5 * gamma * z[0] * z[0]])

    out = np.empty(taus.size)
    t = 0.0
    z = np.zeros(1)
    h = None
    t_scale = max(float(taus[-1]), 1e-12)
    for i, tau in enumerate(taus):
        if tau > t:
            _, t, z, h = _integrate_segment(rhs, t, float(tau), z, cfg, None, [],
                                            lambda *_: None, h_start=h, t_scale=t_scale)
        out[i] = z[0]
    return out


def resample(traj: Trajectory, new_times) -> Trajectory:
    """Linear resampling of all trajectory columns onto a new grid."""
    new_times = np.asarray(new_times, dtype=float)
    t = traj.times

    def col(c):
        return np.interp(new_times, t, c)

    xs = np.stack([col(traj.xs[:, j]) for j in range(traj.n)], axis=1) if traj.n \
        else np.zeros((new_times.size, 0))
    vs = np.stack([col(traj.vs[:, j]) for j in range(traj.n)], axis=1) if traj.n \
        else np.zeros((new_times.size, 0))
    us = np.stack([col(traj.us[:, j]) for j in range(traj.m)], axis=1)
    return Trajectory(times=new_times, xs=xs, ys=col(traj.ys), vs=vs, ws=col(traj.ws),
                      us=us, nu=col(traj.nu), gamma=traj.gamma,
                      atoms=list(traj.atoms), events=list(traj.events))

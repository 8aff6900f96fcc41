"""ODE stepping for complex state vectors.

Adaptive stepping delegates to scipy's DOP853; the fixed-step classical RK4
exists for convergence studies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp


class IntegrationError(RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t = {time:.6g} s)")
        self.time = time


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "adaptive"  # "adaptive" | "rk4"
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    dt: float | None = None
    max_step: float = math.inf

    def __post_init__(self):
        if self.method not in ("adaptive", "rk4"):
            raise ValueError(f"unknown integrator method {self.method!r}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.method == "rk4":
            if self.dt is None or self.dt <= 0:
                raise ValueError("rk4 needs a positive dt")
        if self.dt is not None and self.dt > self.max_step:
            raise ValueError("dt must not exceed max_step")


def _rk4(rhs, y0, t0, t1, dt, t_eval):
    n = max(1, int(math.ceil((t1 - t0) / dt - 1e-12)))
    h = (t1 - t0) / n
    y = np.array(y0, dtype=complex)
    ts = t0 + h * np.arange(n + 1)
    samples = []
    want = list(t_eval) if t_eval is not None else []
    k = 0
    for i in range(n):
        t = ts[i]
        while k < len(want) and want[k] <= t + 1e-15:
            samples.append(y.copy())
            k += 1
        k1 = rhs(t, y)
        k2 = rhs(t + h / 2, y + h / 2 * k1)
        k3 = rhs(t + h / 2, y + h / 2 * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y)):
            raise IntegrationError("non-finite state in rk4", t + h)
    while k < len(want):
        samples.append(y.copy())
        k += 1
    return y, samples


def integrate(rhs, y0, t0, t1, cfg: IntegratorConfig, t_eval=None):
    """Integrate dy/dt = rhs(t, y) from t0 to t1.

    Returns (y(t1), samples) where samples holds y at each t_eval point
    (for rk4 the nearest step at or after, so pass step-aligned times).
    """
    y0 = np.asarray(y0, dtype=complex)
    if t1 <= t0:
        return y0.copy(), [y0.copy() for _ in (t_eval if t_eval is not None else [])]
    if cfg.method == "rk4":
        return _rk4(rhs, y0, t0, t1, min(cfg.dt, cfg.max_step), t_eval)
    evals = None
    n_req = 0
    if t_eval is not None:
        evals = np.asarray(t_eval, dtype=float)
        n_req = evals.size
        if n_req == 0 or evals[-1] < t1:
            evals = np.append(evals, t1)
    sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    max_step=cfg.max_step, t_eval=evals)
    if sol.status != 0:
        t_fail = float(sol.t[-1]) if sol.t.size else t0
        raise IntegrationError(f"adaptive integration failed: {sol.message}", t_fail)
    samples = [] if t_eval is None else [sol.y[:, i] for i in range(n_req)]
    return np.array(sol.y[:, -1]), samples

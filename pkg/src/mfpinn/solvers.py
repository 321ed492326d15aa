"""Reference integrators used to build datasets and validation baselines.

These are deliberately plain: classical fixed-step RK4 for ODE systems
(batched over parameter realizations along the leading state axis) and a
method-of-lines finite-difference scheme for the viscous Burgers equation.
Surrogate training never touches this module; it exists to produce
high-fidelity observations and independent checks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError


@dataclass
class OdeSystem:
    """First-order system ``dy/dt = rhs(t, y, params)``.

    ``y0`` may be a ``(dim,)`` vector or a ``(batch, dim)`` matrix to
    integrate many parameter realizations side by side; ``params`` is handed
    to ``rhs`` untouched.
    """

    dim: int
    rhs: callable
    y0: np.ndarray
    params: object = None

    def __post_init__(self):
        y0 = np.asarray(self.y0, dtype=float)
        if y0.ndim not in (1, 2) or y0.shape[-1] != self.dim:
            raise DomainError(
                f"initial state shape {y0.shape} does not end in dim "
                f"{self.dim}")
        self.y0 = y0


def rk4_integrate(system, t_span, h, record_times, abort_above=None):
    """Classical fourth-order Runge-Kutta with linear interpolation output.

    Integrates from ``t_span[0]`` to ``t_span[1]`` with fixed step ``h``
    (the final step is shortened to land on the endpoint exactly) and
    returns states at ``record_times``, shape ``(len(record_times),) +
    y0.shape``.  Recording interpolates linearly between the two bracketing
    steps, so record times need not align with the step grid.

    ``abort_above`` aborts with a numerical error once ``max|y|`` passes the
    given bound (used as a blow-up guard by the PDE wrapper).
    """
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not t1 > t0:
        raise DomainError(f"empty integration span ({t0}, {t1})")
    if not h > 0:
        raise DomainError(f"step size must be positive: {h}")
    record = np.asarray(record_times, dtype=float)
    if record.ndim != 1 or record.size == 0:
        raise DomainError("record_times must be a non-empty 1-D sequence")
    if np.any(record < t0 - 1e-12) or np.any(record > t1 + 1e-12):
        raise DomainError(
            f"record times must lie within [{t0}, {t1}]")
    order = np.argsort(record, kind="stable")
    sorted_times = np.clip(record[order], t0, t1)

    y = system.y0.astype(float, copy=True)
    out = np.empty((record.size,) + y.shape)
    rhs = system.rhs
    p = system.params

    next_rec = 0
    while next_rec < record.size and sorted_times[next_rec] <= t0:
        out[order[next_rec]] = y
        next_rec += 1

    t = t0
    while t < t1 - 1e-12:
        step = min(h, t1 - t)
        k1 = rhs(t, y, p)
        k2 = rhs(t + 0.5 * step, y + 0.5 * step * k1, p)
        k3 = rhs(t + 0.5 * step, y + 0.5 * step * k2, p)
        k4 = rhs(t + step, y + step * k3, p)
        y_new = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t_new = t + step
        if not np.all(np.isfinite(y_new)):
            raise NumericalError(f"state became non-finite at t={t_new:.6g}")
        if abort_above is not None and np.max(np.abs(y_new)) > abort_above:
            raise NumericalError(
                f"state magnitude exceeded {abort_above:g} at t={t_new:.6g}; "
                "integration unstable")
        while next_rec < record.size and sorted_times[next_rec] <= t_new + 1e-12:
            tr = sorted_times[next_rec]
            w = 0.0 if step == 0 else (tr - t) / step
            out[order[next_rec]] = (1.0 - w) * y + w * y_new
            next_rec += 1
        t, y = t_new, y_new
    while next_rec < record.size:
        out[order[next_rec]] = y
        next_rec += 1
    return out


@dataclass
class BurgersGrid:
    """Uniform grid on [-1, 1] with boundary data set by ``delta``.

    Boundary values are ``u(t, -1) = 1 + delta`` and ``u(t, 1) = -1``; the
    initial profile is the straight line joining them, so the initial and
    boundary data are compatible at the corners.  ``delta`` may be an array
    to solve a whole batch of boundary perturbations on one grid.
    """

    nu: float
    delta: object
    nx: int = 201
    dt: float = None

    def __post_init__(self):
        if not self.nu > 0:
            raise DomainError(f"viscosity must be positive: {self.nu}")
        if self.nx < 5:
            raise DomainError(f"need at least 5 grid nodes, got {self.nx}")
        self.delta = np.asarray(self.delta, dtype=float)
        if self.delta.ndim > 1:
            raise DomainError("delta must be scalar or 1-D")

    @property
    def x(self):
        return np.linspace(-1.0, 1.0, self.nx)

    @property
    def dx(self):
        return 2.0 / (self.nx - 1)

    def initial_profile(self):
        """Linear profile joining the boundary values."""
        x = self.x
        d = self.delta
        if d.ndim == 1:
            return -x[None, :] + 0.5 * d[:, None] * (1.0 - x[None, :])
        return -x + 0.5 * float(d) * (1.0 - x)

    def stable_dt(self):
        """Half the tighter of the diffusive and advective step limits."""
        umax = max(1.0, float(np.max(1.0 + self.delta)))
        return 0.5 * min(self.dx ** 2 / (2.0 * self.nu), self.dx / umax)


def burgers_fd_solve(grid, t_end, record_times, advect=True):
    """Finite-difference solution of ``u_t + u u_x = nu u_xx`` on [-1, 1].

    Method of lines: second-order central diffusion, first-order upwind
    advection (``advect=False`` drops the nonlinear term, leaving the heat
    equation), classical RK4 in time at ``grid.dt`` or an automatic stable
    step.  Returns ``(x, fields)`` where ``fields`` has shape
    ``(len(record_times), nx)``, with a leading batch axis inserted before
    ``nx`` when ``grid.delta`` is an array.

    The boundary rows of the semi-discrete system are identically zero and
    the initial profile matches the boundary data, so Dirichlet values stay
    exact to the last bit throughout.
    """
    dx = grid.dx
    nu = grid.nu
    u0 = grid.initial_profile()
    dt = grid.dt if grid.dt is not None else grid.stable_dt()
    if not dt > 0:
        raise DomainError(f"time step must be positive: {dt}")
    blowup = 10.0 * max(1.0, float(np.max(np.abs(u0))))

    def rhs(t, u, _):
        du = np.zeros_like(u)
        interior = u[..., 1:-1]
        diff = (u[..., 2:] - 2.0 * interior + u[..., :-2]) / dx ** 2
        du[..., 1:-1] = nu * diff
        if advect:
            back = (interior - u[..., :-2]) / dx
            fwd = (u[..., 2:] - interior) / dx
            ux = np.where(interior > 0.0, back, fwd)
            du[..., 1:-1] -= interior * ux
        return du

    system = OdeSystem(grid.nx, rhs, u0)
    fields = rk4_integrate(system, (0.0, t_end), dt, record_times,
                           abort_above=blowup)
    return grid.x, fields

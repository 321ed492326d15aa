"""Bundled example problems: governing equations, reference solvers, presets.

Four problems of increasing muscle: a stochastic exponential decay ODE with a
closed-form high-fidelity response, a viscous Burgers equation whose
transition layer is supersensitive to a boundary perturbation, a nonlinear
oscillator whose approximate model linearizes the restoring force, and a
three-species cell-signaling cascade with Michaelis-Menten kinetics.  Each
comes with the approximate (low-fidelity) governing equation wired into a
:class:`~mfpinn.pinn.ProblemSpec`, a reference solver that stands in for the
true system, named distributions for the stochastic inputs, a default limit
state, and the network/training settings used by the command line presets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import network as net
from . import pinn
from . import reliability as rel
from .errors import DomainError
from .solvers import BurgersGrid, OdeSystem, burgers_fd_solve, rk4_integrate

BENCHMARK_IDS = ("decay_ode", "burgers", "oscillator", "cascade")

# fixed step for all RK4 reference runs; truncation error ~1e-13,
# far below the Monte Carlo noise everything is compared against
ORACLE_STEP = 1e-3

BURGERS_NU_DEFAULT = 0.05
OSCILLATOR_IC = (-1.193, -3.876)
CASCADE_IC = (0.0, 1.0, 0.0)
CASCADE_DRIVE_DEFAULT = 0.5
# Michaelis constants km1..km6, rate maxima vmax1..vmax6, feedback gain g4
CASCADE_MEANS = (0.2, 0.2, 0.2, 0.2, 0.2, 0.2,
                 0.5, 0.15, 0.15, 0.15, 0.25, 0.05, 2.0)
CASCADE_NAMES = ("km1", "km2", "km3", "km4", "km5", "km6",
                 "vmax1", "vmax2", "vmax3", "vmax4", "vmax5", "vmax6", "g4")


# -- closed forms and right-hand sides ------------------------------------

def decay_lf_solution(z, t):
    """Exact solution e^{-Zt} of the approximate model u' = -Zu, u(0) = 1."""
    return np.exp(-np.asarray(z, dtype=float) * np.asarray(t, dtype=float))


def decay_hf_response(z, t):
    """High-fidelity response composed from the low-fidelity solution."""
    t = np.asarray(t, dtype=float)
    u = decay_lf_solution(z, t)
    return t * np.sin(t) * np.log(u ** 4) ** 2 + 15.0 * t ** 3 + 1.0


def oscillator_lf_rhs(t, y, params):
    """Linearized oscillator: x1' = x2, x2' = -a1 x2 - a2 x1."""
    a1, a2 = params[..., 0], params[..., 1]
    return np.stack([y[..., 1], -a1 * y[..., 1] - a2 * y[..., 0]], axis=-1)


def oscillator_hf_rhs(t, y, params):
    """True oscillator with the sine restoring force."""
    a1, a2 = params[..., 0], params[..., 1]
    return np.stack([y[..., 1],
                     -a1 * y[..., 1] - a2 * np.sin(y[..., 0])], axis=-1)


def cascade_rhs(e, params, drive):
    """Signaling cascade kinetics for states (e1, e2, e3).

    ``params`` columns follow :data:`CASCADE_NAMES`; ``drive`` is the input
    stimulus I, attenuated by the e3 feedback loop.  The approximate model
    used for physics training is this system with ``drive = 0``.
    """
    e1, e2, e3 = e[..., 0], e[..., 1], e[..., 2]
    km = [params[..., j] for j in range(6)]
    vm = [params[..., 6 + j] for j in range(6)]
    g4 = params[..., 12]
    inp = drive / (1.0 + g4 * e3)
    d1 = inp * vm[0] * (1.0 - e1) / (km[0] + 1.0 - e1) \
        - vm[1] * e1 / (km[1] + e1)
    d2 = vm[2] * e1 * (1.0 - e2) / (km[2] + 1.0 - e2) \
        - vm[3] * e2 / (km[3] + e2)
    d3 = vm[4] * e2 * (1.0 - e3) / (km[4] + 1.0 - e3) \
        - vm[5] * e3 / (km[5] + e3)
    return np.stack([d1, d2, d3], axis=-1)


# -- residual evaluators ---------------------------------------------------

def _decay_residual(u, xi, x, t):
    # u' + Z u = 0
    return [u[0].d("t") + xi[0] * u[0].value]


def _heat_residual(nu):
    def evaluate(u, xi, x, t):
        # u_t = nu u_xx
        return [u[0].d("t") - nu * u[0].dd("x")]
    return evaluate


def _oscillator_residual(u, xi, x, t):
    a1, a2 = xi[0], xi[1]
    r1 = u[0].d("t") - u[1].value
    r2 = u[1].d("t") + a1 * u[1].value + a2 * u[0].value
    return [r1, r2]


def _cascade_residual(u, xi, x, t):
    # zero-stimulus kinetics with the Michaelis denominators cleared so the
    # residual stays polynomial in the states
    km2, km3, km4, km5, km6 = xi[1], xi[2], xi[3], xi[4], xi[5]
    vm2, vm3, vm4, vm5, vm6 = xi[7], xi[8], xi[9], xi[10], xi[11]
    e1, e2, e3 = u[0].value, u[1].value, u[2].value
    r1 = (km2 + e1) * u[0].d("t") + vm2 * e1
    r2 = (km3 + 1.0 - e2) * (km4 + e2) * u[1].d("t") \
        - vm3 * e1 * (1.0 - e2) * (km4 + e2) \
        + vm4 * e2 * (km3 + 1.0 - e2)
    r3 = (km5 + 1.0 - e3) * (km6 + e3) * u[2].d("t") \
        - vm5 * e2 * (1.0 - e3) * (km6 + e3) \
        + vm6 * e3 * (km5 + 1.0 - e3)
    return [r1, r2, r3]


# -- problem factories -----------------------------------------------------

def make_decay_problem():
    """Stochastic decay ODE u' = -Zu on t in [0, 1], u(0) = 1."""
    ansatz = net.AnsatzSpec(
        offset=lambda xi, x, t: [1.0],
        scale=lambda xi, x, t: [t])
    return pinn.ProblemSpec(
        name="decay_ode",
        dists=(rel.Normal(-2.0, 1.0),),
        xi_names=("z",),
        t_domain=(0.0, 1.0),
        n_outputs=1,
        ansatz=ansatz,
        residual=pinn.ResidualSpec(1, _decay_residual))


def make_burgers_problem(nu=BURGERS_NU_DEFAULT):
    """Heat-equation approximation of Burgers flow on [-1, 1] x [0, 12].

    The boundary perturbation delta enters through the constraint surface:
    u(t, -1) = 1 + delta, u(t, 1) = -1, and the initial profile is the
    straight line joining the boundary values.
    """
    if nu <= 0:
        raise DomainError(f"viscosity must be positive: {nu}")

    def offset(xi, x, t):
        delta = xi[0]
        return [-x + 0.5 * delta * (1.0 - x)]

    def scale(xi, x, t):
        return [t * (1.0 - x) * (1.0 + x)]

    return pinn.ProblemSpec(
        name="burgers",
        dists=(rel.Uniform(0.0, 0.1),),
        xi_names=("delta",),
        t_domain=(0.0, 12.0),
        n_outputs=1,
        ansatz=net.AnsatzSpec(offset, scale),
        residual=pinn.ResidualSpec(1, _heat_residual(nu)),
        x_domain=(-1.0, 1.0),
        second_order_x=True)


def make_oscillator_problem():
    """Linearized oscillator on t in [0, 5] with fixed initial state."""
    ic1, ic2 = OSCILLATOR_IC
    ansatz = net.AnsatzSpec(
        offset=lambda xi, x, t: [ic1, ic2],
        scale=lambda xi, x, t: [t, t])
    return pinn.ProblemSpec(
        name="oscillator",
        dists=(rel.Uniform(0.0, 0.4), rel.Uniform(8.8, 9.2)),
        xi_names=("alpha1", "alpha2"),
        t_domain=(0.0, 5.0),
        n_outputs=2,
        ansatz=ansatz,
        residual=pinn.ResidualSpec(2, _oscillator_residual))


def make_cascade_problem():
    """Zero-stimulus signaling cascade on t in [0, 10], state (0, 1, 0)."""
    dists = tuple(rel.Uniform(0.9 * m, 1.1 * m) for m in CASCADE_MEANS)
    ansatz = net.AnsatzSpec(
        offset=lambda xi, x, t: [0.0, 1.0, 0.0],
        scale=lambda xi, x, t: [t, t, t])
    return pinn.ProblemSpec(
        name="cascade",
        dists=dists,
        xi_names=CASCADE_NAMES,
        t_domain=(0.0, 10.0),
        n_outputs=3,
        ansatz=ansatz,
        residual=pinn.ResidualSpec(3, _cascade_residual))


# -- reference solvers -----------------------------------------------------

def transition_from_field(x, fields):
    """Zero crossing of each spatial profile by linear interpolation.

    ``fields`` is ``(..., nx)`` with a positive left boundary and negative
    right boundary; returns the crossing location per leading row.
    """
    f = np.asarray(fields, dtype=float)
    squeeze = f.ndim == 1
    f = np.atleast_2d(f)
    neg = f <= 0.0
    idx = np.argmax(neg, axis=-1)
    if np.any(idx == 0):
        raise DomainError("profile has no positive-to-negative crossing")
    f1 = np.take_along_axis(f, idx[:, None], -1)[:, 0]
    f0 = np.take_along_axis(f, idx[:, None] - 1, -1)[:, 0]
    w = f0 / (f0 - f1)
    z = x[idx - 1] + w * (x[idx] - x[idx - 1])
    return float(z[0]) if squeeze else z


_Z_TABLES = {}


def burgers_z_table(nu, t_t, n_delta=101, nx=201):
    """Transition-layer location z(delta) at time ``t_t``, tabulated.

    One batched finite-difference solve over a uniform delta grid; results
    are cached per (nu, t_t, grid) so repeated reliability calls reuse it.
    """
    key = (float(nu), float(t_t), int(n_delta), int(nx))
    if key not in _Z_TABLES:
        dgrid = np.linspace(0.0, 0.1, n_delta)
        grid = BurgersGrid(nu, dgrid, nx)
        x, fields = burgers_fd_solve(grid, float(t_t), [float(t_t)])
        _Z_TABLES[key] = (dgrid, transition_from_field(x, fields[0]))
    return _Z_TABLES[key]


def _decay_oracle(xi, t_t):
    return decay_hf_response(xi[:, 0], t_t)


def _oscillator_oracle(xi, t_t):
    y0 = np.broadcast_to(np.array(OSCILLATOR_IC), (xi.shape[0], 2))
    sys = OdeSystem(2, oscillator_hf_rhs, y0, xi)
    traj = rk4_integrate(sys, (0.0, float(t_t)), ORACLE_STEP, [float(t_t)])
    return traj[0][:, 1]


def _cascade_oracle(drive):
    def oracle(xi, t_t):
        y0 = np.broadcast_to(np.array(CASCADE_IC), (xi.shape[0], 3))
        rhs = lambda t, y, p: cascade_rhs(y, p, drive)  # noqa: E731
        sys = OdeSystem(3, rhs, y0, xi)
        traj = rk4_integrate(sys, (0.0, float(t_t)), ORACLE_STEP,
                             [float(t_t)])
        return traj[0][:, 2]
    return oracle


def _burgers_oracle(nu):
    def oracle(xi, t_t):
        dgrid, z = burgers_z_table(nu, t_t)
        return np.interp(xi[:, 0], dgrid, z)
    return oracle


def _state_surrogate(index):
    def response(params, problem, xi, t_t):
        return pinn.evaluate_surrogate(params, problem, xi, t=t_t)[:, index]
    return response


def _burgers_surrogate(params, problem, xi, t_t):
    """Transition layer of the surrogate: root of u(delta, x, t_t) in x.

    The constraint surface pins u(-1) = 1 + delta > 0 and u(1) = -1, so a
    bracket always exists; rows the bisection cannot bracket (impossible
    here, kept for the protocol) come back flagged for exclusion.
    """
    n = xi.shape[0]

    def profile(xv):
        return pinn.evaluate_surrogate(params, problem, xi, x=xv, t=t_t)[:, 0]

    roots, ok = rel.bisect_zero(profile, np.full(n, -1.0), np.full(n, 1.0))
    return roots, ok


# -- high-fidelity data generators ----------------------------------------

def _decay_hf_solver(xi, x_locs, times):
    u = decay_hf_response(xi[:, 0][:, None], times[None, :])
    return u[:, None, :, None], "closed-form response"


def _oscillator_hf_solver(xi, x_locs, times):
    y0 = np.broadcast_to(np.array(OSCILLATOR_IC), (xi.shape[0], 2))
    sys = OdeSystem(2, oscillator_hf_rhs, y0, xi)
    traj = rk4_integrate(sys, (0.0, float(times.max())), ORACLE_STEP, times)
    return np.transpose(traj, (1, 0, 2))[:, None, :, :], \
        f"rk4 h={ORACLE_STEP}"


def _cascade_hf_solver(drive):
    def solve(xi, x_locs, times):
        y0 = np.broadcast_to(np.array(CASCADE_IC), (xi.shape[0], 3))
        rhs = lambda t, y, p: cascade_rhs(y, p, drive)  # noqa: E731
        sys = OdeSystem(3, rhs, y0, xi)
        traj = rk4_integrate(sys, (0.0, float(times.max())), ORACLE_STEP,
                             times)
        return np.transpose(traj, (1, 0, 2))[:, None, :, :], \
            f"rk4 h={ORACLE_STEP} drive={drive}"
    return solve


def _burgers_hf_solver(nu):
    def solve(xi, x_locs, times):
        grid = BurgersGrid(nu, xi[:, 0])
        x, fields = burgers_fd_solve(grid, float(times.max()), times)
        cols = np.array([int(np.argmin(np.abs(x - xl))) for xl in x_locs])
        if np.max(np.abs(x[cols] - x_locs)) > 1e-9:
            raise DomainError(
                f"sensor locations {x_locs} do not sit on the {grid.nx}-node "
                "grid")
        u = np.transpose(fields[:, :, cols], (1, 2, 0))[..., None]
        return u, f"finite-difference solve nu={nu} nx={grid.nx}"
    return solve


# -- benchmark registry ----------------------------------------------------

@dataclass
class BenchmarkDef:
    """One problem bundled with its solvers, limit state, and presets.

    The training budgets are the full-strength settings used by the command
    line presets; callers running quick studies pass their own reduced
    budgets to the trainer directly.
    """

    id: str
    problem: pinn.ProblemSpec
    arch: net.Architecture
    collocation_n: int
    lf_budget: pinn.PhaseBudget
    transfer: pinn.TransferConfig
    limit: rel.LimitState
    mcs_n: int
    hf_times: np.ndarray
    hf_x_locs: np.ndarray
    hf_n_samples: int
    hf_xi_grid: np.ndarray = None
    ensemble: int = 1
    constants: dict = field(default_factory=dict)
    oracle: callable = None
    surrogate: callable = None
    hf_solver: callable = None

    def oracle_response(self, t_t=None):
        """Response function over stochastic samples for the reference model."""
        tt = self.limit.t_t if t_t is None else float(t_t)
        return lambda xi: self.oracle(np.atleast_2d(xi), tt)

    def surrogate_response(self, params, t_t=None):
        """Response function backed by a trained surrogate."""
        tt = self.limit.t_t if t_t is None else float(t_t)
        return lambda xi: self.surrogate(params, self.problem,
                                         np.atleast_2d(xi), tt)


def make_benchmark(benchmark_id, nu=BURGERS_NU_DEFAULT,
                   drive=CASCADE_DRIVE_DEFAULT):
    """Build one benchmark definition by id with its full-strength presets."""
    if benchmark_id == "decay_ode":
        return BenchmarkDef(
            id="decay_ode",
            problem=make_decay_problem(),
            arch=net.mlp((2, 50, 50, 50, 50, 50, 1)),
            collocation_n=8000,
            lf_budget=pinn.PhaseBudget(15000, 1e-3, 10000),
            transfer=pinn.TransferConfig(2, pinn.PhaseBudget(10000, 1e-3,
                                                             10000)),
            limit=rel.LimitState(18.0, 1.0, rel.RESPONSE_MINUS_THRESHOLD),
            mcs_n=1000000,
            hf_times=np.array([0.0, 1.0]),
            hf_x_locs=None,
            hf_n_samples=15,
            oracle=_decay_oracle,
            surrogate=_state_surrogate(0),
            hf_solver=_decay_hf_solver)
    if benchmark_id == "burgers":
        return BenchmarkDef(
            id="burgers",
            problem=make_burgers_problem(nu),
            arch=net.mlp((3, 50, 50, 50, 50, 50, 50, 1)),
            collocation_n=30000,
            lf_budget=pinn.PhaseBudget(500, 1e-3, 1000),
            transfer=pinn.TransferConfig(2, pinn.PhaseBudget(6000, 3e-3,
                                                             10000),
                                         lbfgs_l_t=1),
            limit=rel.LimitState(0.40, 10.0, rel.THRESHOLD_MINUS_RESPONSE),
            mcs_n=10000,
            hf_times=np.linspace(1.0, 9.0, 8),
            hf_x_locs=np.array([-1.0, 0.0, 1.0]),
            hf_n_samples=5,
            hf_xi_grid=np.linspace(0.0, 0.1, 5)[:, None],
            ensemble=20,
            constants={"nu": nu},
            oracle=_burgers_oracle(nu),
            surrogate=_burgers_surrogate,
            hf_solver=_burgers_hf_solver(nu))
    if benchmark_id == "oscillator":
        return BenchmarkDef(
            id="oscillator",
            problem=make_oscillator_problem(),
            arch=net.mlp((3, 50, 50, 50, 50, 2)),
            collocation_n=10000,
            lf_budget=pinn.PhaseBudget(15000, 1e-3, 10000),
            transfer=pinn.TransferConfig(2, pinn.PhaseBudget(10000, 1e-3,
                                                             10000)),
            limit=rel.LimitState(4.0, 5.0, rel.THRESHOLD_MINUS_RESPONSE,
                                 transform=np.abs),
            mcs_n=10000,
            hf_times=np.linspace(0.0, 5.0, 5),
            hf_x_locs=None,
            hf_n_samples=5,
            oracle=_oscillator_oracle,
            surrogate=_state_surrogate(1),
            hf_solver=_oscillator_hf_solver)
    if benchmark_id == "cascade":
        return BenchmarkDef(
            id="cascade",
            problem=make_cascade_problem(),
            arch=net.mlp((14, 100, 100, 100, 100, 3)),
            collocation_n=10000,
            lf_budget=pinn.PhaseBudget(5000, 1e-3, 10000),
            transfer=pinn.TransferConfig(1, pinn.PhaseBudget(5000, 1e-3,
                                                             10000)),
            limit=rel.LimitState(0.40, 3.0, rel.RESPONSE_MINUS_THRESHOLD),
            mcs_n=10000,
            hf_times=np.linspace(4.0, 7.0, 5),
            hf_x_locs=None,
            hf_n_samples=10,
            constants={"drive": drive},
            oracle=_cascade_oracle(drive),
            surrogate=_state_surrogate(2),
            hf_solver=_cascade_hf_solver(drive))
    raise DomainError(
        f"unknown benchmark {benchmark_id!r}; pick one of {BENCHMARK_IDS}")


def lhs_samples(dists, n, seed):
    """Latin-hypercube sample matrix over the given distributions."""
    rng = np.random.default_rng(seed)
    return np.column_stack(
        [d.ppf(pinn._lhs_column(rng, n)) for d in dists])


def build_hf_dataset(bench, n_samples=None, times=None, x_locs=None, seed=0):
    """High-fidelity observations on a Kronecker grid of samples x sensors
    x times, generated by the benchmark's reference solver.

    Stochastic samples are Latin-hypercube draws unless the benchmark pins a
    fixed sample grid (the boundary-perturbation study does) and no explicit
    ``n_samples`` overrides it.
    """
    times = np.asarray(bench.hf_times if times is None else times,
                       dtype=float)
    prob = bench.problem
    lo, hi = prob.t_domain
    if times.ndim != 1 or times.size == 0:
        raise DomainError("need a non-empty 1-D vector of observation times")
    if times.min() < lo - 1e-12 or times.max() > hi + 1e-12:
        raise DomainError(
            f"observation times {times} leave the domain [{lo}, {hi}]")
    if prob.has_x:
        x_locs = np.asarray(bench.hf_x_locs if x_locs is None else x_locs,
                            dtype=float)
        xlo, xhi = prob.x_domain
        if x_locs.min() < xlo - 1e-12 or x_locs.max() > xhi + 1e-12:
            raise DomainError(
                f"sensor locations {x_locs} leave [{xlo}, {xhi}]")
    else:
        x_locs = None
    if bench.hf_xi_grid is not None and n_samples is None:
        xi = bench.hf_xi_grid.copy()
    else:
        n = bench.hf_n_samples if n_samples is None else int(n_samples)
        if n < 1:
            raise DomainError(f"sample count must be positive: {n}")
        xi = lhs_samples(prob.dists, n, seed)
    u, provenance = bench.hf_solver(xi, x_locs, times)
    return pinn.HfDataset(xi, x_locs, times, u, provenance, seed)

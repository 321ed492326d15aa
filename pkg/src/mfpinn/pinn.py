"""Physics-informed losses, low-fidelity training, and transfer updates.

The training story has two phases.  First a network is fit to an approximate
governing equation alone: residuals of the equation, evaluated on jets of the
constrained surrogate at collocation points, are squared and averaged.  No
solution data of any fidelity enters this phase.  Second, a sparse set of
high-fidelity observations corrects the surrogate: the early layers are
frozen and only the trailing ones are retrained against a plain data misfit,
starting from the physics-trained weights.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import jets as jm
from . import network as net
from . import tape as tp
from .errors import DomainError, EvaluationError, NumericalError
from .optim import LbfgsConfig, lbfgs_minimize, rmsprop_init, rmsprop_step


@dataclass
class ResidualSpec:
    """Residual components of the governing equation.

    ``evaluate(u, xi, x, t)`` receives the constrained outputs ``u`` as jets,
    the stochastic input columns ``xi`` as plain arrays, and the coordinate
    jets; it returns ``arity`` scalar channels, one per residual component.
    """

    arity: int
    evaluate: callable


@dataclass
class ProblemSpec:
    """Everything the trainer needs to know about one benchmark problem."""

    name: str
    dists: tuple
    xi_names: tuple
    t_domain: tuple
    n_outputs: int
    ansatz: net.AnsatzSpec
    residual: ResidualSpec
    x_domain: tuple = None
    second_order_x: bool = False
    boundary_sampler: callable = None

    def __post_init__(self):
        if len(self.xi_names) != len(self.dists):
            raise DomainError(
                f"{len(self.dists)} distributions but "
                f"{len(self.xi_names)} names")
        if not self.t_domain[0] < self.t_domain[1]:
            raise DomainError(f"empty time domain {self.t_domain}")
        if self.x_domain is not None \
                and not self.x_domain[0] < self.x_domain[1]:
            raise DomainError(f"empty space domain {self.x_domain}")
        if self.second_order_x and self.x_domain is None:
            raise DomainError("second-order x requested without an x domain")

    @property
    def has_x(self):
        return self.x_domain is not None

    @property
    def n_stochastic(self):
        return len(self.dists)

    @property
    def n_inputs(self):
        return self.n_stochastic + (1 if self.has_x else 0) + 1

    def input_names(self):
        names = list(self.xi_names)
        if self.has_x:
            names.append("x")
        names.append("t")
        return names


@dataclass
class CollocationSet:
    """Latin-hypercube training points: stochastic columns plus coordinates."""

    xi: np.ndarray
    x: np.ndarray
    t: np.ndarray
    n: int
    seed: int


def _lhs_column(rng, n):
    # one stratum [k/n, (k+1)/n) per sample, shuffled
    u = (rng.permutation(n) + rng.random(n)) / n
    return np.clip(u, 1e-12, None)


def sample_collocation(problem, n, seed):
    """Latin hypercube over every input dimension.

    Stochastic dimensions map their strata through the inverse CDF of the
    declared distribution; space and time map uniformly over their domains.
    """
    if n < 1:
        raise DomainError(f"collocation count must be positive: {n}")
    rng = np.random.default_rng(seed)
    cols = [d.ppf(_lhs_column(rng, n)) for d in problem.dists]
    xi = np.column_stack(cols) if cols else np.empty((n, 0))
    x = None
    if problem.has_x:
        lo, hi = problem.x_domain
        x = lo + (hi - lo) * _lhs_column(rng, n)
    lo, hi = problem.t_domain
    t = lo + (hi - lo) * _lhs_column(rng, n)
    return CollocationSet(xi, x, t, n, seed)


@dataclass
class HfDataset:
    """High-fidelity observations on a Kronecker grid.

    ``u[i, a, j, :]`` is the response for stochastic sample ``i`` at sensor
    location ``a`` and observation time ``j``; problems without a spatial
    coordinate use a single dummy sensor axis.
    """

    xi: np.ndarray
    x_locs: np.ndarray
    times: np.ndarray
    u: np.ndarray
    provenance: str = ""
    seed: int = None

    def __post_init__(self):
        self.xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        self.times = np.asarray(self.times, dtype=float)
        if self.x_locs is not None:
            self.x_locs = np.asarray(self.x_locs, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        s = 1 if self.x_locs is None else self.x_locs.shape[0]
        expected = (self.xi.shape[0], s, self.times.shape[0], self.u.shape[-1])
        if self.u.shape != expected:
            raise DomainError(
                f"response tensor shape {self.u.shape}, expected {expected}")

    @property
    def n_samples(self):
        return self.xi.shape[0]

    @property
    def n_rows(self):
        return self.u.shape[0] * self.u.shape[1] * self.u.shape[2]

    @property
    def n_outputs(self):
        return self.u.shape[-1]

    def rows(self):
        """Flatten to ``(inputs, targets)`` matrices, sample-major order."""
        n_h, s, n_t, m = self.u.shape
        k = self.xi.shape[1]
        reps = s * n_t
        x_cols = []
        x_cols.append(np.repeat(self.xi, reps, axis=0))
        if self.x_locs is not None:
            x_cols.append(np.tile(np.repeat(self.x_locs, n_t), n_h)[:, None])
        x_cols.append(np.tile(self.times, n_h * s)[:, None])
        inputs = np.hstack(x_cols)
        targets = self.u.reshape(n_h * s * n_t, m)
        return inputs, targets

    def save(self, csv_path):
        """Write the flat CSV plus a JSON manifest of the grid factors."""
        inputs, targets = self.rows()
        k = self.xi.shape[1]
        header = [f"xi_{j + 1}" for j in range(k)]
        if self.x_locs is not None:
            header.append("x")
        header.append("t")
        header += [f"u_{j + 1}" for j in range(self.n_outputs)]
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for xrow, urow in zip(inputs, targets):
                writer.writerow([repr(float(v)) for v in xrow]
                                + [repr(float(v)) for v in urow])
        manifest = {
            "provenance": self.provenance,
            "seed": self.seed,
            "xi": [[float(v) for v in row] for row in self.xi],
            "x_locs": None if self.x_locs is None
            else [float(v) for v in self.x_locs],
            "times": [float(v) for v in self.times],
            "n_outputs": int(self.n_outputs),
        }
        with open(_manifest_path(csv_path), "w") as fh:
            json.dump(manifest, fh, indent=1)

    @classmethod
    def load(cls, csv_path):
        """Rebuild a dataset from a CSV and its sibling manifest."""
        mpath = _manifest_path(csv_path)
        if not os.path.exists(mpath):
            raise DomainError(
                f"dataset manifest {mpath} not found next to {csv_path}")
        with open(mpath) as fh:
            man = json.load(fh)
        xi = np.array(man["xi"], dtype=float)
        x_locs = None if man["x_locs"] is None \
            else np.array(man["x_locs"], dtype=float)
        times = np.array(man["times"], dtype=float)
        m = int(man["n_outputs"])
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            data = np.array([[float(v) for v in row] for row in reader])
        s = 1 if x_locs is None else x_locs.shape[0]
        expected_rows = xi.shape[0] * s * times.shape[0]
        if data.shape[0] != expected_rows:
            raise DomainError(
                f"CSV has {data.shape[0]} rows; manifest grid implies "
                f"{expected_rows}")
        u = data[:, -m:].reshape(xi.shape[0], s, times.shape[0], m)
        return cls(xi, x_locs, times, u, man.get("provenance", ""),
                   man.get("seed"))


def _manifest_path(csv_path):
    root, _ = os.path.splitext(csv_path)
    return root + ".json"


def _coordinate_jets(problem, xi_mat, x_col, t_col, with_derivatives=True):
    """Lift one batch of inputs into jets ordered like the network inputs."""
    values = [xi_mat[:, j] for j in range(xi_mat.shape[1])]
    names = {}
    active = []
    second = []
    if problem.has_x:
        ix = len(values)
        values.append(x_col)
        names[ix] = "x"
        if with_derivatives:
            active.append(ix)
            if problem.second_order_x:
                second.append(ix)
    it = len(values)
    values.append(t_col)
    names[it] = "t"
    if with_derivatives:
        active.append(it)
    input_jets = jm.lift(values, active, second, names)
    x_jet = input_jets[ix] if problem.has_x else None
    return input_jets, x_jet, input_jets[it]


def _point_of(err, n_points):
    """Map a flat index inside a batched intermediate to its batch row."""
    if err.index is None:
        return None
    shape = getattr(err, "shape", None)
    if shape and len(shape) >= 1 and shape[0] in (n_points,):
        inner = int(np.prod(shape[1:], dtype=int)) if len(shape) > 1 else 1
        return err.index // max(inner, 1)
    return None


def physics_loss(params, problem, colloc):
    """Mean over collocation points of the summed squared residuals."""
    try:
        input_jets, x_jet, t_jet = _coordinate_jets(
            problem, colloc.xi, colloc.x, colloc.t)
        raw = net.forward_jet(params, input_jets)
        xi_cols = [colloc.xi[:, j] for j in range(colloc.xi.shape[1])]
        u = problem.ansatz.apply(raw, xi_cols, x_jet, t_jet)
        residuals = problem.residual.evaluate(u, xi_cols, x_jet, t_jet)
        if len(residuals) != problem.residual.arity:
            raise DomainError(
                f"residual evaluator returned {len(residuals)} components, "
                f"declared arity {problem.residual.arity}")
        total = None
        for r in residuals:
            sq = tp.mul(r, r)
            total = sq if total is None else tp.add(total, sq)
        return tp.amean(total)
    except EvaluationError as err:
        point = _point_of(err, colloc.n)
        where = f" at collocation point {point}" if point is not None else ""
        raise NumericalError(
            f"non-finite residual evaluation (op '{err.op}'){where}",
            index=point) from err


def data_loss(params, problem, data):
    """Mean squared misfit over every observation row and output channel."""
    if data.n_rows == 0:
        raise DomainError("dataset is empty")
    inputs, targets = data.rows()
    if inputs.shape[1] != problem.n_inputs:
        raise DomainError(
            f"dataset rows have {inputs.shape[1]} input columns, problem "
            f"expects {problem.n_inputs}")
    xi_mat = inputs[:, :problem.n_stochastic]
    x_col = inputs[:, problem.n_stochastic] if problem.has_x else None
    t_col = inputs[:, -1]
    input_jets, x_jet, t_jet = _coordinate_jets(
        problem, xi_mat, x_col, t_col, with_derivatives=False)
    raw = net.forward_jet(params, input_jets)
    xi_cols = [xi_mat[:, j] for j in range(xi_mat.shape[1])]
    u = problem.ansatz.apply(raw, xi_cols, x_jet, t_jet)
    pred = tp.colstack([c.value for c in u])
    diff = tp.sub(pred, targets)
    return tp.amean(tp.mul(diff, diff))


def evaluate_surrogate(params, problem, xi_mat, x=None, t=None, chunk=65536):
    """Constrained surrogate outputs for a batch of inputs, shape (n, m).

    ``x`` and ``t`` may be scalars (broadcast over the batch) or vectors.
    Evaluation is chunked so millions of samples stay within memory.
    """
    xi_mat = np.atleast_2d(np.asarray(xi_mat, dtype=float))
    n = xi_mat.shape[0]
    if xi_mat.shape[1] != problem.n_stochastic:
        raise DomainError(
            f"expected {problem.n_stochastic} stochastic columns, got "
            f"{xi_mat.shape[1]}")
    if problem.has_x:
        if x is None:
            raise DomainError("problem has a spatial coordinate; pass x")
        x = np.broadcast_to(np.asarray(x, dtype=float), (n,))
    if t is None:
        raise DomainError("pass the evaluation time t")
    t = np.broadcast_to(np.asarray(t, dtype=float), (n,))
    out = np.empty((n, problem.n_outputs))
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        jets_in, x_jet, t_jet = _coordinate_jets(
            problem, xi_mat[sl], None if x is None else x[sl], t[sl],
            with_derivatives=False)
        raw = net.forward_jet(params, jets_in)
        xi_cols = [xi_mat[sl, j] for j in range(xi_mat.shape[1])]
        u = problem.ansatz.apply(raw, xi_cols, x_jet, t_jet)
        for k, channel in enumerate(u):
            out[sl, k] = np.broadcast_to(channel.value, (sl.stop - sl.start,))
    return out


@dataclass
class PhaseBudget:
    """Iteration budgets for one RMSProp-then-L-BFGS training phase."""

    rmsprop_iterations: int
    learning_rate: float
    lbfgs_iterations: int
    rho: float = 0.9
    epsilon: float = 1e-8
    lbfgs: LbfgsConfig = None

    def lbfgs_config(self):
        cfg = self.lbfgs or LbfgsConfig()
        cfg.max_iterations = self.lbfgs_iterations
        return cfg


@dataclass
class TransferConfig:
    """Layer-freezing transfer settings: keep the first layers, tune the rest.

    ``l_t`` counts trailing tunable weight layers; with ``L`` hidden layers
    the first ``L + 1 - l_t`` weight layers stay frozen.  ``lbfgs_l_t``
    optionally restricts the L-BFGS sub-phase to even fewer trailing layers.
    """

    l_t: int
    budget: PhaseBudget
    lbfgs_l_t: int = None


@dataclass
class LogRow:
    phase: str
    iteration: int
    loss: float
    grad_norm: float
    step: float


def write_train_log(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "iteration", "loss", "grad_norm", "step"])
        for r in rows:
            writer.writerow([r.phase, r.iteration, repr(r.loss),
                             repr(r.grad_norm), repr(r.step)])


def _run_phases(loss_fn, params, budget, phase_tag, log, lbfgs_config=None):
    """RMSProp then L-BFGS on ``loss_fn``; appends log rows, returns params."""

    def objective(ps):
        return tp.param_gradient(lambda view: loss_fn(view), ps)

    try:
        if budget.rmsprop_iterations > 0:
            state = rmsprop_init(params, budget.learning_rate, budget.rho,
                                 budget.epsilon)
            for i in range(budget.rmsprop_iterations):
                rec = objective(params)
                gnorm = float(np.linalg.norm(rec.grad[state.indices]))
                log.append(LogRow(f"{phase_tag}-rmsprop", i, rec.value, gnorm,
                                  budget.learning_rate))
                rmsprop_step(state, params, rec)
        if budget.lbfgs_iterations > 0:
            cfg = lbfgs_config or budget.lbfgs_config()
            result = lbfgs_minimize(objective, params, cfg)
            for it, loss, gnorm, step in result.trace:
                log.append(LogRow(f"{phase_tag}-lbfgs", it, loss, gnorm, step))
            return result.params
        return params
    except NumericalError as err:
        err.log = log
        raise


def train_low_fidelity(problem, arch, colloc, budget, seed):
    """Physics-only training from Xavier initialization.

    RMSProp for the configured iterations, then L-BFGS, both minimizing
    :func:`physics_loss`.  Returns the trained parameters (all layers
    tunable) and the training log; a zero-iteration budget returns the
    initialization untouched.
    """
    params = net.xavier_init(arch, seed)
    if arch.n_inputs != problem.n_inputs:
        raise DomainError(
            f"architecture takes {arch.n_inputs} inputs, problem provides "
            f"{problem.n_inputs}")
    if arch.n_outputs != problem.n_outputs:
        raise DomainError(
            f"architecture emits {arch.n_outputs} outputs, problem needs "
            f"{problem.n_outputs}")
    log = []
    params = _run_phases(
        lambda view: physics_loss(view, problem, colloc),
        params, budget, "lf", log)
    return params, log


def transfer_update(theta_l, data, cfg, problem):
    """High-fidelity correction of a physics-trained network.

    Freezes the leading ``n_layers - l_t`` weight layers of ``theta_l`` and
    minimizes :func:`data_loss` over the rest, starting from the trained
    values.  Frozen layers come back bitwise identical.
    """
    n_layers = theta_l.n_layers
    if not 1 <= cfg.l_t <= n_layers:
        raise DomainError(
            f"l_t must lie in [1, {n_layers}], got {cfg.l_t}")
    if cfg.lbfgs_l_t is not None and not 1 <= cfg.lbfgs_l_t <= cfg.l_t:
        raise DomainError(
            f"lbfgs_l_t must lie in [1, l_t={cfg.l_t}], got {cfg.lbfgs_l_t}")
    if data.n_rows == 0:
        raise DomainError("transfer needs a non-empty dataset")
    params = theta_l.copy()
    params.freeze_first(n_layers - cfg.l_t)
    log = []
    loss_fn = lambda view: data_loss(view, problem, data)  # noqa: E731
    if cfg.lbfgs_l_t is None:
        params = _run_phases(loss_fn, params, cfg.budget, "transfer", log)
    else:
        # RMSProp over l_t layers, then L-BFGS over a tighter trailing set
        rms_only = PhaseBudget(cfg.budget.rmsprop_iterations,
                               cfg.budget.learning_rate, 0,
                               cfg.budget.rho, cfg.budget.epsilon)
        params = _run_phases(loss_fn, params, rms_only, "transfer", log)
        params.freeze_first(n_layers - cfg.lbfgs_l_t)
        lb_only = PhaseBudget(0, cfg.budget.learning_rate,
                              cfg.budget.lbfgs_iterations)
        params = _run_phases(loss_fn, params, lb_only, "transfer", log,
                             lbfgs_config=cfg.budget.lbfgs_config())
        params.freeze_first(n_layers - cfg.l_t)
    return params, log


def train_data_only(problem, arch, data, budget, seed):
    """Purely data-driven baseline: same protocol, no physics phase."""
    params = net.xavier_init(arch, seed)
    log = []
    params = _run_phases(
        lambda view: data_loss(view, problem, data),
        params, budget, "data", log)
    return params, log

"""Config-driven command line for dataset generation, training, and studies.

One JSON document describes a run; named presets carry the full-strength
settings of each bundled benchmark so studies are one-command reproducible.
Commands write their artifacts (checkpoints, CSV tables, training logs, a
manifest with the fully resolved config) into a locked output directory.
Identical configs produce identical result files.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys

import numpy as np

from . import __version__
from . import benchmarks as bm
from . import network as net
from . import pinn
from . import reliability as rel
from .errors import ConfigError, DomainError, EvaluationError, NumericalError

COMMANDS = ("gen-data", "train-lf", "transfer", "reliability", "compare",
            "pf-curve", "ensemble")
METHOD_ORDER = ("MCS", "LF-PIDNN", "HF-DNN", "MF-PIDNN")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


# -- configuration ---------------------------------------------------------

def preset_config(benchmark_id, nu=bm.BURGERS_NU_DEFAULT,
                  drive=bm.CASCADE_DRIVE_DEFAULT):
    """Full-strength settings for one benchmark as a plain config dict."""
    b = bm.make_benchmark(benchmark_id, nu=nu, drive=drive)
    tr = b.transfer
    cfg = {
        "benchmark": benchmark_id,
        "architecture": list(b.arch.layer_widths),
        "collocation": {"n": b.collocation_n, "seed": 0},
        "lf": {
            "rmsprop_iterations": b.lf_budget.rmsprop_iterations,
            "learning_rate": b.lf_budget.learning_rate,
            "lbfgs_iterations": b.lf_budget.lbfgs_iterations,
        },
        "transfer": {
            "l_t": tr.l_t,
            "rmsprop_iterations": tr.budget.rmsprop_iterations,
            "learning_rate": tr.budget.learning_rate,
            "lbfgs_iterations": tr.budget.lbfgs_iterations,
            "lbfgs_l_t": tr.lbfgs_l_t,
        },
        "init_seed": 0,
        "dataset": {
            "path": None,
            "n_samples": None,
            "times": [float(v) for v in b.hf_times],
            "x_locs": None if b.hf_x_locs is None
            else [float(v) for v in b.hf_x_locs],
            "seed": 0,
        },
        "reliability": {
            "n": b.mcs_n,
            "seed": 1,
            "threshold": b.limit.threshold,
            "t_t": b.limit.t_t,
            "thresholds": None,
        },
        "ensemble": b.ensemble,
        "lf_checkpoint": None,
        "checkpoint": None,
        "output_dir": None,
    }
    if benchmark_id == "burgers":
        cfg["nu"] = nu
    if benchmark_id == "cascade":
        cfg["drive"] = drive
    return cfg


def _merge(base, override, path=""):
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value, where)
        else:
            base[key] = value
    return base


def _expect(cfg, path, kinds, allow_none=False):
    node = cfg
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"{path}", "missing")
        node = node[part]
    if node is None:
        if allow_none:
            return None
        raise ConfigError(f"{path}", "must not be null")
    if kinds is bool:
        ok = isinstance(node, bool)
    else:
        ok = isinstance(node, kinds) and not isinstance(node, bool)
    if not ok:
        raise ConfigError(f"{path}", f"expected {kinds}, got {type(node).__name__}")
    return node


def _positive_int(cfg, path, allow_zero=False):
    v = _expect(cfg, path, int)
    if v < 0 or (v == 0 and not allow_zero):
        raise ConfigError(f"{path}", f"must be {'>= 0' if allow_zero else '> 0'}")
    return v


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError("config", f"file {path!r} not found")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError("config", f"invalid JSON in {path!r}: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return cfg


def resolve_config(preset=None, config=None, seed=None, out=None):
    """Overlay an explicit config onto preset defaults and validate it.

    Returns ``(resolved_dict, benchmark)``.  Every field ends up populated,
    so the manifest records the complete effective settings.
    """
    base_id = None
    if config is not None:
        base_id = config.get("benchmark")
    if preset is not None:
        base_id = preset
    if base_id is None:
        raise ConfigError("benchmark", "choose a preset or set it in the config")
    if base_id not in bm.BENCHMARK_IDS:
        raise ConfigError("benchmark", f"unknown id {base_id!r}; pick one of "
            f"{list(bm.BENCHMARK_IDS)}")
    nu = bm.BURGERS_NU_DEFAULT
    drive = bm.CASCADE_DRIVE_DEFAULT
    if config is not None:
        if "nu" in config and config["nu"] is not None:
            nu = float(config["nu"])
        if "drive" in config and config["drive"] is not None:
            drive = float(config["drive"])
    cfg = preset_config(base_id, nu=nu, drive=drive)
    if config is not None:
        unknown = set(config) - set(cfg) - {"nu", "drive"}
        if unknown:
            raise ConfigError("config", f"unknown fields {sorted(unknown)}")
        _merge(cfg, copy.deepcopy(config))
    cfg["benchmark"] = base_id
    if seed is not None:
        cfg["init_seed"] = int(seed)
    if out is not None:
        cfg["output_dir"] = out

    widths = _expect(cfg, "architecture", list)
    if len(widths) < 3 or not all(isinstance(w, int) and w > 0
                                  for w in widths):
        raise ConfigError("architecture", "need a list of >= 3 positive layer widths")
    _positive_int(cfg, "collocation.n")
    _expect(cfg, "collocation.seed", int)
    for phase in ("lf", "transfer"):
        _positive_int(cfg, f"{phase}.rmsprop_iterations", allow_zero=True)
        _positive_int(cfg, f"{phase}.lbfgs_iterations", allow_zero=True)
        lr = _expect(cfg, f"{phase}.learning_rate", (int, float))
        if lr <= 0:
            raise ConfigError(f"{phase}.learning_rate", "must be > 0")
    n_layers = len(widths) - 1
    l_t = _positive_int(cfg, "transfer.l_t")
    if l_t > n_layers:
        raise ConfigError("transfer.l_t", f"{l_t} exceeds the {n_layers} weight layers")
    lb_lt = cfg["transfer"].get("lbfgs_l_t")
    if lb_lt is not None:
        if not isinstance(lb_lt, int) or not 1 <= lb_lt <= l_t:
            raise ConfigError("transfer.lbfgs_l_t", f"must be an int in [1, {l_t}]")
    _expect(cfg, "init_seed", int)
    _expect(cfg, "dataset.seed", int)
    _expect(cfg, "dataset.path", str, allow_none=True)
    path = cfg["dataset"]["path"]
    if path is not None and not os.path.exists(path):
        raise ConfigError("dataset.path", f"file {path!r} not found")
    _positive_int(cfg, "reliability.n")
    _expect(cfg, "reliability.seed", int)
    _expect(cfg, "reliability.threshold", (int, float))
    _expect(cfg, "reliability.t_t", (int, float))
    thresholds = cfg["reliability"].get("thresholds")
    if thresholds is not None:
        if not isinstance(thresholds, list) or not thresholds or \
                not all(isinstance(v, (int, float)) for v in thresholds):
            raise ConfigError("reliability.thresholds", "need a list of numbers")
    _positive_int(cfg, "ensemble")
    for field in ("lf_checkpoint", "checkpoint"):
        p = cfg.get(field)
        if p is not None:
            if not isinstance(p, str):
                raise ConfigError(f"{field}", "expected a path string")
            if not os.path.exists(p):
                raise ConfigError(f"{field}", f"file {p!r} not found")

    bench = bm.make_benchmark(base_id, nu=nu, drive=drive)
    arch = net.mlp(widths)
    if arch.n_inputs != bench.problem.n_inputs:
        raise ConfigError("architecture", f"takes {arch.n_inputs} inputs, problem provides "
            f"{bench.problem.n_inputs}")
    if arch.n_outputs != bench.problem.n_outputs:
        raise ConfigError("architecture", f"emits {arch.n_outputs} outputs, problem needs "
            f"{bench.problem.n_outputs}")
    bench.arch = arch
    t_t = float(cfg["reliability"]["t_t"])
    lo, hi = bench.problem.t_domain
    if not lo <= t_t <= hi:
        raise ConfigError("reliability.t_t", f"{t_t} outside the domain [{lo}, {hi}]")
    return cfg, bench


def _budget(cfg, phase):
    d = cfg[phase]
    return pinn.PhaseBudget(d["rmsprop_iterations"], float(d["learning_rate"]),
                            d["lbfgs_iterations"])


def _transfer_config(cfg):
    return pinn.TransferConfig(cfg["transfer"]["l_t"], _budget(cfg, "transfer"),
                               cfg["transfer"].get("lbfgs_l_t"))


def _limit(cfg, bench, threshold=None):
    thr = float(cfg["reliability"]["threshold"] if threshold is None
                else threshold)
    return rel.LimitState(thr, float(cfg["reliability"]["t_t"]),
                          bench.limit.form, bench.limit.transform)


# -- output directory ------------------------------------------------------

class OutputDir:
    """Creates the directory and holds an exclusive lock while writing."""

    def __init__(self, path):
        if not path:
            raise ConfigError("output_dir", "set it in the config or pass --out")
        self.path = path
        self._lock = os.path.join(path, ".lock")

    def __enter__(self):
        os.makedirs(self.path, exist_ok=True)
        try:
            self._fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError("output_dir", f"{self.path!r} is locked by another run "
                f"(stale? remove {self._lock})") from None
        return self

    def __exit__(self, *exc):
        os.close(self._fd)
        os.unlink(self._lock)
        return False

    def file(self, name):
        return os.path.join(self.path, name)


def _write_manifest(out, command, cfg):
    manifest = {"version": __version__, "command": command, "config": cfg}
    with open(out.file("manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)


def _precheck(command, cfg):
    """Command-specific config requirements, checked before any file I/O."""
    if command == "gen-data" and cfg["dataset"]["path"] is not None:
        raise ConfigError("dataset.path", "already points at a dataset; gen-data would "
            "regenerate it")
    if command == "transfer":
        if cfg["lf_checkpoint"] is None:
            raise ConfigError("lf_checkpoint", "transfer needs a trained checkpoint")
        if cfg["dataset"]["path"] is None:
            raise ConfigError("dataset.path", "transfer needs an observation file")
    if command in ("reliability", "pf-curve") and cfg["checkpoint"] is None:
        raise ConfigError("checkpoint", "this command evaluates a trained "
                          "surrogate; point at one")
    if command == "pf-curve" and cfg["reliability"]["thresholds"] is None:
        raise ConfigError("reliability.thresholds", "pf-curve needs a sweep")


# -- comparison report -----------------------------------------------------

class ComparisonReport:
    """Method table: one row per estimator, beta error against the MCS row."""

    COLUMNS = ("method", "P_f", "beta", "N_h", "N_r", "eps_pct")

    def __init__(self):
        self.rows = []

    def add(self, method, result, n_h, n_r):
        self.rows.append({"method": method, "pf": result.pf,
                          "beta": result.beta, "n_h": int(n_h),
                          "n_r": int(n_r)})

    def _beta_ref(self):
        for row in self.rows:
            if row["method"] == "MCS":
                return row["beta"]
        return None

    def epsilons(self):
        """Percent error |beta_e - beta| / beta_e * 100 against the MCS row."""
        ref = self._beta_ref()
        out = []
        for row in self.rows:
            if row["method"] == "MCS":
                out.append(None)
            elif ref is None or not np.isfinite(ref) or ref == 0 \
                    or not np.isfinite(row["beta"]):
                out.append(float("inf"))
            else:
                out.append(abs(ref - row["beta"]) / abs(ref) * 100.0)
        return out

    @staticmethod
    def _num(v):
        if v is None:
            return ""
        if not np.isfinite(v):
            return "inf" if v > 0 else "-inf"
        return repr(float(v))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for row, eps in zip(self.rows, self.epsilons()):
                fh.write(",".join([row["method"], self._num(row["pf"]),
                                   self._num(row["beta"]), str(row["n_h"]),
                                   str(row["n_r"]), self._num(eps)]) + "\n")

    def format_table(self):
        lines = ["%-10s %10s %10s %8s %10s %8s"
                 % ("method", "P_f", "beta", "N_h", "N_r", "eps%")]
        for row, eps in zip(self.rows, self.epsilons()):
            def fmt(v, digits):
                if v is None:
                    return "--"
                if not np.isfinite(v):
                    return "inf" if v > 0 else "-inf"
                return f"%.{digits}f" % v
            lines.append("%-10s %10s %10s %8d %10d %8s"
                         % (row["method"], fmt(row["pf"], 4),
                            fmt(row["beta"], 4), row["n_h"], row["n_r"],
                            fmt(eps, 2)))
        return "\n".join(lines)


# -- commands --------------------------------------------------------------

def _load_dataset(cfg, bench):
    path = cfg["dataset"]["path"]
    if path is not None:
        data = pinn.HfDataset.load(path)
        if data.n_outputs != bench.problem.n_outputs:
            raise ConfigError("dataset.path", f"{data.n_outputs} outputs, problem needs "
                f"{bench.problem.n_outputs}")
        return data
    d = cfg["dataset"]
    times = None if d["times"] is None else np.asarray(d["times"], dtype=float)
    x_locs = None if d["x_locs"] is None \
        else np.asarray(d["x_locs"], dtype=float)
    return bm.build_hf_dataset(bench, n_samples=d["n_samples"], times=times,
                               x_locs=x_locs, seed=d["seed"])


def _train_lf(cfg, bench, log):
    colloc = pinn.sample_collocation(bench.problem, cfg["collocation"]["n"],
                                     cfg["collocation"]["seed"])
    params, rows = pinn.train_low_fidelity(bench.problem, bench.arch, colloc,
                                           _budget(cfg, "lf"),
                                           cfg["init_seed"])
    log.extend(rows)
    return params


def cmd_gen_data(cfg, bench, out):
    data = _load_dataset(cfg, bench)
    data.save(out.file("dataset.csv"))
    print(f"wrote {data.n_rows} observation rows to "
          f"{out.file('dataset.csv')}")
    return EXIT_OK


def cmd_train_lf(cfg, bench, out):
    log = []
    params = _train_lf(cfg, bench, log)
    params.save(out.file("checkpoint_lf.json"))
    pinn.write_train_log(log, out.file("train_log.csv"))
    print(f"low-fidelity training done; final loss {log[-1].loss:.6e}")
    return EXIT_OK


def cmd_transfer(cfg, bench, out):
    theta_l = net.ParamSet.load(cfg["lf_checkpoint"])
    data = _load_dataset(cfg, bench)
    params, log = pinn.transfer_update(theta_l, data, _transfer_config(cfg),
                                       bench.problem)
    params.save(out.file("checkpoint_mf.json"))
    pinn.write_train_log(log, out.file("train_log.csv"))
    print(f"transfer done; final loss {log[-1].loss:.6e}")
    return EXIT_OK


def _json_num(v):
    return v if np.isfinite(v) else ("inf" if v > 0 else "-inf")


def cmd_reliability(cfg, bench, out):
    params = net.ParamSet.load(cfg["checkpoint"])
    limit = _limit(cfg, bench)
    rcfg = cfg["reliability"]
    result = rel.mcs_probability_of_failure(
        bench.surrogate_response(params, limit.t_t), limit,
        bench.problem.dists, rcfg["n"], rcfg["seed"])
    report = ComparisonReport()
    report.add("MF-PIDNN", result, 0, rcfg["n"])
    report.write_csv(out.file("results.csv"))
    with open(out.file("reliability.json"), "w") as fh:
        json.dump({"pf": result.pf, "beta": _json_num(result.beta),
                   "n": result.n, "failures": result.failures,
                   "std_error": result.std_error,
                   "excluded": result.excluded,
                   "seed": rcfg["seed"]}, fh, indent=1)
    print(f"P_f = {result.pf:.6f}  beta = {result.beta:.4f}  "
          f"(n = {result.n}, SE = {result.std_error:.2e})")
    return EXIT_OK


def cmd_pf_curve(cfg, bench, out):
    params = net.ParamSet.load(cfg["checkpoint"])
    rcfg = cfg["reliability"]
    limit = _limit(cfg, bench)
    curve = rel.pf_curve(bench.surrogate_response(params, limit.t_t), limit,
                         [float(v) for v in rcfg["thresholds"]],
                         bench.problem.dists, rcfg["n"], rcfg["seed"])
    with open(out.file("pf_curve.csv"), "w", newline="") as fh:
        fh.write("threshold,P_f,beta,SE\n")
        for thr, res in curve:
            beta = "inf" if not np.isfinite(res.beta) and res.beta > 0 \
                else ("-inf" if not np.isfinite(res.beta) else repr(res.beta))
            fh.write(f"{thr!r},{res.pf!r},{beta},{res.std_error!r}\n")
    print(f"wrote {len(curve)} thresholds to {out.file('pf_curve.csv')}")
    return EXIT_OK


def _compare_once(cfg, bench, log, init_seed=None):
    """Train all method rows and evaluate them on shared MCS samples."""
    if init_seed is not None:
        cfg = copy.deepcopy(cfg)
        cfg["init_seed"] = init_seed
    rcfg = cfg["reliability"]
    limit = _limit(cfg, bench)
    n = rcfg["n"]
    seed = rcfg["seed"]
    data = _load_dataset(cfg, bench)
    if cfg["lf_checkpoint"] is not None:
        theta_l = net.ParamSet.load(cfg["lf_checkpoint"])
    else:
        theta_l = _train_lf(cfg, bench, log)
    theta_mf, rows = pinn.transfer_update(theta_l, data, _transfer_config(cfg),
                                          bench.problem)
    log.extend(rows)
    theta_hf, rows = pinn.train_data_only(bench.problem, bench.arch, data,
                                          _transfer_config(cfg).budget,
                                          cfg["init_seed"])
    log.extend(rows)

    report = ComparisonReport()
    report.add("MCS", rel.mcs_probability_of_failure(
        bench.oracle_response(limit.t_t), limit, bench.problem.dists, n,
        seed), n, n)
    report.add("LF-PIDNN", rel.mcs_probability_of_failure(
        bench.surrogate_response(theta_l, limit.t_t), limit,
        bench.problem.dists, n, seed), 0, 0)
    report.add("HF-DNN", rel.mcs_probability_of_failure(
        bench.surrogate_response(theta_hf, limit.t_t), limit,
        bench.problem.dists, n, seed), data.n_samples, data.n_rows)
    report.add("MF-PIDNN", rel.mcs_probability_of_failure(
        bench.surrogate_response(theta_mf, limit.t_t), limit,
        bench.problem.dists, n, seed), data.n_samples, data.n_rows)
    return report, {"lf": theta_l, "mf": theta_mf, "hf": theta_hf}


def cmd_compare(cfg, bench, out):
    log = []
    report, checkpoints = _compare_once(cfg, bench, log)
    for tag, params in checkpoints.items():
        params.save(out.file(f"checkpoint_{tag}.json"))
    pinn.write_train_log(log, out.file("train_log.csv"))
    report.write_csv(out.file("results.csv"))
    print(report.format_table())
    return EXIT_OK


def cmd_ensemble(cfg, bench, out):
    k = cfg["ensemble"]
    log = []
    reports = []
    for member in range(k):
        reports.append(_compare_once(cfg, bench, log,
                                     init_seed=cfg["init_seed"] + member)[0])
    merged = ComparisonReport()
    per_member = {}
    for idx, method in enumerate(METHOD_ORDER):
        pfs = [r.rows[idx]["pf"] for r in reports]
        per_member[method] = pfs
        mean_pf = float(np.mean(pfs))
        base = reports[0].rows[idx]
        merged.rows.append({"method": method, "pf": mean_pf,
                            "beta": rel.beta_from_pf(mean_pf),
                            "n_h": base["n_h"], "n_r": base["n_r"]})
    merged.write_csv(out.file("results.csv"))
    with open(out.file("ensemble.json"), "w") as fh:
        json.dump({"members": k, "pf": per_member}, fh, indent=1)
    pinn.write_train_log(log, out.file("train_log.csv"))
    print(f"ensemble of {k} runs (mean P_f rows):")
    print(merged.format_table())
    return EXIT_OK


_HANDLERS = {
    "gen-data": cmd_gen_data,
    "train-lf": cmd_train_lf,
    "transfer": cmd_transfer,
    "reliability": cmd_reliability,
    "compare": cmd_compare,
    "pf-curve": cmd_pf_curve,
    "ensemble": cmd_ensemble,
}


def _parser():
    p = argparse.ArgumentParser(
        prog="mfpinn",
        description="Train physics-informed surrogates from approximate "
                    "governing equations, update them with sparse "
                    "high-fidelity data, and estimate failure probabilities.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--preset", choices=bm.BENCHMARK_IDS,
                   help="benchmark defaults to start from")
    p.add_argument("--seed", type=int, help="override init_seed")
    p.add_argument("--out", help="output directory (locked while running)")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        config = load_config(args.config) if args.config else None
        if config is None and args.preset is None:
            raise ConfigError("config", "pass --config and/or --preset")
        cfg, bench = resolve_config(args.preset, config, args.seed, args.out)
        _precheck(args.command, cfg)
        with OutputDir(cfg["output_dir"]) as out:
            _write_manifest(out, args.command, cfg)
            return _HANDLERS[args.command](cfg, bench, out)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, EvaluationError, DomainError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

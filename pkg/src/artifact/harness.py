"""Configuration-driven experiment runner.

A config is a TOML document. Top-level keys::

    seed, repetitions, record_every, out, threads, setting,
    trajectory_length, grid_points

and the tables ``[instance]``, ``[[algorithms]]``, ``[variance]`` and
``[conditions]``. See ``configs/`` for complete examples.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import theory
from .algorithms import AlgoParams, run_algorithm
from .diagnostics import UpdateSnapshot, aggregate_envelope, mc_update_variance, nearest_rank
from .env import (IIDSampler, Policy, TrajectorySampler, estimate_mixing, generate_garnet,
                  load_model, make_cycle2, make_features_gaussian, make_frozen_lake, make_policy,
                  model_to_dict, sample_trajectory, save_model)
from .errors import ArtifactError, IoError, ParseError, ValidationError
from .stats import Problem, compute_radii, exact_moments, problem_constants

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SETTINGS = ("markov", "iid")
ALGO_NAMES = ("TD", "TDC", "VRTD", "VRTDC")
INSTANCE_KINDS = ("garnet", "frozen_lake", "cycle2", "file")

TOP_KEYS = {
    "seed": (int, 0),
    "repetitions": (int, 1),
    "record_every": (int, 10),
    "out": (str, "out"),
    "threads": (int, 1),
    "setting": (str, "markov"),
    "trajectory_length": (int, None),
    "grid_points": (int, 101),
    "instance": (dict, None),
    "algorithms": (list, None),
    "variance": (dict, None),
    "conditions": (dict, None),
}
INSTANCE_KEYS = {
    "kind": (str, None),
    "n_states": (int, 20),
    "n_actions": (int, 4),
    "branching": (int, 3),
    "d": (int, 5),
    "gamma": (float, None),
    "seed": (int, None),
    "path": (str, None),
    "radius_safety": (float, 1.0),
}
ALGO_KEYS = {
    "name": (str, None),
    "alpha": (float, None),
    "beta": (float, 0.0),
    "M": (int, 1),
    "epochs": (int, 1),
    "steps": (int, None),
}
VARIANCE_KEYS = {
    "n_mc": (int, 500),
    "algorithms": (list, ["TDC", "VRTDC"]),
}
CONDITION_KEYS = {
    "setting": (str, "both"),
    "epsilon": (object, "search"),
    "alpha": (float, None),
    "beta": (float, None),
    "M": (int, None),
    "coefficients": (object, "unit"),
    "kappa": (float, None),
    "mixing_rho": (float, None),
    "t_max": (int, 50),
}
DEFAULT_GAMMA = {"garnet": 0.95, "frozen_lake": 0.95, "cycle2": 0.5, "file": None}


@dataclass
class AlgoSpec:
    name: str
    alpha: float
    beta: float = 0.0
    M: int = 1
    epochs: int = 1
    steps: Optional[int] = None

    def algo_id(self, setting):
        if self.name == "VRTDC":
            return "VRTDC_IID" if setting == "iid" else "VRTDC_MARKOV"
        return self.name

    def n_transitions(self):
        """Trajectory length consumed by one run."""
        if self.name in ("TD", "TDC"):
            return self.steps if self.steps is not None else self.epochs * self.M
        return self.epochs * self.M


@dataclass
class ExperimentConfig:
    instance: dict
    algorithms: list
    seed: int = 0
    repetitions: int = 1
    record_every: int = 10
    out: str = "out"
    threads: int = 1
    setting: str = "markov"
    trajectory_length: Optional[int] = None
    grid_points: int = 101
    variance: dict = field(default_factory=lambda: dict(n_mc=500, algorithms=["TDC", "VRTDC"]))
    conditions: dict = field(default_factory=dict)
    source: Optional[str] = None


def _check_table(table, schema, where, errors, required=()):
    out = {}
    for k in table:
        if k not in schema:
            errors.append(f"{where}: unknown key {k!r}")
    for k, (typ, default) in schema.items():
        if k not in table:
            if k in required:
                errors.append(f"{where}: missing required key {k!r}")
            out[k] = default
            continue
        v = table[k]
        if typ is float and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if typ is not object and (not isinstance(v, typ) or isinstance(v, bool) and typ is not bool):
            errors.append(f"{where}.{k}: expected {typ.__name__}, got {type(v).__name__}")
        out[k] = v
    return out


def validate_config(doc, base_dir=".") -> ExperimentConfig:
    """Turn a parsed document into an :class:`ExperimentConfig`.

    Raises
    ------
    ValidationError
        Listing every violation found.
    """
    errors = []
    top = _check_table(doc, TOP_KEYS, "config", errors, required=("instance",))
    inst = _check_table(top["instance"] or {}, INSTANCE_KEYS, "instance", errors, required=("kind",))
    if inst["kind"] is not None and inst["kind"] not in INSTANCE_KINDS:
        errors.append(f"instance.kind: must be one of {INSTANCE_KINDS}")
    if inst["kind"] == "file":
        if not inst["path"]:
            errors.append("instance.path: required for kind 'file'")
        else:
            inst["path"] = os.path.join(base_dir, inst["path"])
            if not os.path.isfile(inst["path"]):
                errors.append(f"instance.path: file {inst['path']!r} does not exist")
    if inst["gamma"] is None:
        inst["gamma"] = DEFAULT_GAMMA.get(inst["kind"])
    elif not 0 < inst["gamma"] < 1:
        errors.append("instance.gamma: must lie in (0, 1)")
    if inst["seed"] is None:
        inst["seed"] = top["seed"] if isinstance(top["seed"], int) else 0
    if isinstance(inst["radius_safety"], float) and inst["radius_safety"] < 1:
        errors.append("instance.radius_safety: must be at least 1")
    algos = []
    for i, a in enumerate(top["algorithms"] or []):
        if not isinstance(a, dict):
            errors.append(f"algorithms[{i}]: expected a table")
            continue
        spec = _check_table(a, ALGO_KEYS, f"algorithms[{i}]", errors, required=("name", "alpha"))
        if spec["name"] not in ALGO_NAMES:
            errors.append(f"algorithms[{i}].name: must be one of {ALGO_NAMES}")
        for k in ("M", "epochs"):
            if isinstance(spec[k], int) and spec[k] < 1:
                errors.append(f"algorithms[{i}].{k}: must be at least 1")
        for k in ("alpha", "beta"):
            if isinstance(spec[k], float) and spec[k] < 0:
                errors.append(f"algorithms[{i}].{k}: must be nonnegative")
        algos.append(AlgoSpec(**spec))
    if isinstance(top["repetitions"], int) and top["repetitions"] < 1:
        errors.append("repetitions: must be at least 1")
    if isinstance(top["threads"], int) and top["threads"] < 1:
        errors.append("threads: must be at least 1")
    if isinstance(top["record_every"], int) and top["record_every"] < 1:
        errors.append("record_every: must be at least 1")
    if isinstance(top["grid_points"], int) and top["grid_points"] < 2:
        errors.append("grid_points: must be at least 2")
    if top["setting"] not in SETTINGS:
        errors.append(f"setting: must be one of {SETTINGS}")
    var = _check_table(top["variance"] or {}, VARIANCE_KEYS, "variance", errors)
    if isinstance(var["n_mc"], int) and var["n_mc"] < 2:
        errors.append("variance.n_mc: must be at least 2")
    cond = _check_table(top["conditions"] or {}, CONDITION_KEYS, "conditions", errors)
    if cond["setting"] not in ("iid", "markov", "both"):
        errors.append("conditions.setting: must be 'iid', 'markov' or 'both'")
    eps = cond["epsilon"]
    if not (eps == "search" or isinstance(eps, (int, float)) and not isinstance(eps, bool)):
        errors.append("conditions.epsilon: must be a number or 'search'")
    co = cond["coefficients"]
    if isinstance(co, dict):
        bad = set(co) - {"c_alpha", "c_beta", "c_M", "c_m"}
        if bad:
            errors.append(f"conditions.coefficients: unknown keys {sorted(bad)}")
    elif co not in ("unit", "calibrated"):
        errors.append("conditions.coefficients: 'unit', 'calibrated' or a table")
    if errors:
        raise ValidationError(errors)
    top.pop("instance"), top.pop("algorithms"), top.pop("variance"), top.pop("conditions")
    return ExperimentConfig(instance=inst, algorithms=algos, variance=var, conditions=cond, **top)


def parse_config(path) -> ExperimentConfig:
    """Read and validate a TOML config file.

    Raises
    ------
    ParseError
        On malformed TOML; the message carries the line and column.
    ValidationError
        On unknown keys, wrong types or out-of-range values.
    """
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    cfg = validate_config(doc, base_dir=os.path.dirname(os.path.abspath(path)))
    cfg.source = str(path)
    return cfg


# ---------------------------------------------------------------- instances


def build_problem(inst: dict) -> Problem:
    kind, seed, gamma = inst["kind"], inst["seed"], inst["gamma"]
    if kind == "garnet":
        S, A = inst["n_states"], inst["n_actions"]
        model, feats = generate_garnet(S, A, inst["branching"], inst["d"], seed, gamma=gamma)
        return Problem(model, feats, make_policy("random", S, A, [seed, 1]), make_policy("uniform", S, A))
    if kind == "frozen_lake":
        model = make_frozen_lake(gamma=gamma)
        feats = make_features_gaussian(model.n_states, inst["d"], [seed, 2])
        S, A = model.n_states, model.n_actions
        return Problem(model, feats, make_policy("random", S, A, [seed, 1]), make_policy("uniform", S, A))
    if kind == "cycle2":
        model, feats = make_cycle2(gamma=gamma)
        u = make_policy("uniform", 2, 1)
        return Problem(model, feats, u, u)
    model, feats, doc = load_model(inst["path"])
    if feats is None:
        raise ValidationError([f"instance file {inst['path']!r} has no features"])
    if gamma is not None and gamma != model.gamma:
        model = replace(model, gamma=gamma)
    S, A = model.n_states, model.n_actions
    target = Policy(np.array(doc["target"])) if doc.get("target") else make_policy("random", S, A, [seed, 1])
    behavior = Policy(np.array(doc["behavior"])) if doc.get("behavior") else make_policy("uniform", S, A)
    return Problem(model, feats, target, behavior)


def problem_document(problem: Problem):
    return model_to_dict(problem.model, problem.features,
                         {"target": problem.target.probs.tolist(),
                          "behavior": problem.behavior.probs.tolist()})


def instance_hash(problem: Problem) -> str:
    blob = json.dumps(problem_document(problem), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------- io helpers


def _fmt(v):
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_csv(path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _prepare_out(out):
    try:
        os.makedirs(out, exist_ok=True)
        probe = os.path.join(out, ".write-test")
        with open(probe, "w"):
            pass
        os.remove(probe)
    except OSError as exc:
        raise IoError(f"output directory {out!r} is not writable: {exc}") from exc


def _write_json(path, doc):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------- repetitions


@dataclass
class _Context:
    cfg: ExperimentConfig
    problem: Problem
    moments: object
    radii: object


def _context(cfg: ExperimentConfig) -> _Context:
    problem = build_problem(cfg.instance)
    moments = exact_moments(problem)
    return _Context(cfg, problem, moments, compute_radii(moments, cfg.instance["radius_safety"]))


def rep_seeds(base, rep):
    """Independent seed material for every stream of one repetition."""
    return {"trajectory": [base, rep, 0], "algo": lambda i: [base, rep, 1, i],
            "sampler": lambda i: [base, rep, 2, i], "mc": lambda i: [base, rep, 3, i]}


def _params(ctx: _Context, spec: AlgoSpec, seed):
    return AlgoParams(spec.algo_id(ctx.cfg.setting), spec.alpha, spec.beta, spec.M, spec.epochs,
                      ctx.radii, seed=seed, record_every=ctx.cfg.record_every, steps=spec.steps)


def _trajectory(ctx: _Context, specs, seed):
    need = max([s.n_transitions() for s in specs] + [ctx.cfg.trajectory_length or 0])
    return sample_trajectory(ctx.problem.model, ctx.problem.behavior, need, seed, mu=ctx.problem.mu)


def _run_rep(ctx: _Context, rep: int):
    cfg = ctx.cfg
    seeds = rep_seeds(cfg.seed, rep)
    traj = _trajectory(ctx, cfg.algorithms, seeds["trajectory"]) if cfg.setting == "markov" else None
    out = []
    for i, spec in enumerate(cfg.algorithms):
        params = _params(ctx, spec, seeds["algo"](i))
        try:
            sampler = None
            if traj is None:
                sampler = IIDSampler(ctx.problem.model, ctx.problem.behavior, ctx.problem.mu,
                                     seeds["sampler"](i))
            trace = run_algorithm(params, ctx.problem, ctx.moments, trajectory=traj, sampler=sampler)
            out.append((spec.algo_id(cfg.setting), trace, None))
        except ArtifactError as exc:
            out.append((spec.algo_id(cfg.setting), None, f"{type(exc).__name__}: {exc}"))
    return rep, out


def _run_variance_rep(ctx: _Context, rep: int):
    cfg = ctx.cfg
    seeds = rep_seeds(cfg.seed, rep)
    specs = [s for s in cfg.algorithms if s.name in cfg.variance["algorithms"]]
    traj = _trajectory(ctx, specs, seeds["trajectory"]) if cfg.setting == "markov" else None
    out = []
    for i, spec in enumerate(specs):
        if cfg.setting == "markov":
            mc = TrajectorySampler(ctx.problem.model, ctx.problem.behavior, seeds["mc"](i), ctx.problem.mu)
        else:
            mc = IIDSampler(ctx.problem.model, ctx.problem.behavior, ctx.problem.mu, seeds["mc"](i))
        rows = []

        def probe(count, snap: UpdateSnapshot):
            v = mc_update_variance(snap, ctx.problem, mc, cfg.variance["n_mc"])
            rows.append((count, v.var_theta, v.var_w))

        sampler = None
        if traj is None:
            sampler = IIDSampler(ctx.problem.model, ctx.problem.behavior, ctx.problem.mu, seeds["sampler"](i))
        params = _params(ctx, spec, seeds["algo"](i))
        run_algorithm(params, ctx.problem, ctx.moments, trajectory=traj, sampler=sampler, probe=probe)
        out.append((spec.algo_id(cfg.setting), rows))
    return rep, out


def _map_reps(fn, cfg: ExperimentConfig, threads=None):
    threads = threads or cfg.threads
    reps = range(cfg.repetitions)
    if threads > 1 and cfg.repetitions > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_worker, [(fn.__name__, cfg, r) for r in reps]))
    else:
        ctx = _context(cfg)
        results = [fn(ctx, r) for r in reps]
    return sorted(results, key=lambda x: x[0])


_CTX_CACHE = {}


def _worker(args):
    name, cfg, rep = args
    key = json.dumps(cfg.instance, sort_keys=True)
    if _CTX_CACHE.get("key") != key:
        _CTX_CACHE.clear()
        _CTX_CACHE.update(key=key, ctx=_context(cfg))
    return {"_run_rep": _run_rep, "_run_variance_rep": _run_variance_rep}[name](_CTX_CACHE["ctx"], rep)


def _grid(traces, n):
    top = max(t.counts[-1] for t in traces)
    return np.unique(np.round(np.linspace(0, top, n)).astype(np.int64))


def _apply_overrides(cfg, out=None, threads=None, seed=None):
    cfg = replace(cfg)
    if out is not None:
        cfg.out = out
    if threads is not None:
        cfg.threads = threads
    if seed is not None:
        cfg.seed = seed
    return cfg


# ---------------------------------------------------------------- commands


def cmd_run(cfg: ExperimentConfig, *, out=None, threads=None, seed=None):
    """Run every algorithm on every repetition and write traces and envelopes.

    Returns the manifest dictionary.
    """
    cfg = _apply_overrides(cfg, out, threads, seed)
    if not cfg.algorithms:
        raise ValidationError(["algorithms: at least one entry is required for 'run'"])
    _prepare_out(cfg.out)
    tdir = os.path.join(cfg.out, "traces")
    os.makedirs(tdir, exist_ok=True)
    t0 = time.time()
    ctx = _context(cfg)
    results = _map_reps(_run_rep, cfg)
    by_algo = {}
    failures = []
    for rep, items in results:
        for algo, trace, err in items:
            if err is not None:
                failures.append({"repetition": rep, "algorithm": algo, "error": err})
                continue
            by_algo.setdefault(algo, []).append((rep, trace))
            write_csv(os.path.join(tdir, f"{algo}_rep{rep:03d}.csv"),
                      ["pg_count", "conv_error", "tracking_error_sq"], zip(*trace.as_arrays()))
    asym_rows = []
    for algo, items in by_algo.items():
        traces = [t for _, t in items]
        grid = _grid(traces, cfg.grid_points)
        rows = []
        for metric in ("conv_error", "tracking_error_sq"):
            env = aggregate_envelope(traces, grid, metric)
            rows += [(g, metric, a, b, c) for g, a, b, c in zip(env.grid, env.p5, env.p50, env.p95)]
        write_csv(os.path.join(cfg.out, f"envelope_{algo}.csv"),
                  ["pg_count", "metric", "p5", "p50", "p95"], rows)
        for rep, t in items:
            conv = np.asarray(t.conv_error)
            tail = conv[-max(1, len(conv) // 10):]
            asym_rows.append((algo, rep, float(np.mean(tail))))
    write_csv(os.path.join(cfg.out, "asymptotic_error.csv"), ["algorithm", "repetition", "mean_conv_error_last10pct"],
              asym_rows)
    manifest = {
        "command": "run",
        "config": cfg.source,
        "instance": dict(cfg.instance),
        "instance_hash": instance_hash(ctx.problem),
        "theta_star": ctx.moments.theta_star.tolist(),
        "radii": {"R_theta": ctx.radii.R_theta, "R_w": ctx.radii.R_w},
        "setting": cfg.setting,
        "base_seed": cfg.seed,
        "repetition_seeds": {str(r): [cfg.seed, r] for r in range(cfg.repetitions)},
        "algorithms": [vars(a) for a in cfg.algorithms],
        "record_every": cfg.record_every,
        "pseudo_gradient_accounting": (
            "TD 1 and TDC 2 per update; VRTD M per batch plus 2 per inner step; "
            "VRTDC 2M per batch plus 4 per inner step"),
        "failures": failures,
        "threads": cfg.threads,
        "wall_time_s": time.time() - t0,
    }
    save_model(os.path.join(cfg.out, "instance.json"), ctx.problem.model, ctx.problem.features,
               {"target": ctx.problem.target.probs.tolist(), "behavior": ctx.problem.behavior.probs.tolist()})
    _write_json(os.path.join(cfg.out, "manifest.json"), manifest)
    return manifest


def cmd_variance(cfg: ExperimentConfig, *, out=None, threads=None, seed=None):
    """Monte-Carlo variance of the update directions at every recorded step."""
    cfg = _apply_overrides(cfg, out, threads, seed)
    _prepare_out(cfg.out)
    vdir = os.path.join(cfg.out, "variance")
    os.makedirs(vdir, exist_ok=True)
    results = _map_reps(_run_variance_rep, cfg)
    header = ["pg_count", "var_theta_update", "var_w_update"]
    per_algo = {}
    for rep, items in results:
        for algo, rows in items:
            write_csv(os.path.join(vdir, f"{algo}_rep{rep:03d}.csv"), header, rows)
            per_algo.setdefault(algo, []).append(np.array(rows, dtype=float))
    for algo, arrs in per_algo.items():
        n = min(len(a) for a in arrs)
        stack = np.stack([a[:n] for a in arrs])
        med = [nearest_median(stack[:, :, k]) for k in (1, 2)]
        write_csv(os.path.join(cfg.out, f"variance_{algo}.csv"), header,
                  zip(stack[0, :, 0].astype(np.int64), med[0], med[1]))
    return {"algorithms": sorted(per_algo)}


def nearest_median(X):
    return nearest_rank(X, 50, axis=0)


def _coefficients(spec, setting, consts):
    if spec == "unit":
        return theory.ScheduleCoefficients()
    if spec == "calibrated":
        return theory.calibrate_coefficients(setting, consts)
    return theory.ScheduleCoefficients(**{k: float(v) for k, v in spec.items()})


def conditions_report(cfg: ExperimentConfig):
    """Constants and condition reports for the configured instance."""
    c = cfg.conditions
    problem = build_problem(cfg.instance)
    moments = exact_moments(problem)
    radii = compute_radii(moments, cfg.instance["radius_safety"])
    sp = problem_constants(problem, moments)
    vr = theory.vr_bounds(radii.R_theta, sp.r_max, sp.rho_max, problem.gamma, sp.min_abs_eig_C)
    doc = {
        "instance": dict(cfg.instance),
        "instance_hash": instance_hash(problem),
        "spectral": vars(sp),
        "radii": vars(radii),
        "G_VR": vr.G_VR,
        "H_VR": vr.H_VR,
        "settings": {},
    }
    settings = ["iid", "markov"] if c["setting"] == "both" else [c["setting"]]
    for name in settings:
        st = theory.IID if name == "iid" else theory.MARKOV
        if st == theory.IID:
            consts = theory.constants_iid(sp, radii, problem.gamma)
            extra = {}
        else:
            mix = estimate_mixing(problem.chain, problem.mu, c["t_max"])
            kappa = mix.kappa if c["kappa"] is None else c["kappa"]
            mrho = mix.rho if c["mixing_rho"] is None else c["mixing_rho"]
            consts = theory.constants_markov(sp, radii, problem.gamma, _Mix(kappa, mrho))
            extra = {"mixing": {"kappa": kappa, "rho": mrho, "fitted": mix.fitted}}
        section = {"constants": {k: v for k, v in vars(consts).items() if isinstance(v, float)}, **extra}
        if c["alpha"] is not None:
            if c["beta"] is None or c["M"] is None:
                raise ValidationError(["conditions: explicit mode needs alpha, beta and M"])
            rep = theory.check_conditions(st, consts, c["alpha"], c["beta"], c["M"])
            section["mode"] = "explicit"
        else:
            coeffs = _coefficients(c["coefficients"], st, consts)
            section["coefficients"] = vars(coeffs)
            if c["epsilon"] == "search":
                eps, sched, rep = theory.epsilon_search(st, consts, coeffs)
                section["mode"] = "search"
            else:
                eps = float(c["epsilon"])
                sched = theory.schedule_from_epsilon(st, eps, coeffs)
                rep = theory.check_conditions(st, consts, *sched[:3])
                section["mode"] = "epsilon"
            section["epsilon"] = eps
            section["schedule"] = dict(zip(("alpha", "beta", "M", "m"), sched))
        section["report"] = rep.to_dict()
        section["max_DEF"] = max(rep.D, rep.E, rep.F)
        doc["settings"][name] = section
    return doc


@dataclass(frozen=True)
class _Mix:
    kappa: float
    rho: float


def cmd_conditions(cfg: ExperimentConfig, *, out=None, threads=None, seed=None):
    cfg = _apply_overrides(cfg, out, threads, seed)
    _prepare_out(cfg.out)
    doc = conditions_report(cfg)
    _write_json(os.path.join(cfg.out, "conditions.json"), doc)
    rows = []
    for name, sec in doc["settings"].items():
        for cond in sec["report"]["conditions"]:
            rows.append((name, cond["id"], cond["lhs"], cond["relation"], cond["rhs"], int(cond["passed"])))
    write_csv(os.path.join(cfg.out, "conditions.csv"), ["setting", "id", "lhs", "relation", "rhs", "passed"], rows)
    return doc


def cmd_gen(cfg: ExperimentConfig, *, out=None, threads=None, seed=None):
    """Write the configured instance, with features and policies, to ``out/instance.json``."""
    cfg = _apply_overrides(cfg, out, threads, seed)
    _prepare_out(cfg.out)
    problem = build_problem(cfg.instance)
    path = os.path.join(cfg.out, "instance.json")
    save_model(path, problem.model, problem.features,
               {"target": problem.target.probs.tolist(), "behavior": problem.behavior.probs.tolist()})
    return path

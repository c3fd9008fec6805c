"""Experiment harness: config loading, sweeps, bound verification,
diagnostics and Markdown reporting. The CLI in :mod:`.cli` is a thin layer
over these functions."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import analysis as an
from . import linalg_core as lc
from .attacks import OptimizerParams, PerturbBudget, run_attack
from .datagen import Rng, make_task, read_bundle, write_bundle
from .errors import InvalidConfig, PoisonLabError
from .solvers import SolverConfig, solve

log = logging.getLogger("poisonlab")

METRICS_HEADER = "epsilon,attack,solver,abs_err,rsd,sol_err_abs,sol_err_rel,kappa,n_end,converged"
METRIC_FIELDS = ("abs_err", "rsd", "sol_err_abs", "sol_err_rel", "kappa", "n_end")

ITERATIVE_DEFAULT = [{"kind": k} for k in ("Jacobi", "GaussSeidel", "SOR", "CG", "GMRES", "GD")]


@dataclass
class ExperimentConfig:
    generator: str = "sdd"
    task_params: dict = field(default_factory=dict)
    seed: int = 0
    repeats: int = 20
    epsilons: list = field(default_factory=lambda: [0.0, 0.4, 0.8, 1.2, 1.6, 2.0])
    attacks: list = field(default_factory=lambda: ["LP", "UP"])
    solvers: list = field(default_factory=lambda: [dict(s) for s in ITERATIVE_DEFAULT])
    norm: str = "spectral"
    symmetric: bool = False
    optimizer: dict = field(default_factory=dict)
    out: str = "runs/out"
    bundle: str | None = None
    xi: float = 0.05
    checks: list = field(default_factory=lambda: ["forward"])
    lr_multipliers: list = field(default_factory=lambda: [0.1, 0.5, 1.0, 1.5, 1.9])
    ilu_pattern: str = "own"  # own | clean
    svg: bool = False

    def __post_init__(self):
        if self.repeats < 1:
            raise InvalidConfig("repeats must be at least 1")
        if any(e < 0 for e in self.epsilons):
            raise InvalidConfig("epsilons must be non-negative")
        if self.ilu_pattern not in ("own", "clean"):
            raise InvalidConfig("ilu_pattern must be 'own' or 'clean'")
        for a in self.attacks:
            if a not in ("LP", "UP"):
                raise InvalidConfig(f"unknown attack {a!r}")
        self.solver_configs()
        self.optimizer_params()
        PerturbBudget(1.0, self.norm, self.symmetric)

    def solver_configs(self) -> list:
        return [SolverConfig.from_dict(s) for s in self.solvers]

    def optimizer_params(self) -> OptimizerParams:
        try:
            return OptimizerParams(**self.optimizer)
        except TypeError as exc:
            raise InvalidConfig(str(exc)) from None

    def budget(self, eps: float) -> PerturbBudget:
        return PerturbBudget(eps, self.norm, self.symmetric)

    def seeds(self) -> list:
        return [self.seed + i for i in range(self.repeats)]


COMMAND_DEFAULTS = {
    "synth": {"repeats": 1},
    "sweep": {},
    "diagnose": {},
    "verify-bounds": {
        "generator": "dense",
        "task_params": {"n_train": 3, "n_test": 9, "d": 3},
        "repeats": 100,
        "epsilons": [0.01, 0.011, 0.012, 0.013],
        "solvers": [{"kind": "NES"}],
    },
    "report": {},
}


def load_config(command: str, path=None, overrides: dict | None = None) -> ExperimentConfig:
    data = dict(COMMAND_DEFAULTS.get(command, {}))
    if path is not None:
        try:
            data.update(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from None
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise InvalidConfig(f"unknown config keys: {unknown}")
    try:
        return ExperimentConfig(**data)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from None


def workers() -> int:
    env = os.environ.get("POISONLAB_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            raise InvalidConfig("POISONLAB_THREADS must be an integer") from None
    return cap


def _map(fn, items, cfg):
    n = min(workers(), len(items))
    if n <= 1:
        return [fn(cfg, it) for it in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, [cfg] * len(items), items))


def task_for(cfg: ExperimentConfig, seed: int):
    if cfg.bundle:
        return read_bundle(cfg.bundle)
    return make_task(cfg.generator, seed, **cfg.task_params)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


# ---------------------------------------------------------------- synth


def cmd_synth(cfg: ExperimentConfig) -> list:
    out = Path(cfg.out)
    paths = []
    for seed in cfg.seeds():
        task = make_task(cfg.generator, seed, **cfg.task_params)
        target = out if cfg.repeats == 1 else out / f"seed_{seed}"
        paths.append(write_bundle(task, target))
    return paths


# ---------------------------------------------------------------- sweep


def metrics_row(eps, attack, solver, m: an.EvalMetrics) -> str:
    vals = [_fmt(eps), attack, solver] + [_fmt(getattr(m, f)) for f in METRIC_FIELDS] + [_fmt(m.converged)]
    return ",".join(vals)


def attack_delta(cfg: ExperimentConfig, task, attack: str, eps: float):
    if eps == 0:
        return np.zeros_like(task.x_train), None
    out = run_attack(attack, task, cfg.budget(eps), cfg.optimizer_params())
    return out.delta, out


def _sweep_seed(cfg: ExperimentConfig, seed: int) -> dict:
    root = Path(cfg.out) / "seeds" / f"seed_{seed}"
    task = task_for(cfg, seed)
    write_bundle(task, root / "bundle")
    rows, records, failures = [], [], []
    for eps in cfg.epsilons:
        for attack in cfg.attacks:
            try:
                delta, outcome = attack_delta(cfg, task, attack, eps)
            except PoisonLabError as exc:
                failures.append({"seed": seed, "epsilon": eps, "attack": attack, "error": repr(exc)})
                continue
            tag = f"{attack}_eps{eps:g}"
            if outcome is not None:
                outcome.save(root / "attacks" / tag)
            else:
                adir = root / "attacks" / tag
                adir.mkdir(parents=True, exist_ok=True)
                lc.mat_to_csv(delta, adir / "delta.csv")
            for scfg in cfg.solver_configs():
                m = an.evaluate(task, delta, scfg)
                rows.append(metrics_row(eps, attack, scfg.kind, m))
                records.append({"seed": seed, "epsilon": eps, "attack": attack, "solver": scfg.kind,
                                **m.as_dict()})
    (root / "metrics.csv").write_text(METRICS_HEADER + "\n" + "\n".join(rows) + "\n")
    return {"seed": seed, "records": records, "failures": failures}


def summarize(records: list) -> list:
    """Median of every metric per (epsilon, attack, solver) cell."""
    cells: dict = {}
    for r in records:
        cells.setdefault((r["epsilon"], r["attack"], r["solver"]), []).append(r)
    out = []
    for key in sorted(cells):
        rs = cells[key]
        cell = {"epsilon": key[0], "attack": key[1], "solver": key[2], "n": len(rs)}
        for f in METRIC_FIELDS:
            cell[f] = float(np.median([r[f] for r in rs]))
        cell["converged_frac"] = float(np.mean([r["converged"] for r in rs]))
        out.append(cell)
    return out


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_json_safe(obj), indent=2, sort_keys=True) + "\n")


def cmd_sweep(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", asdict(cfg))
    results = sorted(_map(_sweep_seed, cfg.seeds(), cfg), key=lambda r: r["seed"])
    records = [r for res in results for r in res["records"]]
    failures = [f for res in results for f in res["failures"]]
    summary = {"cells": summarize(records), "failures": failures, "seeds": cfg.seeds()}
    write_json(out / "summary.json", summary)
    log.info("sweep wrote %d rows to %s", len(records), out)
    return summary


def read_metrics(path) -> list:
    text = Path(path).read_text()
    if not text.startswith(METRICS_HEADER + "\n"):
        raise InvalidConfig(f"{path} does not carry the metrics header")
    rows = []
    for r in csv.DictReader(io.StringIO(text)):
        rec = {"epsilon": float(r["epsilon"]), "attack": r["attack"], "solver": r["solver"]}
        for f in METRIC_FIELDS:
            rec[f] = float(r[f])
        rec["n_end"] = int(rec["n_end"])
        rec["converged"] = r["converged"] == "true"
        rows.append(rec)
    return rows


# ---------------------------------------------------------------- verify-bounds


def _forward_seed(cfg: ExperimentConfig, seed: int) -> list:
    task = task_for(cfg, seed)
    out = []
    for eps in cfg.epsilons:
        for attack in cfg.attacks:
            camp = an.verify_forward([task], eps, cfg.xi, attack, cfg.optimizer_params())
            out.append((eps, attack, camp.runs, camp.excluded))
    return out


def forward_campaign(cfg: ExperimentConfig) -> dict:
    per_seed = _map(_forward_seed, cfg.seeds(), cfg)
    cells: dict = {}
    for seed_res in per_seed:
        for eps, attack, runs, excluded in seed_res:
            c = cells.setdefault((eps, attack), {"runs": [], "excluded": 0})
            c["runs"].extend(runs)
            c["excluded"] += excluded
    report = {}
    for (eps, attack), c in sorted(cells.items()):
        runs = c["runs"]
        entry = {"epsilon": eps, "attack": attack, "usable": len(runs), "excluded": c["excluded"],
                 "violations": sum(r.sol_err_rel > r.rel_bound or r.out_err > r.out_bound for r in runs),
                 "mean_err": float(np.mean([r.sol_err_rel for r in runs])) if runs else None,
                 "mean_bound": float(np.mean([r.rel_bound for r in runs])) if runs else None}
        try:
            entry["ttest"] = an.one_sided_ttest([r.d for r in runs], cfg.xi).as_dict()
        except PoisonLabError as exc:
            entry["ttest"] = None
            entry["error"] = f"{type(exc).__name__}: {exc}"
        report[f"{attack}@{eps:g}"] = entry
    return {"cells": report, "runs": cells}


def gd_envelope_campaign(seeds, perturb_eps: float | None = None, n: int = 20) -> dict:
    """GD suboptimality envelope on clean systems, or on UP-perturbed ones
    (alpha measured from the perturbation) when ``perturb_eps`` is given."""
    total, viol, worst = 0, 0, []
    for seed in seeds:
        task = make_task("sdd", seed, n=n)
        x = task.x_train
        alpha, l_clean = 1.0, None
        if perturb_eps:
            delta = run_attack("UP", task, PerturbBudget(perturb_eps)).delta
            l_clean = an.gd_smoothness(x)
            x = x + delta
            alpha = lc.opnorm2(x) / lc.opnorm2(task.x_train)
        res = an.gd_envelope_check(x, task.y_train, l_clean=l_clean, alpha=alpha)
        total += res["iterations"]
        viol += res["violations"]
        worst.append(res)
    return {"systems": len(worst), "logged_iterations": total, "violations": viol}


def lp_divergence_instance(rng: Rng, n: int) -> dict:
    """Random instance satisfying the stated hypotheses: ||dx||_2 = eps and
    ||dy|| = eta, with directions drawn independently of the system."""
    x = rng.standard_normal((n, n)) + n * np.eye(n)
    y = rng.standard_normal(n)
    eps = 0.5 * lc.singular_values(x)[-1] * rng.random()
    g = rng.standard_normal((n, n))
    dx = g * (eps / lc.opnorm2(g))
    u = rng.standard_normal(n)
    eta = float(np.linalg.norm(y)) * (0.01 + rng.random())
    dy = u * (eta / np.linalg.norm(u))
    return {"x": x, "y": y, "dx": dx, "dy": dy, "epsilon": eps, "eta": eta}


def lp_divergence_campaign(count: int = 200, seed: int = 0) -> dict:
    rng = Rng(seed)
    reports = []
    for i in range(count):
        inst = lp_divergence_instance(rng.spawn(i), 2 + i % 5)
        reports.append(an.verify_lp_divergence(inst["x"], inst["dx"], inst["dy"], inst["y"],
                                               inst["epsilon"], inst["eta"]))
    fails = [r for r in reports if not r.holds]
    return {"instances": count, "failures": len(fails),
            "worst_ratio": min(r.empirical_value / r.bound_value for r in reports)}


def cmd_verify_bounds(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    result: dict = {}
    if "forward" in cfg.checks:
        fc = forward_campaign(cfg)
        result["forward"] = fc["cells"]
        lines = ["seed,attack,epsilon,sol_err_rel,rel_bound,out_err,out_bound,d"]
        for (eps, attack), c in sorted(fc["runs"].items()):
            for r in c["runs"]:
                lines.append(",".join([str(r.seed), attack, _fmt(eps), _fmt(r.sol_err_rel), _fmt(r.rel_bound),
                                       _fmt(r.out_err), _fmt(r.out_bound), _fmt(r.d)]))
        (out / "forward.csv").write_text("\n".join(lines) + "\n")
    if "gd_envelope" in cfg.checks:
        result["gd_envelope"] = {"clean": gd_envelope_campaign(cfg.seeds()),
                                 "up": gd_envelope_campaign(cfg.seeds(), perturb_eps=0.8)}
    if "lp_divergence" in cfg.checks:
        result["lp_divergence"] = lp_divergence_campaign(seed=cfg.seed)
    write_json(out / "bounds.json", result)
    return result


# ---------------------------------------------------------------- diagnose


DIAG_FILES = {
    "spectral_radius": ["rho_jacobi", "rho_gauss_seidel", "rho_sor"],
    "eigen": ["eig_abs_max", "eig_abs_min", "eigvec_cond", "gmres_n_end"],
    "cg_alignment": ["align_first", "align_first5", "cg_n_end"],
    "smoothness": ["smoothness_l", "gd_n_end"],
    "preconditioning": ["gmres_n_end", "gmres_ilu_n_end", "cg_n_end", "cg_ilu_n_end"],
}


def _n_end(a, b, cfg: SolverConfig, pattern=None) -> int:
    try:
        rep = an._run(a, b, cfg, pattern)
        return rep.n_end if rep.converged else cfg.iteration_cap(a.shape[0])
    except PoisonLabError:
        return cfg.iteration_cap(a.shape[0])


def diagnose_matrix(a, b, clean_pattern=None, lr_multipliers=(1.0,), omega: float = 1.0) -> dict:
    """All per-matrix diagnostics for one (perturbed) square system."""
    rec = {}
    for kind, name in (("Jacobi", "rho_jacobi"), ("GaussSeidel", "rho_gauss_seidel"), ("SOR", "rho_sor")):
        rec[name] = an.iteration_spectral_radius(a, kind, omega)
    mags = np.abs(lc.eigvals_general(a))
    rec["eig_abs_max"], rec["eig_abs_min"] = float(mags.max()), float(mags.min())
    try:
        rec["eigvec_cond"] = an.eigvec_condition(a)
    except PoisonLabError:
        rec["eigvec_cond"] = math.inf
    rec["gmres_n_end"] = _n_end(a, b, SolverConfig("GMRES"))
    rec["align_first"], rec["align_first5"] = an.cg_alignment(a, b, 5, symmetrize=True)
    rec["cg_n_end"] = _n_end(a, b, SolverConfig("CG"))
    rec["smoothness_l"] = an.gd_smoothness(a)
    rec["gd_n_end"] = _n_end(a, b, SolverConfig("GD"))
    rec["gmres_ilu_n_end"] = _n_end(a, b, SolverConfig("GMRES", precondition="ilu0"), clean_pattern)
    rec["cg_ilu_n_end"] = _n_end(a, b, SolverConfig("CG", precondition="ilu0"), clean_pattern)
    lr = {}
    for mult in lr_multipliers:
        lr[float(mult)] = _n_end(a, b, SolverConfig("GD", step_size=mult / rec["smoothness_l"]))
    rec["lr_grid"] = lr
    return rec


def _diagnose_seed(cfg: ExperimentConfig, seed: int) -> list:
    task = task_for(cfg, seed)
    if not task.square:
        raise InvalidConfig("diagnostics need a square system")
    pattern = task.x_train != 0 if cfg.ilu_pattern == "clean" else None
    omega = next((s.get("omega", 1.0) for s in cfg.solvers if s.get("kind") == "SOR"), 1.0)
    out = []
    for eps in cfg.epsilons:
        for attack in cfg.attacks:
            delta, _ = attack_delta(cfg, task, attack, eps)
            rec = diagnose_matrix(task.x_train + delta, task.y_train, pattern, cfg.lr_multipliers, omega)
            out.append({"seed": seed, "epsilon": eps, "attack": attack, **rec})
    return out


def diagnose_records(cfg: ExperimentConfig) -> list:
    res = _map(_diagnose_seed, cfg.seeds(), cfg)
    return [r for seed_res in res for r in seed_res]


def _median_rows(records, cols):
    cells: dict = {}
    for r in records:
        cells.setdefault((r["epsilon"], r["attack"]), []).append(r)
    rows = []
    for (eps, attack) in sorted(cells):
        rs = cells[(eps, attack)]
        rows.append([eps, attack] + [float(np.median([r[c] for r in rs])) for c in cols])
    return rows


def trend_spearman(records, attack: str = "LP", metric: str = "rho_jacobi") -> list:
    """Per-seed Spearman correlation between epsilon and ``metric``."""
    by_seed: dict = {}
    for r in records:
        if r["attack"] == attack:
            by_seed.setdefault(r["seed"], []).append((r["epsilon"], r[metric]))
    out = []
    for seed in sorted(by_seed):
        pts = sorted(by_seed[seed])
        out.append(an.spearman([p[0] for p in pts], [p[1] for p in pts]))
    return out


def cmd_diagnose(cfg: ExperimentConfig) -> dict:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    records = diagnose_records(cfg)
    tables = {}
    for name, cols in DIAG_FILES.items():
        rows = _median_rows(records, cols)
        tables[name] = (cols, rows)
        text = "epsilon,attack," + ",".join(cols) + "\n"
        text += "".join(",".join([_fmt(r[0]), r[1]] + [_fmt(v) for v in r[2:]]) + "\n" for r in rows)
        (out / f"{name}.csv").write_text(text)
    lr_lines = ["epsilon,attack,lr_multiplier,n_end"]
    cells: dict = {}
    for r in records:
        for mult, n in r["lr_grid"].items():
            cells.setdefault((r["epsilon"], r["attack"], mult), []).append(n)
    for (eps, attack, mult) in sorted(cells):
        lr_lines.append(f"{_fmt(eps)},{attack},{_fmt(mult)},{_fmt(float(np.median(cells[(eps, attack, mult)])))}")
    (out / "lr_grid.csv").write_text("\n".join(lr_lines) + "\n")
    summary = {}
    if len(cfg.epsilons) > 1:
        for attack in cfg.attacks:
            rhos = [v for v in trend_spearman(records, attack) if np.isfinite(v)]
            summary[f"spearman_rho_jacobi_{attack}"] = float(np.median(rhos)) if rhos else None
    write_json(out / "diagnose_summary.json", summary)
    if cfg.svg:
        from .plotting import line_chart

        for name, (cols, rows) in tables.items():
            for col_i, col in enumerate(cols):
                series = {}
                for r in rows:
                    series.setdefault(r[1], ([], []))
                    series[r[1]][0].append(r[0])
                    series[r[1]][1].append(r[2 + col_i])
                line_chart(series, f"{col} vs epsilon", out / f"{name}_{col}.svg")
    return {"records": records, "summary": summary}


# ---------------------------------------------------------------- report


def cmd_report(cfg: ExperimentConfig) -> str:
    root = Path(cfg.out)
    paths = sorted(root.glob("seeds/seed_*/metrics.csv"))
    if not paths:
        raise InvalidConfig(f"no metrics.csv files under {root}/seeds")
    records = [r for p in paths for r in read_metrics(p)]
    cells = summarize(records)
    lines = [f"# Sweep report: {root}", "", f"{len(paths)} seed(s), medians per cell.", ""]
    solvers = sorted({c["solver"] for c in cells})
    for solver in solvers:
        lines += [f"## {solver}", "",
                  "| epsilon | attack | abs_err | rsd | sol_err_rel | kappa | n_end | converged |",
                  "|---|---|---|---|---|---|---|---|"]
        for c in cells:
            if c["solver"] == solver:
                lines.append(f"| {c['epsilon']:g} | {c['attack']} | {c['abs_err']:.5g} | {c['rsd']:.5g} | "
                             f"{c['sol_err_rel']:.5g} | {c['kappa']:.5g} | {c['n_end']:g} | "
                             f"{c['converged_frac']:.0%} |")
        lines.append("")
    text = "\n".join(lines)
    (root / "report.md").write_text(text)
    return text


COMMANDS = {
    "synth": cmd_synth,
    "sweep": cmd_sweep,
    "verify-bounds": cmd_verify_bounds,
    "diagnose": cmd_diagnose,
    "report": cmd_report,
}


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)

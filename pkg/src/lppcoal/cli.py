"""Command-line front end: ``run``, ``summarize`` and ``self-test``.

Configuration comes from an INI file (section ``[experiment]``) with every key
overridable by a flag. Each run point (one delta, or one sigma) writes a
per-trial CSV and a summary JSON into the output directory.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__, experiments as ex
from .environment import ParameterError
from .kernels import BACKEND

EXIT_OK, EXIT_ASSUMPTION, EXIT_STATISTICAL = 0, 2, 3
ENV_OUTPUT = "LPPCOAL_OUTPUT_DIR"
EXPERIMENTS = ("coalescence", "general-ic", "localization", "exit-tail", "prop62",
               "queue-bounds", "rw-bound", "self-test")
CORE_COLUMNS = ("experiment", "N", "delta", "tau", "sigma", "seed", "trial", "valid", "truncated", "note")


class UsageError(ValueError):
    pass


# --- configuration --------------------------------------------------------

def _floats(v) -> tuple[float, ...]:
    if isinstance(v, (int, float)):
        return (float(v),)
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).replace(";", ",").split(",") if x.strip())


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {v!r}")


@dataclasses.dataclass
class ExperimentConfig:
    experiment: str = "coalescence"
    N: int = 600
    delta: tuple = (0.1,)
    tau: Optional[float] = None
    sigma: tuple = (0.0,)
    trials: int = 100
    seed: int = 1
    workers: int = 1
    output_dir: str = ""
    start: int = 0
    depth: float = 0.25
    starts: str = "edges"
    diagnostics: bool = False
    sandwich: bool = False
    strict: bool = False
    M_grid: tuple = (0.5, 0.75, 1.0, 1.25)
    r_grid: tuple = (0.5, 1.0, 1.5, 2.0)
    xi: tuple = (0.5, 0.5)
    nu: float = 0.5
    r0: float = 2.0
    lam_grid: tuple = (2.0, 5.0, 10.0)
    horizon: int = 10_000
    alpha: float = 0.6
    beta: float = 0.4
    eta_grid: tuple = (0.001, 0.005, 0.01)
    r: float = 2.0
    N_queue: float = 1e6

    _TUPLES = ("delta", "sigma", "M_grid", "r_grid", "xi", "lam_grid", "eta_grid")
    _INTS = ("N", "trials", "seed", "workers", "start", "horizon")
    _BOOLS = ("diagnostics", "sandwich", "strict")

    def set(self, key: str, value: Any) -> None:
        key = key.replace("-", "_")
        names = {f.name for f in dataclasses.fields(self)}
        if key not in names:
            raise UsageError(f"unknown config key {key!r}")
        if value is None:
            return
        if key in self._TUPLES:
            value = _floats(value)
        elif key in self._INTS:
            value = int(float(value)) if not isinstance(value, int) else value
        elif key in self._BOOLS:
            value = _bool(value)
        elif key == "tau":
            value = None if str(value).strip().lower() in ("", "none") else float(value)
        elif key in ("experiment", "starts", "output_dir"):
            value = str(value)
        else:
            value = float(value)
        setattr(self, key, value)

    def echo(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}

    def validate(self) -> None:
        """Every numeric field against the relevant preconditions; raises UsageError."""
        if self.experiment not in EXPERIMENTS:
            raise UsageError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.trials < 1:
            raise UsageError("trials must be >= 1")
        if self.workers < 1:
            raise UsageError("workers must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise UsageError("seed must fit in 64 unsigned bits")
        if self.start < 0:
            raise UsageError("start must be >= 0")
        if self.N < 2:
            raise UsageError("N must be >= 2")
        e = self.experiment
        if e in ("coalescence", "general-ic", "prop62"):
            if any(not 0.0 < d < 1.0 for d in self.delta):
                raise UsageError("every delta must lie in (0, 1)")
        if e == "coalescence":
            if self.starts not in ("edges", "all", "top", "four"):
                raise UsageError("starts must be edges, all, top or four")
            if not 0.0 < self.depth <= 1.0:
                raise UsageError("depth must lie in (0, 1]")
        if e == "general-ic" and any(s < 0 for s in self.sigma):
            raise UsageError("sigma must be >= 0")
        if e == "localization":
            if len(self.xi) != 2 or min(self.xi) <= 0 or abs(sum(self.xi) - 1) > 1e-9:
                raise UsageError("xi must be two positive numbers summing to 1")
            if self.tau is None or not 0.0 < self.tau <= 1.0:
                raise UsageError("localization needs tau in (0, 1]")
            if min(self.M_grid) < 0:
                raise UsageError("M values must be >= 0")
        if e == "exit-tail" and (not 0.0 < self.nu < 1.0 or min(self.r_grid) < 0):
            raise UsageError("need nu in (0, 1) and r >= 0")
        if e == "rw-bound" and not 0.0 < self.beta < self.alpha < 1.0:
            raise UsageError("need 0 < beta < alpha < 1")
        if e == "queue-bounds" and (min(self.eta_grid) <= 0 or self.r <= 0):
            raise UsageError("eta and r must be positive")


def load_config(path: Optional[str], overrides: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path:
        parser = configparser.ConfigParser()
        parser.optionxform = str  # keep "N" distinct from "n"
        if not parser.read(path):
            raise UsageError(f"cannot read config file {path}")
        if "experiment" not in parser:
            raise UsageError("config file needs an [experiment] section")
        for k, v in parser["experiment"].items():
            cfg.set(k, v)
    for k, v in overrides.items():
        cfg.set(k, v)
    if not cfg.output_dir:
        cfg.output_dir = os.environ.get(ENV_OUTPUT, "lppcoal-out")
    cfg.validate()
    return cfg


# --- CSV ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def write_csv(outcomes: Sequence[ex.TrialOutcome], path) -> None:
    params, flags, obs = [], [], []
    for o in outcomes:
        for k in o.params:
            if k not in CORE_COLUMNS and k not in params:
                params.append(k)
        for k in o.flags:
            if k not in flags:
                flags.append(k)
        for k in o.observables:
            if k not in obs:
                obs.append(k)
    header = list(CORE_COLUMNS) + [f"param.{k}" for k in params] + \
        [f"flag.{k}" for k in flags] + [f"obs.{k}" for k in obs]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for o in outcomes:
            row = [o.experiment, _fmt(o.params.get("N")), _fmt(o.params.get("delta")),
                   _fmt(o.params.get("tau")), _fmt(o.params.get("sigma")), str(o.seed), str(o.trial),
                   _fmt(o.valid), _fmt(o.truncated), o.note]
            row += [_fmt(o.params.get(k)) for k in params]
            row += [_fmt(o.flags.get(k)) for k in flags]
            row += [_fmt(o.observables.get(k)) for k in obs]
            w.writerow(row)


def read_csv(path) -> list[ex.TrialOutcome]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            params, flags, obs = {}, {}, {}
            for k in ("N", "delta", "tau", "sigma"):
                if row[k] != "":
                    params[k] = _parse(row[k])
            for k, v in row.items():
                if k.startswith("param.") and v != "":
                    params[k[6:]] = _parse(v)
                elif k.startswith("flag.") and v != "":
                    flags[k[5:]] = v == "1"
                elif k.startswith("obs.") and v != "":
                    obs[k[4:]] = _parse(v)
            out.append(ex.TrialOutcome(row["experiment"], int(row["seed"]), int(row["trial"]), params,
                                       flags, obs, row["truncated"] == "1", row["valid"] == "1",
                                       row["note"]))
    return out


# --- running ----------------------------------------------------------------

def _point_params(cfg: ExperimentConfig, delta: Optional[float], sigma: Optional[float]):
    return {"cfg": cfg.echo(), "delta": delta, "sigma": sigma}


def _trial(cfg: dict, delta, sigma, t: int) -> ex.TrialOutcome:
    e = cfg["experiment"]
    if e == "coalescence":
        return ex.run_trial_coalescence(cfg["N"], delta, cfg["seed"], t, tau=cfg["tau"],
                                        depth=cfg["depth"], starts=cfg["starts"],
                                        diagnostics=cfg["diagnostics"], sandwich=cfg["sandwich"],
                                        strict=cfg["strict"])
    if e == "general-ic":
        return ex.run_trial_general_ic(cfg["N"], delta, sigma, cfg["seed"], t, tau=cfg["tau"])
    if e == "localization":
        return ex.run_trial_localization(cfg["N"], cfg["tau"], cfg["xi"], cfg["M_grid"], cfg["seed"], t)
    if e == "exit-tail":
        return ex.run_trial_exit_tail(cfg["N"], cfg["nu"], cfg["xi"], cfg["r_grid"], cfg["seed"], t)
    if e == "prop62":
        return ex.run_trial_prop62(cfg["N"], delta, cfg["r0"], cfg["seed"], t)
    if e == "queue-bounds":
        return ex.run_trial_queue(cfg["eta_grid"], cfg["r"], cfg["N_queue"], cfg["seed"], t)
    raise UsageError(f"no per-trial runner for {e!r}")


def _run_range(job) -> list[ex.TrialOutcome]:
    cfg, delta, sigma, lo, hi = job
    if cfg["experiment"] == "rw-bound":
        return ex.run_trials_rw(cfg["alpha"], cfg["beta"], cfg["lam_grid"], cfg["horizon"],
                                cfg["seed"], lo, hi)
    return [_trial(cfg, delta, sigma, t) for t in range(lo, hi)]


def run_point(cfg: ExperimentConfig, delta=None, sigma=None) -> list[ex.TrialOutcome]:
    """All trials of one grid point; workers get disjoint index ranges."""
    lo, hi = cfg.start, cfg.start + cfg.trials
    c = cfg.echo()
    chunks = max(1, min(cfg.trials, cfg.workers * 8))
    edges = [lo + (hi - lo) * k // chunks for k in range(chunks + 1)]
    jobs = [(c, delta, sigma, a, b) for a, b in zip(edges, edges[1:]) if b > a]
    if cfg.workers == 1:
        parts = [_run_range(j) for j in jobs]
    else:
        with ProcessPoolExecutor(cfg.workers) as pool:
            parts = list(pool.map(_run_range, jobs))
    out = [o for p in parts for o in p]
    out.sort(key=lambda o: o.trial)
    return out


def _estimates(outcomes: Sequence[ex.TrialOutcome]) -> dict:
    names = []
    for o in outcomes:
        for k in o.flags:
            if k not in names:
                names.append(k)
    res = {}
    for k in names:
        try:
            e = ex.estimate(outcomes, k)
        except ParameterError:
            continue
        res[k] = {"n": e.n, "k": e.k, "p_hat": e.p_hat, "ci_lo": e.ci_lo, "ci_hi": e.ci_hi,
                  "excluded": e.excluded}
    return res


def _point_checks(cfg: ExperimentConfig, outcomes, sigma) -> list[ex.Check]:
    valid = [o for o in outcomes if o.valid]
    if not valid:
        return []
    e = cfg.experiment
    if e == "coalescence":
        return ex.coalescence_checks(valid)
    if e == "general-ic":
        return ex.general_ic_checks(valid, sigma)
    if e == "localization":
        return ex.localization_checks(valid, cfg.M_grid)
    if e == "exit-tail":
        return ex.exit_tail_checks(valid, cfg.r_grid)
    if e == "prop62":
        return ex.prop62_checks(valid)
    if e == "queue-bounds":
        return ex.queue_checks(valid, cfg.eta_grid)
    if e == "rw-bound":
        return ex.rw_checks(valid, cfg.alpha, cfg.beta, cfg.lam_grid)
    return []


def _stem(cfg: ExperimentConfig, delta, sigma) -> str:
    parts = [cfg.experiment]
    if cfg.experiment not in ("queue-bounds", "rw-bound"):
        parts.append(f"N{cfg.N}")
    if delta is not None:
        parts.append(f"delta{delta:g}")
    if sigma is not None:
        parts.append(f"sigma{sigma:g}")
    parts.append(f"seed{cfg.seed}")
    if cfg.start:
        parts.append(f"from{cfg.start}")
    return "_".join(parts)


def _check_dicts(checks) -> list[dict]:
    return [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks]


def _points(cfg: ExperimentConfig):
    e = cfg.experiment
    if e in ("coalescence", "prop62"):
        return [(d, None) for d in cfg.delta]
    if e == "general-ic":
        return [(d, s) for d in cfg.delta for s in cfg.sigma]
    return [(None, None)]


def run(cfg: ExperimentConfig, out=None) -> tuple[int, dict]:
    """Run every grid point of ``cfg``; returns ``(exit code, result record)``."""
    out = sys.stdout if out is None else out
    if cfg.experiment == "self-test":
        checks = __import__("lppcoal.oracles", fromlist=["self_test"]).self_test(cfg.seed)
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}", file=out)
        return (EXIT_OK if all(c.passed for c in checks) else EXIT_STATISTICAL), {"checks": _check_dicts(checks)}
    scaling = {}
    if cfg.experiment in ("coalescence", "general-ic", "prop62"):
        for d in cfg.delta:
            try:
                sp = ex.scaling_parameters(d, cfg.N, strict=cfg.strict)
            except ex.AssumptionViolation as exc:
                print(f"assumption violation: {exc}", file=out)
                return EXIT_ASSUMPTION, {"error": str(exc)}
            scaling[d] = sp
            if cfg.tau is not None and cfg.experiment != "prop62" and not 0 < cfg.tau <= sp.t_r:
                raise UsageError(f"tau = {cfg.tau} exceeds t_r = {sp.t_r:.6g} at delta = {d}")
    outdir = Path(cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    record = {"config": cfg.echo(), "points": []}
    all_checks, fit_points = [], []
    for delta, sigma in _points(cfg):
        t0 = time.perf_counter()
        outcomes = run_point(cfg, delta, sigma)
        wall = time.perf_counter() - t0
        stem = _stem(cfg, delta, sigma)
        write_csv(outcomes, outdir / f"{stem}.csv")
        checks = _point_checks(cfg, outcomes, sigma)
        all_checks += checks
        summary = {
            "config": cfg.echo(), "delta": delta, "sigma": sigma,
            "estimates": _estimates(outcomes), "checks": _check_dicts(checks),
            "invalid": sum(not o.valid for o in outcomes),
            "truncated": sum(o.truncated for o in outcomes),
            "wall_clock_s": round(wall, 3),
            "scaling": scaling[delta].as_dict() if delta in scaling else None,
            "seed_manifest": {"master_seed": cfg.seed, "stream_label": [cfg.experiment, "<trial>"],
                              "trials": [cfg.start, cfg.start + cfg.trials], "version": __version__,
                              "backend": BACKEND},
            "csv": f"{stem}.csv",
        }
        if cfg.experiment == "prop62" or (cfg.experiment == "coalescence" and cfg.diagnostics):
            # joint laws across densities come from the shared-uniform boundary coupling
            summary["density_coupling"] = "monotone"
        if delta is not None and cfg.experiment == "coalescence":
            fit_points.append((delta, outcomes))
        with open(outdir / f"{stem}.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        record["points"].append(summary)
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}  [{stem}] {c.name}: {c.detail}", file=out)
        invalid = summary["invalid"]
        if invalid:
            print(f"[{stem}] {invalid} invalid trials", file=out)
    if len(fit_points) >= 3:
        recs = [ex.estimate(o, "thm21_event") for _, o in fit_points]
        chk, fit = ex.exponent_check([d for d, _ in fit_points], recs)
        record["fit"] = {"slope": fit.slope, "stderr": fit.stderr} if fit else None
        all_checks.append(chk)
        print(f"{'PASS' if chk.passed else 'FAIL'}  {chk.name}: {chk.detail}", file=out)
    record["checks"] = _check_dicts(all_checks)
    return (EXIT_OK if all(c.passed for c in all_checks) else EXIT_STATISTICAL), record


# --- summarize -------------------------------------------------------------

def _load_result(path: Path) -> dict:
    if path.suffix == ".json":
        with open(path) as fh:
            d = json.load(fh)
        return {"experiment": d["config"]["experiment"], "N": d["config"]["N"], "delta": d.get("delta"),
                "sigma": d.get("sigma"), "estimates": d["estimates"]}
    outs = read_csv(path)
    if not outs:
        raise UsageError(f"{path} holds no trials")
    o = outs[0]
    return {"experiment": o.experiment, "N": o.params.get("N"), "delta": o.params.get("delta"),
            "sigma": o.params.get("sigma"), "estimates": _estimates(outs)}


def summarize(paths: Sequence[str], event: Optional[str] = None) -> dict:
    if not paths:
        raise UsageError("need at least one result file")
    rows = [_load_result(Path(p)) for p in paths]
    exps = {r["experiment"] for r in rows}
    Ns = {r["N"] for r in rows}
    if len(exps) > 1:
        raise UsageError(f"incompatible experiments: {sorted(exps)}")
    if len(Ns) > 1:
        raise UsageError(f"incompatible N values: {sorted(Ns)}")
    rows.sort(key=lambda r: (r["delta"] is None, r["delta"] or 0.0, r["sigma"] or 0.0))
    result = {"experiment": exps.pop(), "N": Ns.pop(), "rows": rows}
    if event is None and result["experiment"] == "coalescence":
        event = "thm21_event"
    pts = [r for r in rows if r["delta"] is not None and event in r["estimates"]]
    if event and len({r["delta"] for r in pts}) >= 3:
        recs = [ex.EstimateRecord(event, e["n"], e["k"], e["p_hat"], e["ci_lo"], e["ci_hi"])
                for e in (r["estimates"][event] for r in pts)]
        try:
            fit = ex.fit_exponent([r["delta"] for r in pts], recs)
            result["fit"] = {"event": event, "slope": fit.slope, "stderr": fit.stderr}
        except ParameterError as exc:
            result["fit"] = {"event": event, "error": str(exc)}
    return result


def _print_summary(res: dict, out) -> None:
    print(f"experiment={res['experiment']} N={res['N']}", file=out)
    for r in res["rows"]:
        tag = []
        if r["delta"] is not None:
            tag.append(f"delta={r['delta']:g}")
        if r["sigma"] is not None:
            tag.append(f"sigma={r['sigma']:g}")
        for k, e in r["estimates"].items():
            print(f"  {' '.join(tag):<22} {k:<22} n={e['n']:<7} p={e['p_hat']:.5f} "
                  f"[{e['ci_lo']:.5f}, {e['ci_hi']:.5f}]", file=out)
    if "fit" in res:
        f = res["fit"]
        if "slope" in f:
            print(f"fit ({f['event']} failure vs delta): slope={f['slope']:.4f} stderr={f['stderr']:.4f}", file=out)
        else:
            print(f"fit: {f['error']}", file=out)


# --- entry point -----------------------------------------------------------

_OVERRIDES = [k.name for k in dataclasses.fields(ExperimentConfig)]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lppcoal", description="Geodesic coalescence experiments in exponential LPP.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment")
    r.add_argument("--config", help="INI file with an [experiment] section")
    for k in _OVERRIDES:
        r.add_argument(f"--{k.replace('_', '-')}", dest=k, default=None)
    s = sub.add_parser("summarize", help="merge result files")
    s.add_argument("files", nargs="+")
    s.add_argument("--event", default=None, help="event to fit against delta")
    s.add_argument("--json", dest="json_out", default=None, help="write the merged record here")
    t = sub.add_parser("self-test", help="run the deterministic oracle suite")
    t.add_argument("--seed", type=int, default=20240101)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "self-test":
            code, _ = run(ExperimentConfig(experiment="self-test", seed=args.seed))
            return code
        if args.command == "summarize":
            res = summarize(args.files, args.event)
            _print_summary(res, sys.stdout)
            if args.json_out:
                with open(args.json_out, "w") as fh:
                    json.dump(res, fh, indent=2, sort_keys=True)
            return EXIT_OK
        overrides = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k) is not None}
        cfg = load_config(args.config, overrides)
        code, _ = run(cfg)
        return code
    except (UsageError, ValueError) as exc:
        print(f"lppcoal: error: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())

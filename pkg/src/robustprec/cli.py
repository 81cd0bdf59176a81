"""Batch front end: config parsing, experiment dispatch, result emission.

Subcommands: sweep (rate vs SNR), converge (per-iteration optimizer trace),
mismatch (design under an assumed aging coefficient, score under the truth),
validate-config.  The CLI holds no numerical logic — every number in an
output file comes from a library call.  All CSV output uses '.' decimals,
LF line endings, a header row, and repr() floats, so reruns are
byte-identical.

Config file: JSON with sections "system" (SystemConfig fields), "profile"
(BeamProfile fields) and "experiment" (plan).  A previously written
run_manifest.json is also accepted; its resolved config is reused.
Exit codes: 0 success, 2 config error, 3 numerical failure (an error.json
is left in the output directory when one is known).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

from numpy.random import SeedSequence, default_rng

from . import __version__
from .beam_domain import beam_power_allocation, canonical_allocation
from .channel import BeamProfile
from .config import SystemConfig
from .errors import ConfigError, NumericalError
from .evaluation import (
    ALGORITHMS,
    alpha_mismatch_study,
    experiment_statistics,
    prepare_slot,
    run_slot_experiment,
    sweep_snr,
)
from .matio import write_complex_csv
from .mm_precoder import mm_full, mm_shared
from .posterior import build_posterior

_PLAN_DEFAULTS = {
    "algorithms": ("alg1",),
    "n_slots": 10,
    "n_mc": 2000,
    "mm_iters": 30,
    "mc_batch": 256,
    "snr_db": None,
    "assumed_alphas": None,
    "trace": False,
    "load_scale": 1.0,
}
_SYSTEM_KEYS = {f.name for f in dataclasses.fields(SystemConfig)}
_PROFILE_KEYS = {f.name for f in dataclasses.fields(BeamProfile)}


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError(f"duplicate key {key!r} in config")
        out[key] = value
    return out


def _load_json(path):
    try:
        with open(path) as f:
            return json.load(f, object_pairs_hook=_reject_duplicates)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")


def _check_keys(section, data, allowed, required=()):
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in section {section!r}")
    for key in required:
        if key not in data:
            raise ConfigError(f"missing key {key!r} in section {section!r}")


def parse_config(path):
    """Read and validate a config (or manifest) file.

    Returns (SystemConfig, BeamProfile or None, plan dict).
    """
    data = _load_json(path)
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    if "config" in data and isinstance(data["config"], dict):
        data = data["config"]  # a run manifest wraps the resolved config
    _check_keys("<root>", data, ("system", "profile", "experiment"),
                required=("system",))
    system = data["system"]
    if not isinstance(system, dict):
        raise ConfigError("section 'system' must be an object")
    _check_keys("system", system, _SYSTEM_KEYS, required=("m_t", "m_k"))
    cfg = SystemConfig(**system)
    profile = None
    if "profile" in data:
        prof = data["profile"]
        if not isinstance(prof, dict):
            raise ConfigError("section 'profile' must be an object")
        _check_keys("profile", prof, _PROFILE_KEYS, required=("band_width",))
        profile = BeamProfile(**prof)
    plan = dict(_PLAN_DEFAULTS)
    if "experiment" in data:
        exp = data["experiment"]
        if not isinstance(exp, dict):
            raise ConfigError("section 'experiment' must be an object")
        _check_keys("experiment", exp, _PLAN_DEFAULTS)
        plan.update(exp)
    for key in ("n_slots", "n_mc", "mm_iters", "mc_batch"):
        if not isinstance(plan[key], int) or plan[key] < 1:
            raise ConfigError(f"experiment.{key} must be a positive integer")
    if not isinstance(plan["trace"], bool):
        raise ConfigError("experiment.trace must be a boolean")
    if (isinstance(plan["load_scale"], bool)
            or not isinstance(plan["load_scale"], (int, float))
            or plan["load_scale"] < 0):
        raise ConfigError("experiment.load_scale must be a number >= 0")
    plan["load_scale"] = float(plan["load_scale"])
    plan["algorithms"] = tuple(plan["algorithms"])
    for a in plan["algorithms"]:
        if a not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {a!r}; choose from "
                              f"{', '.join(ALGORITHMS)}")
    return cfg, profile, plan


def _resolved_config(cfg, profile, plan):
    out = {"system": dataclasses.asdict(cfg)}
    if profile is not None:
        prof = dataclasses.asdict(profile)
        for key in ("band_width", "centers", "alphas"):
            if isinstance(prof.get(key), tuple):
                prof[key] = list(prof[key])
        out["profile"] = prof
    exp = dict(plan)
    exp["algorithms"] = list(exp["algorithms"])
    for key in ("snr_db", "assumed_alphas"):
        if isinstance(exp.get(key), tuple):
            exp[key] = list(exp[key])
    out["experiment"] = exp
    return out


def _write_json(path, payload):
    with open(path, "w", newline="") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x):
    return repr(float(x))


def _write_manifest(out_dir, subcommand, cfg, profile, plan, outputs):
    path = out_dir / "run_manifest.json"
    _write_json(path, {
        "tool": "robustprec",
        "version": __version__,
        "subcommand": subcommand,
        "seed": cfg.seed,
        "algorithms": list(plan["algorithms"]),
        "config": _resolved_config(cfg, profile, plan),
        "outputs": sorted(outputs),
    })
    return path


def _result_rows(result, first_col_value, seed):
    for rec in result.records:
        yield (rec.algorithm, [first_col_value, rec.algorithm, rec.slot,
                               rec.block, _fmt(rec.rate), _fmt(rec.stderr),
                               seed])


def _run_sweep(cfg, profile, plan, out_dir, args):
    points = plan["snr_db"] if plan["snr_db"] is not None else cfg.snr_db
    results = sweep_snr(cfg, profile, plan["algorithms"], snr_db=points,
                        n_slots=plan["n_slots"], n_mc=plan["n_mc"],
                        mm_iters=plan["mm_iters"], mc_batch=plan["mc_batch"],
                        load_scale=plan["load_scale"])
    per_alg = {a: [] for a in plan["algorithms"]}
    produced = False
    for snr, result in results:
        produced = produced or bool(result.records)
        for alg, row in _result_rows(result, _fmt(snr), cfg.seed):
            per_alg[alg].append(row)
    if not produced:
        raise NumericalError("every slot failed; no rates were produced")
    header = ["snr_db", "algorithm", "slot", "block", "sum_rate", "stderr",
              "seed"]
    outputs = []
    for alg in plan["algorithms"]:
        name = f"sweep_{alg.replace('-', '_')}.csv"
        _write_csv(out_dir / name, header, per_alg[alg])
        outputs.append(name)
    return outputs


def _run_mismatch(cfg, profile, plan, out_dir, args):
    values = plan["assumed_alphas"]
    if not values:
        raise ConfigError("mismatch needs experiment.assumed_alphas")
    results = alpha_mismatch_study(cfg, profile, plan["algorithms"],
                                   assumed_alphas=values,
                                   n_slots=plan["n_slots"], n_mc=plan["n_mc"],
                                   mm_iters=plan["mm_iters"],
                                   mc_batch=plan["mc_batch"],
                                   load_scale=plan["load_scale"])
    per_alg = {a: [] for a in plan["algorithms"]}
    produced = False
    for alpha, result in results:
        produced = produced or bool(result.records)
        for alg, row in _result_rows(result, _fmt(alpha), cfg.seed):
            per_alg[alg].append(row)
    if not produced:
        raise NumericalError("every slot failed; no rates were produced")
    header = ["assumed_alpha", "algorithm", "slot", "block", "sum_rate",
              "stderr", "seed"]
    outputs = []
    for alg in plan["algorithms"]:
        name = f"mismatch_{alg.replace('-', '_')}.csv"
        _write_csv(out_dir / name, header, per_alg[alg])
        outputs.append(name)
    return outputs


def _run_converge(cfg, profile, plan, out_dir, args):
    iterative = {"alg1", "alg2", "alg3"}
    bad = [a for a in plan["algorithms"] if a not in iterative]
    if bad:
        raise ConfigError(f"converge supports alg1, alg2, alg3; got {bad[0]!r}")
    stats = experiment_statistics(cfg, profile)
    _, _, posterior = prepare_slot(cfg, stats, 0)
    outputs = []
    for alg in plan["algorithms"]:
        de_trace = [] if plan["trace"] else None
        alloc = None
        if alg == "alg3":
            alloc, report = beam_power_allocation(stats, cfg,
                                                  iters=plan["mm_iters"])
        else:
            runner = mm_full if alg == "alg1" else mm_shared
            init = canonical_allocation(stats, cfg).precoders
            report = runner(posterior, cfg, 2, init, iters=plan["mm_iters"],
                            de_trace=de_trace)
        rows = [[0, _fmt(report.objective[0]), "", ""]]
        for i in range(report.updates):
            rows.append([i + 1, _fmt(report.objective[i + 1]),
                         _fmt(report.mu_trace[i]), _fmt(report.power_trace[i])])
        name = f"converge_{alg}.csv"
        _write_csv(out_dir / name, ["iteration", "de_objective", "mu",
                                    "power"], rows)
        outputs.append(name)
        pname = f"precoders_{alg}.csv"
        write_complex_csv(out_dir / pname,
                          {f"user{k}": p for k, p in
                           enumerate(report.precoders)})
        outputs.append(pname)
        if alloc is not None:
            arows = []
            for k in range(len(alloc.gains)):
                beams = alloc.active_beams(k)
                for b, g in zip(beams, alloc.gains[k]):
                    arows.append([k, int(b), _fmt(g * g)])
            _write_csv(out_dir / "allocation_alg3.csv",
                       ["user", "beam", "power"], arows)
            outputs.append("allocation_alg3.csv")
        if de_trace is not None:
            tname = f"de_trace_{alg}.csv"
            _write_csv(out_dir / tname,
                       ["update", "user", "sweeps", "residual"],
                       [[u, k, s, _fmt(r)] for u, k, s, r in de_trace])
            outputs.append(tname)
    return outputs


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="robustprec",
        description="Robust downlink precoding experiments (batch runner).")
    parser.add_argument("--version", action="version",
                        version=f"robustprec {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, needs_out=True):
        p.add_argument("-c", "--config", required=True,
                       help="JSON config or run_manifest.json")
        if needs_out:
            p.add_argument("--out-dir", required=True,
                           help="directory for CSVs and run_manifest.json")
            p.add_argument("--seed", type=int, default=None,
                           help="override system.seed")
            p.add_argument("--algorithms", default=None,
                           help="comma list: " + ",".join(ALGORITHMS))

    sweep = sub.add_parser("sweep", help="rate vs SNR")
    common(sweep)
    converge = sub.add_parser("converge",
                              help="per-iteration optimizer trace")
    common(converge)
    converge.add_argument("--trace", action="store_true",
                          help="also write per-solve DE diagnostics")
    mismatch = sub.add_parser("mismatch",
                              help="design under assumed aging, score under truth")
    common(mismatch)
    validate = sub.add_parser("validate-config", help="parse and echo a config")
    common(validate, needs_out=False)
    return parser


_RUNNERS = {"sweep": _run_sweep, "converge": _run_converge,
            "mismatch": _run_mismatch}


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    out_dir = None
    try:
        cfg, profile, plan = parse_config(args.config)
        if args.subcommand == "validate-config":
            json.dump(_resolved_config(cfg, profile, plan), sys.stdout,
                      indent=2, sort_keys=True)
            sys.stdout.write("\n")
            return 0
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.algorithms is not None:
            plan["algorithms"] = tuple(
                a.strip() for a in args.algorithms.split(",") if a.strip())
            if not plan["algorithms"]:
                raise ConfigError("--algorithms must name at least one "
                                  "algorithm")
            for a in plan["algorithms"]:
                if a not in ALGORITHMS:
                    raise ConfigError(f"unknown algorithm {a!r}; choose from "
                                      f"{', '.join(ALGORITHMS)}")
        if getattr(args, "trace", False):
            plan["trace"] = True
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        outputs = _RUNNERS[args.subcommand](cfg, profile, plan, out_dir, args)
        manifest = _write_manifest(out_dir, args.subcommand, cfg, profile,
                                   plan, outputs)
        print(f"wrote {len(outputs)} file(s) + {manifest.name} to {out_dir}")
        return 0
    except ConfigError as e:
        _report_error(out_dir, "ConfigError", e)
        return 2
    except NumericalError as e:
        _report_error(out_dir, type(e).__name__, e)
        return 3


def _report_error(out_dir, kind, exc):
    print(f"error: {exc}", file=sys.stderr)
    if out_dir is not None and out_dir.is_dir():
        _write_json(out_dir / "error.json",
                    {"error": kind, "message": str(exc)})


if __name__ == "__main__":
    sys.exit(main())

"""Batch front end.

Subcommands:
  offline   build snapshots, compress, write the reduced model as JSON
  estimate  per-input index estimates, certified brackets, combined CIs
  tune      fit the interval-length model and emit the optimal (n, N) table
  validate  run the property audits and report pass/fail counts

Every run is driven by a JSON config (--config); unknown keys anywhere in
the config are rejected. The effective configuration, including the
resolved seed, is echoed into every output file, so any result can be
reproduced from its own sidecar. Files are written atomically
(temp-then-rename). Exit codes: 0 success, 2 offline failure, 3 bracket
unavailable, 4 tuner fit failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundPair, MuGrid, SurrogateSample, bound_pair
from .combined import CombinedInterval, EpsilonSamplingPolicy, combined_interval
from .domain import ParameterDomain, evaluate_pairs, sample_design
from .errors import (
    AssemblyError,
    BadDataError,
    BoundUnavailableError,
    CertisensError,
    NoDecayError,
    RankDeficientError,
)
from .models import (
    LinearTestModel,
    SyntheticSurrogate,
    build_toy_diffusion,
    anneal_bounds,
    brute_force_bounds,
)
from .rb import (
    build_snapshots,
    full_output,
    make_surrogate_evaluator,
    model_from_jsonable,
    offline_reduce,
    pod_basis,
    reduced_from_jsonable,
    reduced_to_jsonable,
)
from .rng import Role, stream
from .sobol import estimate_sobol
from .tuning import TuningModel, estimate_Z, fit_error_decay, tuning_table

ENV_SEED = "CERTISENS_SEED"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_OFFLINE = 2
EXIT_BOUND_UNAVAILABLE = 3
EXIT_TUNER_FIT = 4


def _reject_unknown(d: dict, allowed: set[str], context: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ValueError(f"unknown keys in {context}: {sorted(unknown)}")


@dataclass(frozen=True)
class ModelConfig:
    name: str | None = None
    path: str | None = None
    ranges: tuple | None = None
    dim_f: int = 64
    cells: int = 24
    coeffs: tuple | None = None
    surrogate_bound: float = 0.0
    surrogate_bias_fraction: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        _reject_unknown(d, {"name", "path", "ranges", "dim_f", "cells", "coeffs",
                            "surrogate_bound", "surrogate_bias_fraction"}, "model")
        if ("name" in d) == ("path" in d):
            raise ValueError("model needs exactly one of 'name' or 'path'")
        if d.get("name") not in (None, "toy-diffusion", "linear"):
            raise ValueError(f"unknown builtin model {d['name']!r}")
        return cls(
            name=d.get("name"),
            path=d.get("path"),
            ranges=tuple(tuple(r) for r in d["ranges"]) if "ranges" in d else None,
            dim_f=int(d.get("dim_f", 64)),
            cells=int(d.get("cells", 24)),
            coeffs=tuple(d["coeffs"]) if "coeffs" in d else None,
            surrogate_bound=float(d.get("surrogate_bound", 0.0)),
            surrogate_bias_fraction=float(d.get("surrogate_bias_fraction", 0.0)),
        )


@dataclass(frozen=True)
class TuneConfig:
    precisions: tuple[float, ...] = ()
    constants: dict | None = None          # {"Z":, "C":, "a":}
    pairs: tuple | None = None             # [[n, e], ...] measured decay data
    Z: float | None = None                 # with pairs
    basis_sizes: tuple[int, ...] | None = None  # live pre-runs

    @classmethod
    def from_dict(cls, d: dict) -> "TuneConfig":
        _reject_unknown(d, {"precisions", "constants", "pairs", "Z", "basis_sizes"}, "tune")
        if "constants" in d:
            _reject_unknown(d["constants"], {"Z", "C", "a"}, "tune.constants")
        sources = sum(k in d for k in ("constants", "pairs", "basis_sizes"))
        if sources != 1:
            raise ValueError("tune needs exactly one of constants/pairs/basis_sizes")
        return cls(
            precisions=tuple(float(p) for p in d.get("precisions", ())),
            constants=d.get("constants"),
            pairs=tuple((float(n), float(e)) for n, e in d["pairs"]) if "pairs" in d else None,
            Z=float(d["Z"]) if "Z" in d else None,
            basis_sizes=tuple(int(n) for n in d["basis_sizes"]) if "basis_sizes" in d else None,
        )


@dataclass(frozen=True)
class ValidateConfig:
    instances: int = 20
    draws: int = 2000
    sample_sizes: tuple[int, ...] = (10, 50)
    surrogate_checks: int = 200
    audit_instances: int = 5
    basis_sizes: tuple[int, ...] = (1, 2, 3, 4)
    rb_checks: int = 100

    @classmethod
    def from_dict(cls, d: dict) -> "ValidateConfig":
        _reject_unknown(d, {"instances", "draws", "sample_sizes", "surrogate_checks",
                            "audit_instances", "basis_sizes", "rb_checks"}, "validate")
        kw = {k: d[k] for k in d}
        for key in ("sample_sizes", "basis_sizes"):
            if key in kw:
                kw[key] = tuple(int(v) for v in kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    sample_size: int = 300
    basis_size: int = 4
    snapshots: int = 40
    replicates: int = 2000
    alpha: float = 0.05
    seed: int | None = None
    epsilon_sampling: EpsilonSamplingPolicy = field(default_factory=EpsilonSamplingPolicy)
    grid: MuGrid = field(default_factory=MuGrid)
    indices: tuple[int, ...] | None = None
    reduced_model: str | None = None
    threads: int = 1
    out_dir: str = "."
    tune: TuneConfig = field(default_factory=TuneConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        allowed = {"model", "sample_size", "basis_size", "snapshots", "replicates",
                   "alpha", "seed", "epsilon_sampling", "grid", "indices",
                   "reduced_model", "threads", "out", "tune", "validate"}
        _reject_unknown(d, allowed, "config")
        if "model" not in d:
            raise ValueError("config needs a 'model' section")
        policy = EpsilonSamplingPolicy()
        if "epsilon_sampling" in d:
            e = d["epsilon_sampling"]
            _reject_unknown(e, {"enabled", "eta", "etap"}, "epsilon_sampling")
            policy = EpsilonSamplingPolicy(
                enabled=bool(e.get("enabled", False)),
                eta=np.asarray(e["eta"], dtype=float) if isinstance(e.get("eta", 1.0), list)
                else float(e.get("eta", 1.0)),
                etap=np.asarray(e["etap"], dtype=float) if isinstance(e.get("etap", 1.0), list)
                else float(e.get("etap", 1.0)),
            )
        grid = MuGrid(*[int(g) for g in d.get("grid", (5, 5))])
        cfg = cls(
            model=ModelConfig.from_dict(d["model"]),
            sample_size=int(d.get("sample_size", 300)),
            basis_size=int(d.get("basis_size", 4)),
            snapshots=int(d.get("snapshots", 40)),
            replicates=int(d.get("replicates", 2000)),
            alpha=float(d.get("alpha", 0.05)),
            seed=int(d["seed"]) if "seed" in d else None,
            epsilon_sampling=policy,
            grid=grid,
            indices=tuple(int(i) for i in d["indices"]) if "indices" in d else None,
            reduced_model=d.get("reduced_model"),
            threads=int(d.get("threads", 1)),
            out_dir=str(d.get("out", ".")),
            tune=TuneConfig.from_dict(d.get("tune", {"constants": {"Z": 1, "C": 1, "a": 2}}))
            if "tune" in d else TuneConfig(),
            validate=ValidateConfig.from_dict(d.get("validate", {})) if "validate" in d
            else ValidateConfig(),
            raw=d,
        )
        for name, val in (("sample_size", cfg.sample_size), ("basis_size", cfg.basis_size),
                          ("snapshots", cfg.snapshots), ("replicates", cfg.replicates)):
            if val < 1:
                raise ValueError(f"{name} must be >= 1, got {val}")
        if not 0.0 < cfg.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {cfg.alpha}")
        return cfg


def resolve_seed(cli_seed: int | None, config_seed: int | None) -> int:
    """Priority: --seed flag, then config, then CERTISENS_SEED, then 0."""
    if cli_seed is not None:
        return cli_seed
    if config_seed is not None:
        return config_seed
    env = os.environ.get(ENV_SEED)
    if env is not None:
        return int(env)
    return 0


def atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _fmt(x) -> str:
    return repr(float(x))


def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _sidecar(config: RunConfig, seed: int, extra: dict) -> dict:
    return {
        "format": "certisens-run",
        "version": 1,
        "package_version": __version__,
        "config": config.raw,
        "seed": seed,
        **extra,
    }


# ---------------------------------------------------------------------------
# model wiring

def _domain(config: RunConfig) -> ParameterDomain:
    if config.model.ranges is None:
        raise ValueError("model config needs 'ranges'")
    return ParameterDomain(config.model.ranges)


def _toy(config: RunConfig):
    ranges = config.model.ranges or ((0.1, 10.0), (0.1, 10.0))
    return build_toy_diffusion(dim_f=config.model.dim_f, cells=config.model.cells,
                               ranges=ranges)


def _linear_pair(config: RunConfig):
    """Linear full model plus its synthetic surrogate (deterministic
    bias at the configured fraction of the bound)."""
    domain = _domain(config)
    if config.model.coeffs is None:
        raise ValueError("linear model needs 'coeffs'")
    base = LinearTestModel(coeffs=config.model.coeffs, domain=domain)
    b0 = config.model.surrogate_bound
    frac = config.model.surrogate_bias_fraction
    surrogate = SyntheticSurrogate(
        base=base,
        bound_fn=lambda X: b0,
        perturb_fn=lambda X: frac * b0 * math.cos(3.0 * float(np.sum(X))),
    )
    return base, surrogate, domain


def _build_reduced(config: RunConfig, seed: int):
    toy = _toy(config)
    gen = stream(seed, Role.SNAPSHOTS)
    lo, hi = toy.domain.lower, toy.domain.upper
    params = lo + gen.random((config.snapshots, toy.domain.p)) * (hi - lo)
    snaps = build_snapshots(toy.model, params)
    basis = pod_basis(snaps, toy.model.Omega, config.basis_size)
    return toy, offline_reduce(toy.model, basis)


def _surrogate_for_estimation(config: RunConfig, seed: int):
    """Returns (evaluator, domain, full_model or None)."""
    if config.model.path is not None:
        model = model_from_jsonable(json.loads(Path(config.model.path).read_text()))
        domain = _domain(config)
        if config.reduced_model:
            red = reduced_from_jsonable(
                json.loads(Path(config.reduced_model).read_text())["model"])
        else:
            gen = stream(seed, Role.SNAPSHOTS)
            params = domain.lower + gen.random((config.snapshots, domain.p)) * (
                domain.upper - domain.lower)
            basis = pod_basis(build_snapshots(model, params), model.Omega, config.basis_size)
            red = offline_reduce(model, basis)
        return make_surrogate_evaluator(red), domain, model
    if config.model.name == "toy-diffusion":
        if config.reduced_model:
            toy = _toy(config)
            red = reduced_from_jsonable(
                json.loads(Path(config.reduced_model).read_text())["model"])
            return make_surrogate_evaluator(red), toy.domain, toy.model
        toy, red = _build_reduced(config, seed)
        return make_surrogate_evaluator(red), toy.domain, toy.model
    if config.model.name == "linear":
        base, surrogate, domain = _linear_pair(config)
        return surrogate, domain, None
    raise ValueError("model config does not define an estimable model")


# ---------------------------------------------------------------------------
# commands

def cmd_offline(config: RunConfig, seed: int, out_dir: Path) -> int:
    if config.model.name == "linear":
        raise ValueError("the linear model has no reduced form to build")
    if config.model.path is not None:
        model = model_from_jsonable(json.loads(Path(config.model.path).read_text()))
        domain = _domain(config)
    else:
        toy = _toy(config)
        model, domain = toy.model, toy.domain
    gen = stream(seed, Role.SNAPSHOTS)
    params = domain.lower + gen.random((config.snapshots, domain.p)) * (
        domain.upper - domain.lower)
    snaps = build_snapshots(model, params)
    basis = pod_basis(snaps, model.Omega, config.basis_size)
    red = offline_reduce(model, basis)
    payload = _sidecar(config, seed, {
        "kind": "reduced-model",
        "domain": [list(r) for r in domain.ranges],
        "model": reduced_to_jsonable(red),
    })
    atomic_write(out_dir / "reduced_model.json", _json_text(payload))
    print(f"wrote {out_dir / 'reduced_model.json'} (n={red.n})")
    return EXIT_OK


def cmd_estimate(config: RunConfig, seed: int, out_dir: Path) -> int:
    evaluator, domain, _ = _surrogate_for_estimation(config, seed)
    indices = config.indices or tuple(range(1, domain.p + 1))
    header = ["i", "Shat_surrogate", "Sm", "SM", "ci_lo", "ci_hi", "dropped_replicates"]
    rows = []
    statuses = {}
    any_unavailable = False
    for i in indices:
        design = sample_design(domain, i, config.sample_size, seed)
        sample = evaluate_pairs(evaluator, design, threads=config.threads)
        s = SurrogateSample.from_pick_freeze(sample)
        shat = estimate_sobol(s.y, s.yp, i=i).value
        try:
            ci = combined_interval(s, B=config.replicates, alpha=config.alpha,
                                   policy=config.epsilon_sampling, grid=config.grid,
                                   seed=seed)
        except BoundUnavailableError as exc:
            any_unavailable = True
            statuses[str(i)] = f"bound-unavailable: {exc}"
            rows.append([i, _fmt(shat), "", "", "", "", ""])
            continue
        bp = ci.diagnostics.point_bounds
        statuses[str(i)] = "ok"
        rows.append([i, _fmt(shat), _fmt(bp.sm), _fmt(bp.sM), _fmt(ci.lo), _fmt(ci.hi),
                     ci.diagnostics.dropped])
    atomic_write(out_dir / "estimates.csv", _csv_text(header, rows))
    atomic_write(out_dir / "estimates.json", _json_text(_sidecar(config, seed, {
        "kind": "estimates",
        "indices": list(indices),
        "statuses": statuses,
    })))
    print(f"wrote {out_dir / 'estimates.csv'}")
    return EXIT_BOUND_UNAVAILABLE if any_unavailable else EXIT_OK


def _tuning_model(config: RunConfig, seed: int) -> TuningModel:
    tune = config.tune
    if tune.constants is not None:
        return TuningModel(Z=float(tune.constants["Z"]), C=float(tune.constants["C"]),
                           a=float(tune.constants["a"]))
    if tune.pairs is not None:
        if tune.Z is None:
            raise BadDataError("tune.pairs also needs tune.Z")
        C, a = fit_error_decay(tune.pairs)
        return TuningModel(Z=tune.Z, C=C, a=a)
    # live pre-runs at fixed N over the given basis sizes
    evaluator_cache = {}
    pairs = []
    z_inputs = []
    for n in tune.basis_sizes:
        cfg_n = RunConfig(**{**config.__dict__, "basis_size": n})
        evaluator, domain, _ = _surrogate_for_estimation(cfg_n, seed)
        widths = []
        for i in range(1, domain.p + 1):
            design = sample_design(domain, i, config.sample_size, seed)
            sample = evaluate_pairs(evaluator, design, threads=config.threads)
            s = SurrogateSample.from_pick_freeze(sample)
            ci = combined_interval(s, B=config.replicates, alpha=config.alpha,
                                   policy=config.epsilon_sampling, grid=config.grid,
                                   seed=seed)
            bp = ci.diagnostics.point_bounds
            widths.append(bp.width)
            if n == max(tune.basis_sizes):
                z_inputs.append((bp, ci))
        pairs.append((n, float(np.mean(widths))))
    C, a = fit_error_decay(pairs)
    Z = estimate_Z(config.sample_size, z_inputs)
    return TuningModel(Z=Z, C=C, a=a)


def cmd_tune(config: RunConfig, seed: int, out_dir: Path) -> int:
    model = _tuning_model(config, seed)
    table = tuning_table(model, config.tune.precisions)
    header = ["P", "n_star", "N_star", "n_rounded", "N_rounded"]
    rows = [[_fmt(t.P), _fmt(t.n_star), _fmt(t.N_star), t.n_rounded, t.N_rounded]
            for t in table]
    atomic_write(out_dir / "tuning.csv", _csv_text(header, rows))
    atomic_write(out_dir / "tuning.json", _json_text(_sidecar(config, seed, {
        "kind": "tuning",
        "constants": {"Z": model.Z, "C": model.C, "a": model.a},
    })))
    print(f"wrote {out_dir / 'tuning.csv'} ({len(rows)} rows)")
    return EXIT_OK


def _validate_brackets(config: RunConfig, seed: int) -> dict:
    """Random-instance containment: admissible draws must stay inside the
    bracket, and the zero-bound bracket must collapse."""
    v = config.validate
    gen = stream(seed, Role.SNAPSHOTS, 1)
    violations = 0
    checked = 0
    unavailable = 0
    for inst in range(v.instances):
        N = v.sample_sizes[inst % len(v.sample_sizes)]
        y = gen.normal(0.0, 1.0, N)
        rho = gen.uniform(-0.8, 0.95)
        yp = rho * y + math.sqrt(max(1 - rho ** 2, 0.01)) * gen.normal(0.0, 1.0, N)
        eps = gen.uniform(0.0, 0.1, N) * float(y.std())
        epsp = gen.uniform(0.0, 0.1, N) * float(y.std())
        s = SurrogateSample(y, yp, eps, epsp)
        try:
            bp = bound_pair(s, config.grid)
        except BoundUnavailableError:
            unavailable += 1
            continue
        U = gen.uniform(-1.0, 1.0, (v.draws, N))
        Up = gen.uniform(-1.0, 1.0, (v.draws, N))
        Y = y + U * eps
        Yp = yp + Up * epsp
        cy = Y - Y.mean(axis=1, keepdims=True)
        est = np.mean(cy * (Yp - Yp.mean(axis=1, keepdims=True)), axis=1) / np.mean(cy * cy, axis=1)
        violations += int(np.sum((est < bp.sm) | (est > bp.sM)))
        checked += v.draws
        zero = SurrogateSample(y, yp, np.zeros(N), np.zeros(N))
        bz = bound_pair(zero, config.grid)
        if bz.width > 1e-10:
            violations += 1
    return {"pass": violations == 0, "violations": violations,
            "draws_checked": checked, "instances_unavailable": unavailable}


def _validate_surrogate(config: RunConfig, seed: int) -> dict:
    """Certification of the configured surrogate against its full model."""
    evaluator, domain, full_model = _surrogate_for_estimation(config, seed)
    if config.model.name == "linear":
        base, evaluator, domain = _linear_pair(config)
        reference = base
    elif full_model is not None:
        reference = lambda X: full_output(full_model, X)
    else:
        return {"pass": True, "skipped": "no full model available"}
    gen = stream(seed, Role.SNAPSHOTS, 2)
    v = config.validate
    failures = 0
    for _ in range(v.surrogate_checks):
        X = domain.lower + gen.random(domain.p) * (domain.upper - domain.lower)
        ev = evaluator(X)
        if abs(reference(X) - ev.value) > ev.bound + 1e-12:
            failures += 1
    return {"pass": failures == 0, "violations": failures,
            "points_checked": v.surrogate_checks}


def _validate_audit(config: RunConfig, seed: int) -> dict:
    """Tiny-instance audit: exhaustive grid extrema inside the bracket,
    annealed extrema consistent with the grid."""
    v = config.validate
    gen = stream(seed, Role.SNAPSHOTS, 3)
    containment_fail = 0
    anneal_gap = 0.0
    for inst in range(v.audit_instances):
        y = gen.normal(0.0, 1.0, 3)
        yp = 0.6 * y + 0.4 * gen.normal(0.0, 1.0, 3)
        eps = gen.uniform(0.2, 1.0, 3) * 0.03
        epsp = gen.uniform(0.2, 1.0, 3) * 0.03
        s = SurrogateSample(y, yp, eps, epsp)
        bp = bound_pair(s, config.grid)
        gmin, gmax = brute_force_bounds(s, 5)
        if not (bp.sm <= gmin and gmax <= bp.sM):
            containment_fail += 1
        amin, amax = anneal_bounds(s, seed=seed + inst)
        anneal_gap = max(anneal_gap, abs(amin - gmin), abs(amax - gmax))
    return {"pass": containment_fail == 0 and anneal_gap <= 1e-3,
            "containment_failures": containment_fail,
            "max_anneal_grid_gap": anneal_gap}


def cmd_validate(config: RunConfig, seed: int, out_dir: Path) -> int:
    results = {
        "bracket_containment": _validate_brackets(config, seed),
        "surrogate_certification": _validate_surrogate(config, seed),
        "small_instance_audit": _validate_audit(config, seed),
    }
    all_pass = all(r["pass"] for r in results.values())
    atomic_write(out_dir / "validation.json", _json_text(_sidecar(config, seed, {
        "kind": "validation",
        "results": results,
        "all_pass": all_pass,
    })))
    for name, r in results.items():
        print(f"{'PASS' if r['pass'] else 'FAIL'}  {name}  {r}")
    return EXIT_OK if all_pass else EXIT_ERROR


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="certisens", description=__doc__)
    parser.add_argument("command", choices=["offline", "estimate", "tune", "validate"])
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="evaluation threads (0 = auto)")
    parser.add_argument("--out", default=None, help="output directory")
    args = parser.parse_args(argv)

    try:
        raw = json.loads(Path(args.config).read_text())
        config = RunConfig.from_dict(raw)
        if args.threads is not None:
            config = RunConfig(**{**config.__dict__, "threads": args.threads})
        seed = resolve_seed(args.seed, config.seed)
        out_dir = Path(args.out if args.out is not None else config.out_dir)
        command = {"offline": cmd_offline, "estimate": cmd_estimate,
                   "tune": cmd_tune, "validate": cmd_validate}[args.command]
        return command(config, seed, out_dir)
    except (RankDeficientError, AssemblyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_OFFLINE
    except BoundUnavailableError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BOUND_UNAVAILABLE
    except (NoDecayError, BadDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TUNER_FIT
    except (CertisensError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

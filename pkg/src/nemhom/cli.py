"""Command-line driver: config ingestion, dispatch, result emission.

Exit codes: 0 success, 2 validation failure, 3 numerical divergence,
4 study failure. Every output file name embeds the config hash, so runs
with distinct configurations never collide.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import jsonschema
import numpy as np

from . import harness, plots
from .energy import (
    AsymSurface,
    ElasticParams,
    GenBulk,
    GenSurface,
    LdgBulk,
    LdgSurface,
    RpBulk,
    RpSurface,
)
from .errors import DivergedError, ValidationError
from .field import (
    HomogenisedEnergy,
    MinimizeConfig,
    ScaffoldEnergy,
    load_field,
    make_field,
    minimize,
)
from .harness import SweepConfig, config_hash
from .qtensor import QTensor, UniaxialSpec, uniaxial
from .scaffold import Box, ScaffoldParams, build_scaffold

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "threads": _POS_INT,
        "scaffold": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eps": _NUM,
                "eps_list": {"type": "array", "items": _NUM, "minItems": 1},
                "alpha": _NUM,
                "p": _NUM,
                "q": _NUM,
                "r": _NUM,
                "domain": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["lo", "hi"],
                    "properties": {
                        "lo": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                        "hi": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                    },
                },
            },
            "required": ["alpha"],
        },
        "elastic": {
            "type": "object",
            "additionalProperties": False,
            "required": ["L1", "L2", "L3"],
            "properties": {"L1": _NUM, "L2": _NUM, "L3": _NUM},
        },
        "bulk": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["ldg", "rp", "gen"]},
                "a": _NUM,
                "b": _NUM,
                "c": _NUM,
                "coeffs": {"type": "array", "items": _NUM},
            },
        },
        "surface": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant"],
            "properties": {
                "variant": {"enum": ["ldg", "rp", "gen", "asym"]},
                "a": _NUM,
                "a_eff": _NUM,
                "b": _NUM,
                "b_eff": _NUM,
                "c": _NUM,
                "c_eff": _NUM,
                "coeffs": {"type": "array", "items": _NUM},
                "include_rp_constant": {"type": "boolean"},
                "include_s_faces": {"type": "boolean"},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n": _POS_INT,
                "rule": {"enum": ["resolve_scaffold"]},
                "max_voxels": _POS_INT,
            },
        },
        "minimize": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 0},
                "grad_tol": _NUM,
                "step_rule": {"enum": ["armijo", "bb", "fixed"]},
                "step0": _NUM,
                "init": {"enum": ["zero", "boundary", "uniaxial"]},
                "init_s": _NUM,
                "init_n": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
            },
        },
        "field": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["zero", "uniaxial", "trig", "snapshot"]},
                "s": _NUM,
                "n": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                "path": {"type": "string"},
            },
        },
        "functional": {"enum": ["f_eps", "f_0"]},
        "study": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {
                    "enum": [
                        "volume",
                        "flat_norm",
                        "j_convergence",
                        "j_s_decay",
                        "minimizer_convergence",
                        "phase_tuning",
                        "extension_bound",
                    ]
                },
                "expected_order": _NUM,
                "order_tol": _NUM,
                "min_order": _NUM,
                "min_slope": _NUM,
                "slack": _NUM,
                "a_eff_values": {"type": "array", "items": _NUM},
                "boundary_s": _NUM,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {
                    "type": "array",
                    "items": {"enum": ["csv", "json", "obj", "figures", "snapshot"]},
                },
            },
        },
    },
}

_EXIT_VALIDATION = 2
_EXIT_DIVERGED = 3
_EXIT_STUDY_FAILED = 4


def load_config(path):
    with open(path) as fh:
        cfg = json.load(fh)
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        key = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"config key '{key}': {exc.message}") from exc
    return cfg


def _scaffold_params(cfg, eps=None):
    sc = cfg["scaffold"]
    dom = sc.get("domain", {"lo": [0.0, 0.0, 0.0], "hi": [1.0, 1.0, 1.0]})
    box = Box(tuple(dom["lo"]), tuple(dom["hi"]))
    eps = eps if eps is not None else sc.get("eps")
    if eps is None:
        raise ValidationError("config key 'scaffold/eps': a single eps is required here")
    return ScaffoldParams(
        eps, sc["alpha"], sc.get("p", 1.0), sc.get("q", 1.0), sc.get("r", 1.0), box
    )


def _eps_list(cfg):
    sc = cfg["scaffold"]
    if "eps_list" in sc:
        return tuple(sc["eps_list"])
    if "eps" in sc:
        return (sc["eps"],)
    raise ValidationError("config key 'scaffold': needs eps or eps_list")


def _bulk_model(cfg):
    b = cfg.get("bulk", {"variant": "rp", "a": 1.0})
    if b["variant"] == "ldg":
        return LdgBulk(b["a"], b["b"], b["c"])
    if b["variant"] == "rp":
        return RpBulk(b["a"])
    return GenBulk(tuple(b["coeffs"]))


def _surface_model(cfg, p, q, r):
    s = cfg.get("surface")
    if s is None:
        return RpSurface(a=0.0, a_eff=1.0, p=p)
    if s["variant"] == "ldg":
        return LdgSurface(s["a"], s["a_eff"], s["b"], s["b_eff"], s["c"], s["c_eff"], p)
    if s["variant"] == "rp":
        return RpSurface(s["a"], s["a_eff"], p)
    if s["variant"] == "gen":
        return GenSurface(tuple(s["coeffs"]), p)
    return AsymSurface(s["a"], s["a_eff"], s["b"], s["b_eff"], s["c"], s["c_eff"], p, q, r)


def _elastic(cfg):
    e = cfg.get("elastic", {"L1": 1.0, "L2": 0.0, "L3": 0.0})
    return ElasticParams(e["L1"], e["L2"], e["L3"])


def _field_qfun(cfg):
    f = cfg.get("field", {"kind": "zero"})
    if f["kind"] == "zero":
        return harness.ANALYTIC_FIELDS["zero"], QTensor.zero()
    if f["kind"] == "trig":
        return harness.trig_field, None
    if f["kind"] == "uniaxial":
        t = uniaxial(UniaxialSpec(f["s"], tuple(f["n"])))
        return harness.constant_field(t), t
    raise ValidationError("config key 'field/kind': snapshot fields are handled separately")


def _grid_for_params(cfg, params):
    from .field import Grid, required_resolution
    import math

    g = cfg.get("grid", {})
    size = params.domain.size
    if "n" in g:
        n = g["n"]
    else:
        hmax = required_resolution(params)
        n = int(math.ceil(size[0] / hmax))
    cap = g.get("max_voxels", 96**3)
    if n**3 > cap:
        raise ValidationError(f"grid {n}^3 exceeds max_voxels={cap}")
    return Grid(params.domain, n, n, n)


def _minimize_config(cfg):
    m = cfg.get("minimize", {})
    return MinimizeConfig(
        max_iters=m.get("max_iters", 2000),
        grad_tol=m.get("grad_tol", 1e-6),
        step_rule=m.get("step_rule", "armijo"),
        step0=m.get("step0", 1.0),
        init=m.get("init", "boundary"),
    )


def _outdir(cfg, args):
    out = args.out or cfg.get("output", {}).get("dir", ".")
    os.makedirs(out, exist_ok=True)
    return out


def _formats(cfg):
    return set(cfg.get("output", {}).get("formats", ["csv", "json", "figures"]))


def cmd_scaffold(cfg, args):
    out = _outdir(cfg, args)
    h = config_hash(cfg)
    params = _scaffold_params(cfg)
    sc = build_scaffold(params)
    summary = sc.summary()
    summary["config_hash"] = h
    with open(os.path.join(out, f"scaffold_{h}.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if "obj" in _formats(cfg):
        sc.export_obj(os.path.join(out, f"scaffold_{h}.obj"), header=f"config_hash={h}")
    print(f"scaffold_{h}.json written to {out}")
    return 0


def cmd_eval(cfg, args):
    out = _outdir(cfg, args)
    h = config_hash(cfg)
    params = _scaffold_params(cfg)
    sc = build_scaffold(params)
    grid = _grid_for_params(cfg, params)
    elastic = _elastic(cfg)
    bulk = _bulk_model(cfg)
    surface = _surface_model(cfg, params.p, params.q, params.r)
    include_s = cfg.get("surface", {}).get("include_s_faces", False)
    include_const = cfg.get("surface", {}).get("include_rp_constant", False)

    fspec = cfg.get("field", {"kind": "zero"})
    if fspec["kind"] == "snapshot":
        f = load_field(fspec["path"], scaffold=sc)
        f0 = load_field(fspec["path"], scaffold=None)
        qfun = None
    else:
        qfun, _ = _field_qfun(cfg)
        f = make_field(grid, scaffold=sc, g=qfun, init="zero")
        f.values[...] = qfun(grid.center_points())
        f0 = make_field(grid, scaffold=None, g=qfun, init="zero")
        f0.values[...] = qfun(grid.center_points())

    en = ScaffoldEnergy(elastic, bulk, surface, sc, include_s_faces=include_s)
    comp = en.components(f)
    hom = HomogenisedEnergy(
        elastic, bulk, surface, params.p, params.q, params.r, include_rp_constant=include_const
    )
    comp0 = hom.components(f0)
    result = {
        "config_hash": h,
        "f_eps": comp,
        "f_0": comp0,
    }
    path = os.path.join(out, f"eval_{h}.json")
    with open(path, "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"eval_{h}.json written to {out}")
    return 0


def cmd_minimize(cfg, args):
    out = _outdir(cfg, args)
    h = config_hash(cfg)
    functional = cfg.get("functional", "f_eps")
    elastic = _elastic(cfg)
    bulk = _bulk_model(cfg)
    mini = _minimize_config(cfg)

    fspec = cfg.get("field", {"kind": "zero"})
    params = _scaffold_params(cfg)
    surface = _surface_model(cfg, params.p, params.q, params.r)
    grid = _grid_for_params(cfg, params)
    if functional == "f_eps":
        sc = build_scaffold(params)
        energy = ScaffoldEnergy(
            elastic,
            bulk,
            surface,
            sc,
            include_s_faces=cfg.get("surface", {}).get("include_s_faces", False),
        )
    else:
        sc = None
        energy = HomogenisedEnergy(
            elastic,
            bulk,
            surface,
            params.p,
            params.q,
            params.r,
            include_rp_constant=cfg.get("surface", {}).get("include_rp_constant", False),
        )

    m = cfg.get("minimize", {})
    if fspec["kind"] == "snapshot":
        f = load_field(fspec["path"], scaffold=sc)
    else:
        if fspec["kind"] == "uniaxial":
            g = uniaxial(UniaxialSpec(fspec["s"], tuple(fspec["n"])))
        else:
            g = QTensor.zero()
        init_tensor = None
        if m.get("init") == "uniaxial":
            init_tensor = uniaxial(
                UniaxialSpec(m.get("init_s", 1.0), tuple(m.get("init_n", (1.0, 0.0, 0.0))))
            )
        f = make_field(
            grid, scaffold=sc, g=g, init=m.get("init", "boundary"), init_tensor=init_tensor
        )

    final, rep = minimize(f, mini, energy)
    result = {
        "config_hash": h,
        "functional": functional,
        "iterations": rep.iterations,
        "final_energy": rep.final_energy,
        "grad_sup": rep.grad_sup,
        "converged": rep.converged,
        "energy_evals": rep.n_evals,
    }
    with open(os.path.join(out, f"minimize_{h}.json"), "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if "snapshot" in _formats(cfg):
        from .field import save_field

        save_field(final, os.path.join(out, f"field_{h}.bin"), extra={"config_hash": h})
    print(
        f"minimize_{h}.json written to {out} "
        f"(iters={rep.iterations}, energy={rep.final_energy:.6g})"
    )
    return 0


def _sweep_config(cfg):
    sc = cfg["scaffold"]
    dom = sc.get("domain", {"lo": [0.0, 0.0, 0.0], "hi": [1.0, 1.0, 1.0]})
    return SweepConfig(
        eps_list=_eps_list(cfg),
        alpha=sc["alpha"],
        p=sc.get("p", 1.0),
        q=sc.get("q", 1.0),
        r=sc.get("r", 1.0),
        domain=Box(tuple(dom["lo"]), tuple(dom["hi"])),
        seed=cfg.get("seed", 0),
        max_voxels=cfg.get("grid", {}).get("max_voxels", 96**3),
    )


def cmd_study(cfg, args):
    out = _outdir(cfg, args)
    study = cfg["study"]
    name = study["name"]
    sweep = _sweep_config(cfg)

    if name == "volume":
        report = harness.study_volume(
            sweep,
            expected_tol=study.get("order_tol", 0.1),
        )
    elif name == "flat_norm":
        report = harness.study_flat_norm(sweep, min_slope=study.get("min_slope", 0.85))
    elif name == "j_convergence":
        model = _surface_model(cfg, sweep.p, sweep.q, sweep.r)
        report = harness.study_j_convergence(
            sweep,
            model=model,
            expected_order=study.get("expected_order"),
            order_tol=study.get("order_tol"),
            min_order=study.get("min_order"),
        )
    elif name == "j_s_decay":
        model = _surface_model(cfg, sweep.p, sweep.q, sweep.r)
        report = harness.study_j_s_decay(sweep, model=model, min_slope=study.get("min_slope", 1.0))
    elif name == "minimizer_convergence":
        s = study.get("boundary_s", 0.5)
        g = uniaxial(UniaxialSpec(s, (1.0, 0.0, 0.0)))
        report = harness.study_minimizer_convergence(
            sweep,
            _elastic(cfg),
            _bulk_model(cfg),
            _surface_model(cfg, sweep.p, sweep.q, sweep.r),
            g,
            mini=_minimize_config(cfg),
            slack=study.get("slack", 0.10),
        )
    elif name == "phase_tuning":
        report = harness.study_phase_tuning(
            sweep,
            _elastic(cfg),
            _bulk_model(cfg),
            study["a_eff_values"],
            mini=_minimize_config(cfg),
        )
    elif name == "extension_bound":
        report = harness.study_extension_bound(sweep)
    else:  # pragma: no cover - schema blocks this
        raise ValidationError(f"unknown study {name!r}")

    fmts = _formats(cfg)
    base = os.path.join(out, f"report_{name}_{report.config['hash'][:8]}")
    if "csv" in fmts:
        report.to_csv(base + ".csv")
    if "json" in fmts:
        report.to_json(base + ".json")
    if "figures" in fmts:
        plots.render_study(report, base + ".png")
    status = "PASS" if report.passed else "FAIL"
    print(f"study {name}: {status} -> {base}.*")
    return 0 if report.passed else _EXIT_STUDY_FAILED


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nemhom",
        description="Microlattice nematic composites: geometry, energies, sweep studies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("scaffold", cmd_scaffold),
        ("eval", cmd_eval),
        ("minimize", cmd_minimize),
        ("study", cmd_study),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON configuration file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="advisory; results are reproducible independent of thread count",
        )
        p.set_defaults(handler=fn)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.threads is not None:
            cfg["threads"] = args.threads
        np.random.seed(cfg.get("seed", 0))
        return args.handler(cfg, args)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_VALIDATION
    except DivergedError as exc:
        print(f"diverged: {exc} {exc.diagnostics}", file=sys.stderr)
        return _EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())

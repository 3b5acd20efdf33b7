"""Command-line entry point.

Exit codes: 0 pass/feasible/stable, 1 fail/infeasible/unstable, 2 usage or
input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import bounds as bd
from .dataset import DroopDataset, dumps
from .freqresp import default_grid, log_grid
from .ident import run_sweep
from .lines import UncertaintyWeight, default_weight, extract_line_bounds, mu_dc
from .oracle import (assemble_closed_loop, draw_certified_unit, laplacian, load_network, random_network,
                     spectrum, unit_from_dict)
from .stability import BusContext, NetworkEnvelope, certify_unit, gamma_bar

log = logging.getLogger("droopcert")

OUT_ENV = "DROOPCERT_OUT"
EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {path}")
    try:
        text = p.read_text(encoding="utf-8")
        cfg = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise InputError(f"cannot parse config {path}: {exc}") from exc
    if cfg is None:
        return {}
    if not isinstance(cfg, dict):
        raise InputError("config must be a mapping")
    return cfg


def parse_grid(text: str | None, cfg: dict):
    if text is None and "grid" not in cfg:
        return default_grid()
    try:
        if text is not None:
            fmin, fmax, n = text.split(",")
            return log_grid(float(fmin), float(fmax), int(n))
        g = cfg["grid"]
        return log_grid(float(g["f_min"]), float(g["f_max"]), int(g["n"]))
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid grid specification: {exc}") from exc


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj) + "\n", encoding="utf-8")


def _load_dataset(args, cfg: dict) -> DroopDataset:
    path = args.dataset or cfg.get("dataset")
    if path is None:
        raise InputError("no dataset given (--dataset or 'dataset' in config)")
    if not Path(path).is_file():
        raise InputError(f"dataset file not found: {path}")
    try:
        return DroopDataset.load(path)
    except json.JSONDecodeError as exc:
        raise InputError(f"dataset is not valid JSON: {exc}") from exc


def envelope_from_config(cfg: dict) -> NetworkEnvelope:
    e = cfg.get("envelope", {})
    rho = float(e.get("rho", 0.1))
    omega0 = float(e.get("omega0", 1.0))
    unc = e.get("uncertainty") or {}
    if "share" in unc:
        w = default_weight(rho, omega0, float(unc["share"]), float(unc.get("omega_delta", 1.0)))
    else:
        w = UncertaintyWeight(float(unc.get("beta", 0.0)), float(unc.get("omega_delta", 1.0)))
    return NetworkEnvelope(
        ell_min=float(e.get("ell_min", 0.197)),
        e_max=int(e.get("e_max", 2)),
        V_max=float(e.get("V_max", 1.0)),
        omega0=omega0,
        rho=rho,
        uncertainty=w,
    )


def _bus_context(cfg: dict, env: NetworkEnvelope) -> BusContext:
    gamma = cfg.get("gamma")
    return BusContext(float(gamma) if gamma is not None else gamma_bar(env), float(cfg.get("psi", 1.0)))


def _deg(cfg: dict, key: str, default: float) -> float:
    return math.radians(float(cfg.get(key, default)))


# commands

def cmd_identify(args, cfg: dict) -> int:
    if "unit" not in cfg:
        raise InputError("config needs a 'unit' section with kind and params")
    unit = unit_from_dict(cfg["unit"])
    grid = parse_grid(args.grid, cfg)
    ds = run_sweep(unit, grid, unit_id=cfg["unit"].get("name", unit.name))
    out = _out_dir(args)
    ds.save(out / "dataset.json")
    ds.write_bode_csv(out / "bode.csv")
    failed = [s.f_hz for s in ds.samples if not s.ok]
    print(f"identified {len(ds) - len(failed)}/{len(ds)} points -> {out / 'dataset.json'}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_certify(args, cfg: dict) -> int:
    ds = _load_dataset(args, cfg)
    env = envelope_from_config(cfg)
    ctx = _bus_context(cfg, env)
    robust = args.robust or bool(cfg.get("robust", False))
    res = certify_unit(ds, env, ctx, robust=robust)
    out = _out_dir(args)
    _write_json(out / "certificate.json", res.to_dict())
    res.write_nyquist_csv(out / "nyquist.csv")
    if res.feasible:
        lo, hi = (math.degrees(a) for a in res.alpha_interval)
        print(f"feasible: alpha in ({lo:.3f}, {hi:.3f}) deg")
        return EXIT_OK
    print(f"infeasible: {res.violations[0][1]} at {res.violations[0][0]:g} Hz")
    return EXIT_FAIL


def build_template(cfg: dict, ds: DroopDataset | None, env: NetworkEnvelope) -> bd.BoundTemplate:
    t = cfg.get("template", {})
    rho = env.rho
    eps_l = float(t.get("eps_l_rel", 0.2)) * mu_dc(rho, env.omega0)
    lb = extract_line_bounds(rho, env.omega0, eps_l, _deg(t, "delta_l_deg", 4.5), _deg(t, "nu_l_deg", 24.5))
    ctx = _bus_context(cfg, env)
    case = t.get("case", "low_gain")
    if case == "passive":
        alpha = math.pi / 2 - _deg(t, "delta_alpha_deg", 10.0)
        return bd.passive_template(lb, ctx, alpha)
    if case != "low_gain":
        raise InputError(f"unknown template case {case!r}")
    alpha = _deg(t, "alpha_deg", 15.0)
    delta_eps = _deg(t, "delta_eps_deg", 0.0) if "delta_eps_deg" in t else None
    mode = t.get("boundaries", "prescribed")
    if mode == "dataset":
        if ds is None:
            raise InputError("dataset-aware boundaries need a dataset")
        f_a, f_dbl = bd.boundary_freqs_low_gain(ds, lb, alpha)
        f_a = min(f_a, f_dbl)
    elif mode == "prescribed":
        pf_a, pf_dbl = bd.prescribed_boundaries(lb, alpha)
        f_a = float(t.get("f_alpha", pf_a))
        f_dbl = float(t.get("f_dblprime", pf_dbl))
    else:
        raise InputError(f"unknown boundary mode {mode!r}")
    return bd.low_gain_template(lb, ctx, alpha, f_a, f_dbl, delta_eps)


def cmd_bounds(args, cfg: dict) -> int:
    ds = _load_dataset(args, cfg)
    if not ds.valid_samples():
        raise InputError("dataset has no valid samples")
    env = envelope_from_config(cfg)
    tpl = build_template(cfg, ds, env)
    rep = bd.check_against_template(ds, tpl)
    out = _out_dir(args)
    _write_json(out / "template.json", tpl.to_dict())
    _write_json(out / "compliance.json", rep.to_dict())
    bd.write_overlay_csv(out / "overlay.csv", ds, tpl)
    if args.svg:
        bd.write_overlay_svg(out / "overlay.svg", ds, tpl)
    bad = [r.name for r in rep.per_segment if r.violations]
    print("template: pass" if rep.passed else f"template: fail in {', '.join(bad)}")
    return EXIT_OK if rep.passed else EXIT_FAIL


def perf_from_config(cfg: dict) -> bd.PerfSpec:
    p = dict(cfg.get("perf", {}))
    if "f_c" not in p:
        if "H" in p and "D" in p:
            p["f_c"] = bd.cutoff_frequency(float(p.pop("H")), float(p.pop("D")), p.pop("fc_mode", "d_over_h"))
        else:
            raise InputError("perf section needs f_c or H and D")
    for k in ("H", "D", "fc_mode"):
        p.pop(k, None)
    if "delta_d_deg" in p:
        p["delta_d"] = math.radians(float(p.pop("delta_d_deg")))
    return bd.PerfSpec(**{k: float(v) for k, v in p.items()})


def cmd_perf(args, cfg: dict) -> int:
    ds = _load_dataset(args, cfg)
    spec = perf_from_config(cfg)
    reps = bd.perf_check(ds, spec)
    out = _out_dir(args)
    _write_json(out / "perf.json", {k: r.to_dict() for k, r in reps.items()})
    for k, r in reps.items():
        print(f"{k}: {'pass' if r.passed else 'fail'}")
    return EXIT_OK if all(r.passed for r in reps.values()) else EXIT_FAIL


def _axis(spec: dict) -> tuple[str, list[float]]:
    if "values" in spec:
        vals = [float(v) for v in spec["values"]]
    else:
        vals = list(np.linspace(float(spec["min"]), float(spec["max"]), int(spec["n"])))
    return spec["name"], vals


def cmd_minl(args, cfg: dict) -> int:
    m = cfg.get("minl")
    if not m:
        raise InputError("config needs a 'minl' section")
    fixed = dict(m.get("fixed", {}))
    if "alpha_deg" in fixed:
        fixed["alpha"] = math.radians(float(fixed.pop("alpha_deg")))
    a1, a2 = _axis(m["axis1"]), _axis(m["axis2"])
    vals = bd.contour_grid(m.get("formula", "transient"), a1, a2, fixed)
    out = _out_dir(args)
    bd.write_contour_csv(out / "contour.csv", a1, a2, vals)
    _write_json(out / "contour.json", {"formula": m.get("formula", "transient"), a1[0]: a1[1], a2[0]: a2[1],
                                       "ell_min": vals.tolist()})
    print(f"ell_min range [{vals.min():.6g}, {vals.max():.6g}] over {vals.size} points")
    return EXIT_OK


def cmd_oracle(args, cfg: dict) -> int:
    out = _out_dir(args)
    if args.network or cfg.get("network"):
        path = args.network or cfg["network"]
        if not Path(path).is_file():
            raise InputError(f"network file not found: {path}")
        graph, units = load_network(path)
        alpha = None
    else:
        env = envelope_from_config(cfg)
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        psi = float(cfg.get("psi", 1.0))
        alpha = _deg(cfg, "alpha_deg", 50.0)
        lo, hi = cfg.get("bus_range", [2, 6])
        graph = random_network(seed, (int(lo), int(hi)), env, psi=psi)
        rng = np.random.default_rng([seed, 1])
        grid = parse_grid(args.grid, cfg)
        units = [draw_certified_unit(rng, env, alpha, grid, psi) for _ in range(graph.n_bus)]
    rep = spectrum(assemble_closed_loop(graph, units))
    lam_max = float(np.linalg.eigvalsh(laplacian(graph)).max()) if graph.edges else 0.0
    result = rep.to_dict()
    result.update({"network": graph.to_dict(), "units": [u.name for u in units], "laplacian_lambda_max": lam_max})
    if alpha is not None:
        result["alpha_common"] = alpha
    _write_json(out / "spectrum.json", result)
    print(f"{'stable' if rep.stable else 'unstable'}: max real part {rep.max_real_excl_ref:.6g}")
    return EXIT_OK if rep.stable else EXIT_FAIL


COMMANDS = {
    "identify": cmd_identify,
    "certify": cmd_certify,
    "bounds": cmd_bounds,
    "perf": cmd_perf,
    "minl": cmd_minl,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="droopcert", description="Dynamic droop identification and certification")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or cwd)")
    common.add_argument("--grid", help="frequency grid fmin,fmax,n in Hz")
    helps = {
        "identify": "run the probing sweep on an analytic unit model",
        "certify": "check the half-plane stability condition on a dataset",
        "bounds": "check a dataset against a Bode template",
        "perf": "check a dataset against the performance specification",
        "minl": "evaluate minimum line inductance on a parameter grid",
        "oracle": "closed-loop spectrum of a network",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, parents=[common], help=text)
        if name in ("certify", "bounds", "perf"):
            p.add_argument("--dataset", help="droop dataset JSON")
        if name == "certify":
            p.add_argument("--robust", action="store_true", help="include line-uncertainty disks")
        if name == "bounds":
            p.add_argument("--svg", action="store_true", help="also write an SVG Bode overlay")
        if name == "oracle":
            p.add_argument("--network", help="network description JSON")
            p.add_argument("--seed", type=int, help="seed for a random certified network")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    for attr in ("dataset", "robust", "svg", "network", "seed"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except (InputError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

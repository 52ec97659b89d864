"""Command-line entry point: ``rtnmpc {bench,collect,train,track,info}``.

Every subcommand writes its outputs into ``--out`` together with one
``manifest.json`` recording the command line, the fully resolved
configuration, the seed, the toolkit version and SHA-256 digests of all
outputs. Exit codes: 0 ok, 1 runtime failure, 2 usage or configuration
error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import BenchSpec, run_sweep
from .config import CONFIG_NAMES, load_default, load_toml, merge
from .dynamics import QuadParams, QuadrotorModel
from .exceptions import ConfigurationError, RtnMpcError, UnsupportedOperationError
from .neural.io import load_dataset, load_model, save_dataset, save_model, sidecar_path
from .neural.training import TrainConfig, train_residual
from .ocp import OcpConfig, PhaseTimes, RtiController
from .residual import NetworkResidual
from .sim import CollectConfig, SimConfig, Trajectory, collect_and_label, collect_flights, run_closed_loop, \
    tracking_error, truncate_dataset

log = logging.getLogger("rtnmpc")


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _overrides(pairs):
    """``section.key=value`` strings into a nested dict; values parsed as JSON when possible."""
    out = {}
    for pair in pairs or []:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigurationError(f"override {pair!r} must look like section.key=value")
        key, value = pair.split("=", 1)
        section, name = key.split(".", 1)
        out.setdefault(section, {})[name] = _parse_value(value)
    return out


def _load(path, name):
    return load_toml(path) if path else load_default(name)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_manifest(out_dir, command, argv, config, seed, outputs):
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": _jsonable(config),
        "seed": seed,
        "version": __version__,
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
    }
    path = Path(out_dir) / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _csv_list(text, cast=int):
    return [cast(v) for v in text.split(",") if v.strip()] if text else None


# ---------------------------------------------------------------------------
# subcommands


def cmd_bench(args):
    cfg = merge(_load(args.spec, "bench"), _overrides(args.set))
    spec = BenchSpec.from_config(cfg, widths=_csv_list(args.widths), depths=_csv_list(args.depths),
                                 modes=_csv_list(args.modes, str), repetitions=args.repetitions,
                                 warmup=args.warmup, seed=args.seed)
    if args.no_baseline:
        spec.include_baseline = False
    if args.parallel:
        spec.parallel = True
    out = Path(args.out)
    path = out / args.output
    rows = run_sweep(spec, path)
    for row in rows:
        print(f"depth {row['depth']:>2} width {row['width']:>4} {row['mode']:>5}: "
              f"{row['median_total_ms']:8.3f} ms  {row['freq_hz']:8.1f} Hz  "
              f"equivalent={row['equivalence_pass']}")
    resolved = {"bench": {k: getattr(spec, k) for k in spec.__dataclass_fields__}}
    return resolved, spec.seed, [path]


def _quad_setup(args, ocp_over=None):
    quad_cfg = merge(_load(args.quad, "quad"), _overrides(args.set))
    params = QuadParams.from_config(quad_cfg)
    plant = QuadrotorModel(params)
    ocp_cfg = merge(_load(args.ocp, "ocp_quad"), _overrides(args.set))
    ocp = OcpConfig.from_config(ocp_cfg, plant, **(ocp_over or {}))
    sim_cfg = merge(_load(args.sim, "sim"), _overrides(args.set))
    sim = SimConfig.from_config(sim_cfg, **({"seed": args.seed} if args.seed is not None else {}))
    return params, plant, ocp, sim, {"quad": quad_cfg.get("quad", quad_cfg), "ocp": ocp_cfg.get("ocp", ocp_cfg),
                                     "sim": sim_cfg.get("sim", sim_cfg),
                                     "trajectory": sim_cfg.get("trajectory", {})}


def cmd_collect(args):
    params, plant, ocp, sim, resolved = _quad_setup(args)
    col_cfg = merge(_load(args.config, "collect"), _overrides(args.set))
    collect = CollectConfig.from_config(col_cfg, n_points=args.n_points, variant=args.variant,
                                        seed=args.collect_seed)
    resolved["collect"] = {k: getattr(collect, k) for k in collect.__dataclass_fields__}
    shift = sim.control_dt / ocp.dt
    logs = collect_flights(lambda: RtiController(plant, ocp, shift_fraction=shift), sim, collect,
                           resolved["trajectory"])
    out = Path(args.out)
    flights = out / "flights"
    flights.mkdir(parents=True, exist_ok=True)
    outputs = []
    for i, lg in enumerate(logs):
        outputs.append(lg.write_csv(flights / f"flight_{i:03d}.csv"))
    dataset = collect_and_label(logs, variant=collect.variant, params=params, seed=collect.seed)
    dataset = truncate_dataset(dataset, collect.n_points, seed=collect.seed)
    ds_path = out / args.output
    save_dataset(dataset, ds_path)
    outputs += [ds_path, sidecar_path(ds_path)]
    print(f"{len(logs)} flights, {len(dataset)} samples ({len(dataset.val_idx)} validation) -> {ds_path}")
    return resolved, collect.seed, outputs


def _parse_arch(text):
    try:
        depth, width = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigurationError(f"--arch must look like 3x32, got {text!r}") from None
    return depth, width


def cmd_train(args):
    cfg = merge(_load(args.config, "train"), _overrides(args.set))
    tc = TrainConfig.from_config(cfg)
    if args.arch:
        tc.hidden_layers, tc.width = _parse_arch(args.arch)
    if args.epochs is not None:
        tc.max_epochs = args.epochs
    if args.seed is not None:
        tc.seed = args.seed
    dataset = load_dataset(args.data)
    model, history = train_residual(dataset, tc)
    out = Path(args.out)
    model_path = out / args.output
    save_model(model, model_path)
    log_path = out / (model_path.stem + "_training.csv")
    history.write_csv(log_path)
    best = history.rows[history.best_epoch]
    print(f"{model.name}: best epoch {history.best_epoch}, val MSE {best['val_mse']:.6g} -> {model_path}")
    resolved = {"train": {k: getattr(tc, k) for k in tc.__dataclass_fields__}, "data": str(args.data),
                "data_sha256": _sha256(args.data)}
    return resolved, tc.seed, [model_path, sidecar_path(model_path), log_path]


def cmd_track(args):
    over = {}
    if args.mode:
        over["mode"] = args.mode
    if args.order:
        over["taylor_order"] = args.order
    params, plant, ocp, sim, resolved = _quad_setup(args, over)
    traj = Trajectory.from_config(resolved["trajectory"], kind=args.traj, speed=args.speed, radius=args.radius)
    resolved["trajectory"] = {k: getattr(traj, k) for k in traj.__dataclass_fields__}
    residual = None
    if args.model and args.model.lower() != "none":
        model = load_model(args.model)
        if model.input_variant != ocp.residual_variant:
            raise ConfigurationError(
                f"model variant {model.input_variant!r} does not match controller variant {ocp.residual_variant!r}"
            )
        residual = NetworkResidual(model, plant, ocp.residual_variant)
        resolved["model"] = {"path": str(args.model), "sha256": _sha256(args.model), "name": model.name}
    ctrl = RtiController(plant, ocp, residual, shift_fraction=sim.control_dt / ocp.dt)
    flight = run_closed_loop(ctrl, sim, traj)
    out = Path(args.out)
    path = out / args.output
    flight.write_csv(path)
    mean, _ = tracking_error(flight)
    times = PhaseTimes.from_records(flight.telemetry)
    print(f"mean tracking error: {1e3 * mean:.1f} mm over {len(flight)} cycles"
          + (" (CRASHED)" if flight.crashed else ""))
    print("median phase times [ms]: " + ", ".join(f"{k}={v:.3f}" for k, v in times.median_ms.items()))
    return resolved, sim.seed, [path]


def cmd_info(args):
    print(f"rtnmpc {__version__}")
    print("shipped configs: " + ", ".join(CONFIG_NAMES))
    if args.model:
        model = load_model(args.model)
        print(f"model {model.name}: layers {model.layer_sizes}, {model.n_params} parameters, "
              f"activation {model.activation}, variant {model.input_variant}")
    return None


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="rtnmpc", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="config override, repeatable")
        if seed:
            sp.add_argument("--seed", type=int, default=None)

    def quad(sp):
        sp.add_argument("--quad", help="vehicle parameter TOML")
        sp.add_argument("--ocp", help="controller TOML")
        sp.add_argument("--sim", help="simulation TOML")

    b = sub.add_parser("bench", help="runtime sweep with zero-output networks")
    common(b)
    b.add_argument("--spec", help="bench TOML (default: shipped bench.toml)")
    b.add_argument("--widths")
    b.add_argument("--depths")
    b.add_argument("--modes")
    b.add_argument("--repetitions", type=int)
    b.add_argument("--warmup", type=int)
    b.add_argument("--no-baseline", action="store_true")
    b.add_argument("--parallel", action="store_true", help="concurrent configurations, correctness checks only")
    b.add_argument("--output", default="bench.csv")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("collect", help="fly the nominal controller and label residuals")
    common(c)
    quad(c)
    c.add_argument("--config", help="collection TOML")
    c.add_argument("--n-points", type=int)
    c.add_argument("--variant")
    c.add_argument("--collect-seed", type=int)
    c.add_argument("--output", default="dataset.bin")
    c.set_defaults(func=cmd_collect)

    t = sub.add_parser("train", help="train a residual network")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--config", help="training TOML")
    t.add_argument("--arch", help="hidden layers x width, e.g. 3x32")
    t.add_argument("--epochs", type=int)
    t.add_argument("--output", default="model.bin")
    t.set_defaults(func=cmd_train)

    k = sub.add_parser("track", help="closed-loop tracking run")
    common(k)
    quad(k)
    k.add_argument("--traj", choices=("circle", "lemniscate"))
    k.add_argument("--speed", type=float)
    k.add_argument("--radius", type=float)
    k.add_argument("--model", default="none")
    k.add_argument("--mode", choices=("rtn", "naive"))
    k.add_argument("--order", type=int, choices=(1, 2))
    k.add_argument("--output", default="flight.csv")
    k.set_defaults(func=cmd_track)

    i = sub.add_parser("info", help="print version, configs and model summaries")
    i.add_argument("--model")
    i.set_defaults(func=cmd_info)
    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if hasattr(args, "out"):
            Path(args.out).mkdir(parents=True, exist_ok=True)
        result = args.func(args)
        if result is not None:
            resolved, seed, outputs = result
            write_manifest(args.out, args.command, argv, resolved, seed, outputs)
    except (ConfigurationError, UnsupportedOperationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RtnMpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

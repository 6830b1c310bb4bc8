"""Command-line interface: each pipeline stage as a subcommand plus the
end-to-end ``pipeline`` run and an ``eval`` harness.

Exit codes: 0 success, 2 configuration or geometry error, 3 numerical
failure (divergence, registration breakdown, tracking loss), 4 I/O or file
format error.
"""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .arrayio import read_array, write_array
from .core import (ImageSeries, KSpaceData, SamplingMask,
                   adjoint_undersample, make_variable_density_mask,
                   forward_undersample)
from .errors import (ConfigError, DimensionError, DivergenceError,
                     FormatError, RegistrationError, TrackingError)
from .evaluation import (SectorDefinition, extract_curves, rmse,
                         write_curves_csv)
from .periodicity import split_sparse_component
from .phantom import desk_spec, generate_phantom, paper_spec, truth_to_dict
from .pipeline import (PipelineConfig, config_from_dict, load_config,
                       run_pipeline)
from .registration import (RegistrationConfig, fields_to_array,
                           register_series_traced, write_registration_csv)
from .solvers import (SolverConfig, VARIANTS, solve_ls_baseline,
                      solve_stable_rpca, write_history_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _out_dir(args):
    path = Path(args.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_pipeline_config(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict({"version": 1})
    if getattr(args, "rate", None) is not None:
        cfg.rate = args.rate
    if args.seed is not None:
        cfg.seed = args.seed
    if args.preset is not None:
        cfg.preset = args.preset
    if getattr(args, "solver", None) is not None:
        cfg.solver = dataclasses.replace(cfg.solver, variant=args.solver)
    return cfg


def cmd_phantom(args):
    spec = (desk_spec if (args.preset or "desk") == "desk" else paper_spec)(
        seed=args.seed or 0)
    series, truth = generate_phantom(spec)
    out = _out_dir(args)
    write_array(out / "phantom", series.data.astype(np.complex64))
    with open(out / "truth.json", "w") as fh:
        json.dump(truth_to_dict(spec, truth), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"phantom {spec.shape[0]}x{spec.shape[1]}x{spec.shape[2]} "
          f"-> {out / 'phantom'}")
    return EXIT_OK


def cmd_undersample(args):
    series = ImageSeries(read_array(args.input))
    mask = make_variable_density_mask(series.shape, args.rate, args.seed or 0)
    kdata = forward_undersample(series, mask)
    out = _out_dir(args)
    write_array(out / "kspace", kdata.samples.astype(np.complex64))
    write_array(out / "mask", mask.keep)
    print(f"rate {args.rate} (achieved {mask.achieved_rate:.2f}) "
          f"-> {out / 'kspace'}")
    return EXIT_OK


def _read_kspace(kspace_path, mask_path, rate):
    samples = read_array(kspace_path)
    keep = read_array(mask_path)
    mask = SamplingMask(keep, rate)
    return KSpaceData(samples * mask.keep, mask)


def cmd_reconstruct(args):
    cfg = _load_pipeline_config(args)
    kdata = _read_kspace(args.input, args.mask, cfg.rate)
    zero_filled = adjoint_undersample(kdata)
    scale = float(np.abs(zero_filled.data).max())
    if scale == 0:
        raise ConfigError("zero-filled reconstruction is identically zero")
    if cfg.solver.variant == "ls_baseline":
        scaled = dataclasses.replace(
            cfg.solver, lambda_l=cfg.solver.lambda_l * scale,
            lambda_s=cfg.solver.lambda_s * scale)
        dec = solve_ls_baseline(kdata, scaled)
        l, s, z = dec.l.data, dec.s.data, dec.z.data
    else:
        dec = solve_stable_rpca(
            ImageSeries(zero_filled.data / scale), cfg.solver,
            kdata=KSpaceData(kdata.samples / scale, kdata.mask))
        l, s, z = (dec.l.data * scale, dec.s.data * scale, dec.z.data * scale)
    out = _out_dir(args)
    write_array(out / "l", l.astype(np.complex64))
    write_array(out / "s", s.astype(np.complex64))
    write_array(out / "z", z.astype(np.complex64))
    write_history_csv(out / "history.csv", dec.history)
    print(f"{cfg.solver.variant}: {dec.iterations} iterations, "
          f"converged={dec.converged} -> {out / 'l'}")
    return EXIT_OK


def cmd_decompose(args):
    s = read_array(args.input)
    if np.iscomplexobj(s):
        s = s.real
    split = split_sparse_component(
        ImageSeries(s), m=args.m, min_energy_frac=args.min_energy_frac)
    out = _out_dir(args)
    write_array(out / "p", split.p.data.astype(np.float32))
    write_array(out / "q", split.q.data.astype(np.float32))
    with open(out / "periods.json", "w") as fh:
        json.dump({"periods": [[int(p), float(e)] for p, e in split.periods]},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    labels = ", ".join(str(p) for p, _ in split.periods) or "none"
    print(f"detected periods: {labels} -> {out / 'p'}")
    return EXIT_OK


def cmd_register(args):
    series = read_array(args.input)
    if np.iscomplexobj(series):
        series = series.real
    cfg = RegistrationConfig(sigma_diffusion=args.sigma_diffusion,
                             iters=args.iters, stop_delta=args.stop_delta,
                             group_period=args.group_period)
    energy = None
    if args.periodic:
        p = read_array(args.periodic)
        if p.shape != series.shape:
            raise DimensionError(
                f"periodic series shape {p.shape} != input {series.shape}")
        energy = (np.asarray(p, dtype=np.float64) ** 2).sum(axis=(0, 1))
    registered, fields, traces = register_series_traced(
        ImageSeries(series), cfg, motion_energy=energy)
    out = _out_dir(args)
    write_array(out / "l_reg", registered.data.astype(np.float32))
    write_array(out / "fields", fields_to_array(fields))
    write_registration_csv(out / "registration.csv", traces)
    print(f"registered {registered.n_frames} frames -> {out / 'l_reg'}")
    return EXIT_OK


def cmd_pipeline(args):
    cfg = _load_pipeline_config(args)
    result = run_pipeline(cfg, _out_dir(args))
    metrics = result.metrics
    summary = [f"rate {metrics['rate']}", metrics["solver_variant"]]
    if metrics["rmse"] is not None:
        summary.append(f"rmse {metrics['rmse']:.4f}")
        summary.append(
            f"residual motion {metrics['residual_motion_mean_px']:.3f} px")
    print(", ".join(summary) + f" -> {result.out_dir / 'm_mc'}")
    return EXIT_OK


def _sectors_from_file(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    source = doc.get("sectors", doc)
    try:
        return SectorDefinition(
            lv_center=tuple(source["lv_center"]),
            septum_mid=tuple(source["septum_mid"]),
            inner_radius=float(source["inner_radius"]),
            outer_radius=float(source["outer_radius"]))
    except KeyError as exc:
        raise FormatError(f"{path}: missing sector field {exc}") from exc


def cmd_eval(args):
    series = ImageSeries(read_array(args.input))
    reference = ImageSeries(read_array(args.reference))
    value = rmse(series, reference)
    out = _out_dir(args)
    metrics = {"rmse": value}
    if args.sectors:
        sectors = _sectors_from_file(args.sectors)
        curves = extract_curves(series, sectors)
        ref_curves = extract_curves(reference, sectors)
        diff = curves.values - ref_curves.values
        metrics["curve_rmse"] = float(
            np.sqrt(np.mean(diff ** 2)) / np.abs(ref_curves.values).max())
        write_curves_csv(out / "curves.csv", curves)
    with open(out / "eval_metrics.json", "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    line = f"rmse {value:.6f}"
    if "curve_rmse" in metrics:
        line += f", curve rmse {metrics['curve_rmse']:.6f}"
    print(line)
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="RNG seed (default: config value or 0)")
    common.add_argument("--config", default=None,
                        help="pipeline config JSON file")
    common.add_argument("--out-dir", default=".",
                        help="output directory (created if missing)")
    common.add_argument("--preset", choices=("desk", "paper"), default=None,
                        help="phantom preset")

    parser = argparse.ArgumentParser(
        prog="perfmoco",
        description="Motion correction for undersampled dynamic perfusion "
                    "series: reconstruction, periodic/aperiodic splitting, "
                    "and registration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", parents=[common],
                       help="generate a synthetic perfusion phantom")
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("undersample", parents=[common],
                       help="variable-density undersampling of a series")
    p.add_argument("--input", required=True, help="series array stem")
    p.add_argument("--rate", type=int, required=True)
    p.set_defaults(func=cmd_undersample)

    p = sub.add_parser("reconstruct", parents=[common],
                       help="L+S+Z decomposition from undersampled k-space")
    p.add_argument("--input", required=True, help="k-space array stem")
    p.add_argument("--mask", required=True, help="mask array stem")
    p.add_argument("--rate", type=int, default=None)
    p.add_argument("--solver", choices=VARIANTS, default=None)
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("decompose", parents=[common],
                       help="split a sparse component into periodic and "
                            "aperiodic parts")
    p.add_argument("--input", required=True, help="sparse series array stem")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--min-energy-frac", type=float, default=0.05)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("register", parents=[common],
                       help="register a series to a common state")
    p.add_argument("--input", required=True, help="series array stem (L+P)")
    p.add_argument("--periodic", default=None,
                   help="periodic component stem, used for reference "
                        "selection")
    p.add_argument("--group-period", type=int, default=0)
    p.add_argument("--sigma-diffusion", type=float, default=3.0)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--stop-delta", type=float, default=1e-4)
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("pipeline", parents=[common],
                       help="run all stages end to end")
    p.add_argument("--rate", type=int, default=None)
    p.add_argument("--solver", choices=VARIANTS, default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("eval", parents=[common],
                       help="RMSE and sector curves of a series against a "
                            "reference")
    p.add_argument("--input", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--sectors", default=None,
                   help="sector geometry JSON (or a truth.json)")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, RegistrationError, TrackingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

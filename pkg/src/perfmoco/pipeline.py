"""End-to-end three-stage run: undersample, decompose into L + S + Z, split
S into periodic P and aperiodic Q, register L + P to a common respiratory
state, and recombine into the motion-corrected series M_mc.

A run is described by a single JSON config (strict: a ``version`` field is
required and unknown keys are rejected at every level, so a config never
silently drifts from what actually executed).  Every stage's output is
persisted in the package array format; files are written under a
``.partial`` name and renamed on completion, so an aborted run leaves the
failed artifact clearly marked.

Stage conventions fixed here:

* The solver runs on the zero-filled series normalized by its peak
  magnitude (thresholds are scale-dependent); persisted arrays are in the
  input's physical units.
* The periodicity split consumes the real part of S.  Magnitude would fold
  the negative lobes of the motion residue into spurious positive class
  means and corrupt both the period vote and the recombination.
* Registration groups frames by residue class of the detected period when
  the config leaves ``group_period`` at 0.
* With ``warp_q`` enabled (default) the aperiodic residual is warped by the
  same per-frame fields before recombination, so the output equals the
  warped reconstruction L + P + Q frame by frame.  The plain sum L_reg + Q
  re-inserts aperiodic content at its original, uncorrected position.
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arrayio import read_array, write_array
from .core import (ImageSeries, KSpaceData, adjoint_undersample,
                   make_variable_density_mask, forward_undersample)
from .errors import ConfigError
from .evaluation import (extract_curves, residual_motion, rmse,
                         write_curves_csv)
from .periodicity import split_sparse_component
from .phantom import (desk_spec, generate_phantom, paper_spec, truth_to_dict)
from .registration import (RegistrationConfig, fields_to_array, recombine,
                           register_series_traced, write_registration_csv)
from .solvers import (SolverConfig, solve_ls_baseline, solve_stable_rpca,
                      write_history_csv)

CONFIG_VERSION = 1
PRESETS = ("desk", "paper")

SOLVER_DEFAULTS = {
    "lambda_l": 4.0,
    "lambda_s": 0.025,
    "mu": 0.2,
    "beta": 0.5,
    "tau": 0.001,
    "relaxation": 0.5,
    "max_iters": 300,
    "tol": 1e-7,
    "variant": "prox_jacobian",
}

REGISTRATION_DEFAULTS = {
    "alpha": 2.0,
    "sigma_fluid": 1.0,
    "sigma_diffusion": 3.0,
    "iters": 300,
    "stop_delta": 1e-4,
    "reference_strategy": "min_motion_frame",
    "group_period": 0,
}

PERIODICITY_DEFAULTS = {"m": 1, "min_energy_frac": 0.05}

IO_DEFAULTS = {"series": None, "out_dir": None}


@dataclass
class PipelineConfig:
    """Validated description of one pipeline run."""

    rate: int = 2
    seed: int = 0
    preset: str = "desk"
    warp_q: bool = True
    solver: SolverConfig = None
    periodicity: dict = field(default_factory=lambda: dict(PERIODICITY_DEFAULTS))
    registration: RegistrationConfig = None
    io: dict = field(default_factory=lambda: dict(IO_DEFAULTS))

    def __post_init__(self):
        if self.solver is None:
            self.solver = SolverConfig(**SOLVER_DEFAULTS)
        if self.registration is None:
            self.registration = RegistrationConfig(**REGISTRATION_DEFAULTS)
        if self.preset not in PRESETS:
            raise ConfigError(
                f"unknown preset '{self.preset}', expected one of {PRESETS}")
        if not isinstance(self.seed, int):
            raise ConfigError(f"seed must be an integer, got {self.seed!r}")
        self.warp_q = bool(self.warp_q)

    def to_dict(self):
        """JSON-ready echo of the resolved configuration."""
        return {
            "version": CONFIG_VERSION,
            "rate": self.rate,
            "seed": self.seed,
            "preset": self.preset,
            "warp_q": self.warp_q,
            "solver": dataclasses.asdict(self.solver),
            "periodicity": dict(self.periodicity),
            "registration": dataclasses.asdict(self.registration),
            "io": dict(self.io),
        }


def _merge_section(name, defaults, given):
    if given is None:
        return dict(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(
            f"config section '{name}' has unknown keys: {sorted(unknown)}")
    merged = dict(defaults)
    merged.update(given)
    return merged


def config_from_dict(doc):
    """Build a :class:`PipelineConfig` from a parsed JSON document.

    Fail-closed: ``version`` is required and must match, and unknown keys
    anywhere in the document are rejected.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "version" not in doc:
        raise ConfigError("config is missing the required 'version' field")
    if doc["version"] != CONFIG_VERSION:
        raise ConfigError(
            f"unsupported config version {doc['version']!r}, "
            f"expected {CONFIG_VERSION}")
    known = {"version", "rate", "seed", "preset", "warp_q",
             "solver", "periodicity", "registration", "io"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"config has unknown keys: {sorted(unknown)}")
    solver = _merge_section("solver", SOLVER_DEFAULTS, doc.get("solver"))
    registration = _merge_section("registration", REGISTRATION_DEFAULTS,
                                  doc.get("registration"))
    periodicity = _merge_section("periodicity", PERIODICITY_DEFAULTS,
                                 doc.get("periodicity"))
    io = _merge_section("io", IO_DEFAULTS, doc.get("io"))
    return PipelineConfig(
        rate=doc.get("rate", 2),
        seed=doc.get("seed", 0),
        preset=doc.get("preset", "desk"),
        warp_q=doc.get("warp_q", True),
        solver=SolverConfig(**solver),
        periodicity=periodicity,
        registration=RegistrationConfig(**registration),
        io=io,
    )


def load_config(path):
    """Read and validate a pipeline config JSON file."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    return config_from_dict(doc)


def _persist_array(out_dir, name, arr):
    """Write in the array format atomically: ``.partial`` then rename."""
    stem = Path(out_dir) / name
    partial = stem.with_name(stem.name + ".partial")
    write_array(partial, arr)
    for suffix in (".json", ".raw"):
        os.replace(partial.with_suffix(suffix), stem.with_suffix(suffix))


def _persist_json(out_dir, name, doc):
    path = Path(out_dir) / name
    partial = path.with_name(path.name + ".partial")
    with open(partial, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(partial, path)


class _Stage:
    """Context manager that prefixes any stage failure with the stage name."""

    def __init__(self, name):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None or isinstance(exc, KeyboardInterrupt):
            return False
        if isinstance(exc, OSError) and exc.strerror:
            # OSError renders str() from strerror, not args
            exc.strerror = f"[stage {self.name}] {exc.strerror}"
        else:
            exc.args = (f"[stage {self.name}] {exc}",) + exc.args[1:]
        return False


@dataclass
class PipelineResult:
    out_dir: Path
    metrics: dict
    periods: list
    solver_converged: bool


def _phantom_spec(cfg):
    make = desk_spec if cfg.preset == "desk" else paper_spec
    return make(seed=cfg.seed)


def run_pipeline(cfg: PipelineConfig, out_dir) -> PipelineResult:
    """Execute all stages and persist every artifact under ``out_dir``.

    Artifacts: ``kspace`` + ``mask`` (stage 0), ``l``/``s``/``z`` +
    ``history.csv`` (stage 1), ``p``/``q`` + ``periods.json`` (stage 2),
    ``l_reg``/``fields``/``registration.csv`` and ``m_mc`` (stage 3), plus
    ``curves.csv``, ``metrics.json``, ``truth.json`` and the resolved
    ``config.json``.  Identical config and seed give byte-identical outputs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _persist_json(out_dir, "config.json", cfg.to_dict())

    truth = None
    with _Stage("input"):
        if cfg.io.get("series"):
            series = ImageSeries(read_array(cfg.io["series"]))
        else:
            spec = _phantom_spec(cfg)
            series, truth = generate_phantom(spec)
            _persist_json(out_dir, "truth.json", truth_to_dict(spec, truth))

    with _Stage("undersample"):
        mask = make_variable_density_mask(series.shape, cfg.rate, cfg.seed)
        kdata = forward_undersample(series, mask)
        zero_filled = adjoint_undersample(kdata)
        _persist_array(out_dir, "kspace", kdata.samples.astype(np.complex64))
        _persist_array(out_dir, "mask", mask.keep)

    with _Stage("solve"):
        scale = float(np.abs(zero_filled.data).max())
        if scale == 0:
            raise ConfigError("zero-filled reconstruction is identically zero")
        if cfg.solver.variant == "ls_baseline":
            base_cfg = dataclasses.replace(
                cfg.solver, lambda_l=cfg.solver.lambda_l * scale,
                lambda_s=cfg.solver.lambda_s * scale)
            dec = solve_ls_baseline(kdata, base_cfg)
            l_phys = dec.l.data
            s_phys = dec.s.data
            z_phys = dec.z.data
        else:
            dec = solve_stable_rpca(
                ImageSeries(zero_filled.data / scale), cfg.solver,
                kdata=KSpaceData(kdata.samples / scale, mask))
            l_phys = dec.l.data * scale
            s_phys = dec.s.data * scale
            z_phys = dec.z.data * scale
        _persist_array(out_dir, "l", l_phys.astype(np.complex64))
        _persist_array(out_dir, "s", s_phys.astype(np.complex64))
        _persist_array(out_dir, "z", z_phys.astype(np.complex64))
        write_history_csv(out_dir / "history.csv", dec.history)

    with _Stage("split"):
        split = split_sparse_component(
            ImageSeries(s_phys.real), m=cfg.periodicity["m"],
            min_energy_frac=cfg.periodicity["min_energy_frac"])
        _persist_array(out_dir, "p", split.p.data.astype(np.float32))
        _persist_array(out_dir, "q", split.q.data.astype(np.float32))
        _persist_json(out_dir, "periods.json", {
            "periods": [[int(p), float(e)] for p, e in split.periods]})

    with _Stage("register"):
        reg_cfg = cfg.registration
        if reg_cfg.group_period == 0 and split.periods:
            reg_cfg = dataclasses.replace(
                reg_cfg, group_period=int(split.periods[0][0]))
        l_p = ImageSeries(l_phys.real + split.p.data)
        energy = (split.p.data ** 2).sum(axis=(0, 1))
        l_reg, fields, traces = register_series_traced(
            l_p, reg_cfg, motion_energy=energy)
        if cfg.warp_q:
            q_used = np.stack(
                [fields[j].apply(split.q.data[:, :, j])
                 for j in range(series.n_frames)], axis=-1)
        else:
            q_used = split.q.data
        m_mc = recombine(l_reg, ImageSeries(q_used))
        _persist_array(out_dir, "l_reg", l_reg.data.astype(np.float32))
        _persist_array(out_dir, "m_mc", m_mc.data.astype(np.float32))
        _persist_array(out_dir, "fields", fields_to_array(fields))
        write_registration_csv(out_dir / "registration.csv", traces)

    with _Stage("evaluate"):
        metrics = {
            "rate": cfg.rate,
            "solver_variant": cfg.solver.variant,
            "rmse": None,
            "rmse_zero_filled": None,
            "residual_motion_mean_px": None,
            "residual_motion_max_px": None,
            "detected_periods": [int(p) for p, _ in split.periods],
            "solver_converged": bool(dec.converged),
        }
        if truth is not None:
            metrics["rmse"] = rmse(m_mc, truth.clean)
            metrics["rmse_zero_filled"] = rmse(
                ImageSeries(np.abs(zero_filled.data)), truth.clean)
            mean_px, max_px = residual_motion(
                m_mc, truth.trajectory, truth.lv_roi)
            metrics["residual_motion_mean_px"] = mean_px
            metrics["residual_motion_max_px"] = max_px
            curves = extract_curves(m_mc, truth.sector_definition)
            write_curves_csv(out_dir / "curves.csv", curves)
        _persist_json(out_dir, "metrics.json", metrics)

    return PipelineResult(
        out_dir=out_dir, metrics=metrics,
        periods=[(int(p), float(e)) for p, e in split.periods],
        solver_converged=bool(dec.converged))

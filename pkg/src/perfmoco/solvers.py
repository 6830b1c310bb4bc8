"""Stage 1: stable robust-PCA decomposition of the observed series into
low-rank + sparse + noise, via three ADMM update schemes, plus the
iterative-thresholding L+S baseline used for comparison runs.

All three schemes minimize

    lambda_l ||L||_* + lambda_s ||S||_1 + (1 / 2 mu) ||Z||_F^2
    subject to  L + S + Z = M

over the Casorati matrix of the input series, differing only in whether the
three primal updates see each other's fresh values (sequential scheme),
only the previous iterate (parallel scheme), or the previous iterate plus a
small quadratic proximal pull toward it (regularized parallel scheme).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ImageSeries,
    KSpaceData,
    adjoint_undersample,
    soft_threshold,
    svt_with_nuclear_norm,
)
from .errors import ConfigError, DivergenceError

VARIANTS = ("gauss_seidel", "jacobian", "prox_jacobian", "ls_baseline")


@dataclass
class SolverConfig:
    lambda_l: float = 0.005
    lambda_s: float = 0.004
    mu: float = 1.0
    beta: float = 0.5
    tau: float = 0.001
    relaxation: float = 0.5
    max_iters: int = 500
    tol: float = 1e-6
    variant: str = "prox_jacobian"

    def __post_init__(self):
        if self.beta <= 0:
            raise ConfigError(f"beta must be > 0, got {self.beta}")
        if self.tol <= 0:
            raise ConfigError(f"tol must be > 0, got {self.tol}")
        if self.lambda_l <= 0 or self.lambda_s <= 0:
            raise ConfigError("lambda_l and lambda_s must be > 0")
        if self.mu <= 0:
            raise ConfigError(f"mu must be > 0, got {self.mu}")
        if self.tau < 0:
            raise ConfigError(f"tau must be >= 0, got {self.tau}")
        if not 0.0 < self.relaxation <= 1.0:
            raise ConfigError(f"relaxation must be in (0, 1], got {self.relaxation}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant '{self.variant}', expected one of {VARIANTS}")

    @property
    def noise_shrink(self):
        """Multiplier applied in the noise update: mu*beta / (1 + mu*beta)."""
        return self.mu * self.beta / (1.0 + self.mu * self.beta)


@dataclass
class SolverState:
    """One iterate of the splitting: primal blocks L, S, Z and multiplier Y."""

    l: np.ndarray
    s: np.ndarray
    z: np.ndarray
    y: np.ndarray
    l_nuclear: float = 0.0  # nuclear norm of l, cached from the SVT

    @classmethod
    def zeros(cls, shape, dtype):
        return cls(*(np.zeros(shape, dtype=dtype) for _ in range(4)))


@dataclass
class Decomposition:
    """Solver output: the (L, S, Z) split plus multiplier and diagnostics."""

    l: ImageSeries
    s: ImageSeries
    z: ImageSeries
    y: np.ndarray
    history: np.ndarray  # columns: iter, objective, constraint_violation
    converged: bool
    variant: str

    @property
    def iterations(self):
        return self.history.shape[0]

    def reconstruction(self):
        """The denoised series L + S (noise estimate Z discarded)."""
        return ImageSeries(self.l.data + self.s.data,
                           self.l.pixel_spacing, self.l.frame_interval)


def step_gauss_seidel(state: SolverState, m, cfg: SolverConfig) -> SolverState:
    """Sequential update: each block consumes the freshest available values."""
    base = state.y / cfg.beta + m
    l, l_nuc = svt_with_nuclear_norm(base - state.s - state.z, cfg.lambda_l / cfg.beta)
    s = soft_threshold(base - l - state.z, cfg.lambda_s / cfg.beta)
    z = (base - l - s) * cfg.noise_shrink
    y = state.y - cfg.beta * (l + s + z - m)
    return SolverState(l, s, z, y, l_nuc)


def _relax(state, l, s, z, l_nuc, m, cfg):
    """Form the next iterate of a parallel scheme: average the raw block
    updates with the previous point by ``cfg.relaxation``, then take the
    multiplier step from the averaged primals.

    The raw parallel iteration (relaxation=1) amplifies constraint-violating
    perturbations roughly threefold per sweep for every penalty setting, so
    with relaxation=1 these variants diverge on any nonzero input.  Averaging
    leaves the fixed points untouched and makes the sweep nonexpansive.
    """
    a = cfg.relaxation
    if a != 1.0:
        l = (1.0 - a) * state.l + a * l
        s = (1.0 - a) * state.s + a * s
        z = (1.0 - a) * state.z + a * z
        l_nuc = float(np.linalg.svd(l, compute_uv=False).sum())
    y = state.y - cfg.beta * (l + s + z - m)
    return SolverState(l, s, z, y, l_nuc)


def step_jacobian(state: SolverState, m, cfg: SolverConfig) -> SolverState:
    """Parallel update: all three blocks consume only the previous iterate,
    then the relaxation averaging of :func:`_relax` is applied."""
    base = state.y / cfg.beta + m
    l, l_nuc = svt_with_nuclear_norm(base - state.s - state.z, cfg.lambda_l / cfg.beta)
    s = soft_threshold(base - state.l - state.z, cfg.lambda_s / cfg.beta)
    z = (base - state.l - state.s) * cfg.noise_shrink
    return _relax(state, l, s, z, l_nuc, m, cfg)


def step_prox_jacobian(state: SolverState, m, cfg: SolverConfig) -> SolverState:
    """Parallel update with each block's argument pulled toward its own
    previous value by ``tau`` (reduces to :func:`step_jacobian` at tau=0);
    relaxation averaging as in :func:`step_jacobian`."""
    base = state.y / cfg.beta + m
    l, l_nuc = svt_with_nuclear_norm(
        base + cfg.tau * state.l - state.s - state.z, cfg.lambda_l / cfg.beta)
    s = soft_threshold(
        base + cfg.tau * state.s - state.l - state.z, cfg.lambda_s / cfg.beta)
    z = (base + cfg.tau * state.z - state.l - state.s) * cfg.noise_shrink
    return _relax(state, l, s, z, l_nuc, m, cfg)


_STEPS = {
    "gauss_seidel": step_gauss_seidel,
    "jacobian": step_jacobian,
    "prox_jacobian": step_prox_jacobian,
}


def objective_value(state: SolverState, cfg: SolverConfig):
    """Lagrangian-free objective: lambda_l||L||_* + lambda_s||S||_1 + ||Z||_F^2/(2 mu)."""
    return (cfg.lambda_l * state.l_nuclear
            + cfg.lambda_s * float(np.abs(state.s).sum())
            + float(np.vdot(state.z, state.z).real) / (2.0 * cfg.mu))


def solve_stable_rpca(m: ImageSeries, cfg: SolverConfig,
                      kdata: KSpaceData = None) -> Decomposition:
    """Run the configured update scheme from the zero state until the relative
    constraint violation ||L+S+Z-M||_F / ||M||_F drops below ``cfg.tol`` or
    ``cfg.max_iters`` is reached.

    When ``kdata`` is given the decomposition is kept consistent with the
    measurements: after every sweep the working series is rebuilt from the
    reconstruction L+S with the acquired k-space samples re-inserted,
    mirroring the consistency step of the baseline (Z is the discarded
    noise estimate, so it takes no part in the rebuild).  ``m`` may then be
    None, in which case the zero-filled reconstruction of ``kdata`` seeds
    the solve.  Without ``kdata`` the input series is decomposed as-is.
    """
    if cfg.variant == "ls_baseline":
        raise ConfigError("ls_baseline consumes k-space data; use solve_ls_baseline")
    step = _STEPS[cfg.variant]
    if m is None:
        if kdata is None:
            raise ConfigError("need an input series or k-space data")
        m = adjoint_undersample(kdata)
    mat = m.casorati()
    spatial = m.shape[:2]
    keep = None
    if kdata is not None:
        if kdata.shape != m.shape:
            raise ConfigError(
                f"k-space shape {kdata.shape} != series shape {m.shape}")
        keep = kdata.mask.keep.astype(bool)
        mat = mat.astype(np.complex128)
    m_norm = float(np.linalg.norm(mat))
    denom = m_norm if m_norm > 0 else 1.0
    state = SolverState.zeros(mat.shape, mat.dtype)

    history = []
    converged = False
    for k in range(1, cfg.max_iters + 1):
        state = step(state, mat, cfg)
        if not (np.all(np.isfinite(state.l)) and np.all(np.isfinite(state.s))
                and np.all(np.isfinite(state.z)) and np.all(np.isfinite(state.y))):
            raise DivergenceError(
                f"non-finite iterate in {cfg.variant} at iteration {k}",
                iteration=k, variant=cfg.variant)
        if keep is not None:
            recon = state.l + state.s
            full = np.fft.fftshift(
                np.fft.fft2(recon.reshape(spatial + (-1,)), axes=(0, 1),
                            norm="ortho"), axes=(0, 1))
            full[keep] = kdata.samples[keep]
            mat = np.fft.ifft2(
                np.fft.ifftshift(full, axes=(0, 1)), axes=(0, 1), norm="ortho"
            ).reshape(mat.shape)
        violation = float(np.linalg.norm(state.l + state.s + state.z - mat)) / denom
        history.append((k, objective_value(state, cfg), violation))
        if violation <= cfg.tol:
            converged = True
            break
    return Decomposition(
        l=ImageSeries.from_casorati(state.l, spatial, like=m),
        s=ImageSeries.from_casorati(state.s, spatial, like=m),
        z=ImageSeries.from_casorati(state.z, spatial, like=m),
        y=state.y,
        history=np.array(history, dtype=float),
        converged=converged,
        variant=cfg.variant,
    )


def solve_ls_baseline(d: KSpaceData, cfg: SolverConfig) -> Decomposition:
    """L+S comparison method: alternate SVT and soft thresholding with a
    data-consistency step that re-inserts the measured k-space samples.
    No explicit noise term; the returned Z is exactly zero."""
    zero_filled = adjoint_undersample(d)
    spatial = zero_filled.shape[:2]
    mat = zero_filled.casorati()
    keep = d.mask.keep.astype(bool)
    l = np.zeros_like(mat)
    s = np.zeros_like(mat)
    d_norm = float(np.linalg.norm(d.samples))
    d_denom = d_norm if d_norm > 0 else 1.0

    history = []
    converged = False
    recon_prev = None
    for k in range(1, cfg.max_iters + 1):
        l, l_nuc = svt_with_nuclear_norm(mat - s, cfg.lambda_l)
        s = soft_threshold(mat - l, cfg.lambda_s)
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(s))):
            raise DivergenceError(
                f"non-finite iterate in ls_baseline at iteration {k}",
                iteration=k, variant="ls_baseline")
        recon = l + s
        full = np.fft.fftshift(
            np.fft.fft2(recon.reshape(spatial + (-1,)), axes=(0, 1), norm="ortho"),
            axes=(0, 1))
        fit = float(np.linalg.norm(full[keep] - d.samples[keep]))
        objective = (cfg.lambda_l * l_nuc
                     + cfg.lambda_s * float(np.abs(s).sum())
                     + 0.5 * fit ** 2)
        history.append((k, objective, fit / d_denom))
        # data consistency: replace measured entries with the acquired samples
        full[keep] = d.samples[keep]
        mat = np.fft.ifft2(
            np.fft.ifftshift(full, axes=(0, 1)), axes=(0, 1), norm="ortho"
        ).reshape(mat.shape)
        if recon_prev is not None:
            change = float(np.linalg.norm(recon - recon_prev))
            scale = float(np.linalg.norm(recon_prev))
            if change <= cfg.tol * max(scale, 1e-30):
                converged = True
                break
        recon_prev = recon

    return Decomposition(
        l=ImageSeries.from_casorati(l, spatial, like=zero_filled),
        s=ImageSeries.from_casorati(s, spatial, like=zero_filled),
        z=ImageSeries.from_casorati(np.zeros_like(l), spatial, like=zero_filled),
        y=np.zeros_like(l),
        history=np.array(history, dtype=float),
        converged=converged,
        variant="ls_baseline",
    )


def write_history_csv(path, history):
    """Persist an iteration history as ``iter,objective,constraint_violation``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "objective", "constraint_violation"])
        for row in history:
            writer.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2]))])

"""Measurement tools: tip-exponent fits, decay-exponent probes, attractor scans.

Everything here consumes the operator workspace and the semiflow, producing
plain dataclass reports that the command-line layer serializes to CSV.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .dynamics import (SemiflowResult, StepperConfig, energy_gradient,
                       gradient_residual, run_semiflow)
from .fields import Field
from .operators import ModeOperators
from .spaces import h01_dual_norm, mellin_norm

__all__ = [
    "TipFit",
    "LojasiewiczProbe",
    "AbsorbingReport",
    "LinearizationSpectrum",
    "fit_tip_asymptotics",
    "tip_probe",
    "fit_lojasiewicz",
    "lojasiewicz_probe",
    "smooth_random_field",
    "absorbing_set_experiment",
    "linearization_spectrum",
    "thread_count",
]


def thread_count() -> int:
    """Worker count for ensemble experiments (CONEKIT_THREADS, default 1)."""
    raw = os.environ.get("CONEKIT_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"CONEKIT_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


# ------------------------------------------------------------------- tip fits


@dataclass(frozen=True)
class TipFit:
    """Least-squares fit of a radial mode profile near the tip.

    For modes >= 1 the fit is log|u| ~ rho * log s + const (rho_hat is the
    measured branch exponent); for mode 0 the fit is u ~ a + b log s and
    ``log_slope`` = b measures the strength of the logarithmic branch.
    """

    mode: int
    rho_hat: float | None
    log_slope: float | None
    r_squared: float
    n_points: int
    window: tuple[float, float]


def fit_tip_asymptotics(u: Field, mode: int, window: tuple[float, float] | None = None,
                        part: str = "cos") -> TipFit:
    """Fit the tip behavior of one angular mode of a field.

    The fit window defaults to [2 * (first cell center), 0.1 * L], which on a
    tip-graded mesh spans several decades.  Raises ValueError when the window
    holds fewer than 8 cells or the mode amplitude is at roundoff level
    ("mode numerically absent").
    """
    mesh = u.mesh
    if mode > u.max_mode:
        raise ValueError(f"mode {mode} exceeds the field truncation {u.max_mode}")
    profile = u.coeffs[mode, 0 if part == "cos" else 1]
    lo, hi = window if window is not None else (2.0 * mesh.s_min, 0.1 * mesh.length)
    mask = (mesh.centers >= lo) & (mesh.centers < hi)
    n_points = int(mask.sum())
    if n_points < 8:
        raise ValueError(f"fit window [{lo:g}, {hi:g}) holds only {n_points} cells (< 8)")
    seg = profile[mask]
    amp = float(np.abs(seg).max())
    scale = max(1.0, float(np.abs(u.coeffs).max()))
    if amp < 1e-13 * scale:
        raise ValueError(f"mode {mode} numerically absent in the fit window "
                         f"(amplitude {amp:.2e})")
    x = np.log(mesh.centers[mask])
    if mode == 0:
        design = np.column_stack([np.ones_like(x), x])
        coef, *_ = np.linalg.lstsq(design, seg, rcond=None)
        fitted = design @ coef
        ss_res = float(((seg - fitted) ** 2).sum())
        ss_tot = float(((seg - seg.mean()) ** 2).sum())
        r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
        return TipFit(mode=0, rho_hat=None, log_slope=float(coef[1]), r_squared=r2,
                      n_points=n_points, window=(lo, hi))
    good = np.abs(seg) > 0
    x, y = x[good], np.log(np.abs(seg[good]))
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(((y - fitted) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return TipFit(mode=mode, rho_hat=float(slope), log_slope=None, r_squared=r2,
                  n_points=int(good.sum()), window=(lo, hi))


def tip_probe(ops: ModeOperators, mode: int, source_center_frac: float = 0.75,
              source_width_frac: float = 0.08,
              window: tuple[float, float] | None = None) -> tuple[np.ndarray, TipFit]:
    """Solve a Poisson problem forced away from the tip and fit the tip exponent.

    The source is a Gaussian bump centered at source_center_frac * L; near the
    tip the solution is forced onto its regular branch, whose exponent the
    log-log fit recovers.  For mode 0 the source is mean-projected (so the
    flux balance closes) and the fit reports the log-branch amplitude, which
    zero tip flux kills.
    """
    mesh = ops.mesh
    s0 = source_center_frac * mesh.length
    width = source_width_frac * mesh.length
    g = np.exp(-((mesh.centers - s0) / width) ** 2)
    if mode == 0:
        g = g - (mesh.volumes @ g) / mesh.area
        sol = ops.solve_neglap(0, g)
    else:
        sol = ops.solve_helmholtz(mode, 0.0, 1.0, g)
    coeffs = np.zeros((max(mode, 1) + 1, 2, mesh.cells))
    coeffs[mode, 0] = sol
    fit = fit_tip_asymptotics(Field(mesh, coeffs), mode, window=window)
    return sol, fit


# --------------------------------------------------------- decay exponent fit


@dataclass(frozen=True)
class LojasiewiczProbe:
    """Measured energy-gradient scaling exponent along a relaxing trajectory."""

    theta_hat: float
    slope: float
    r_squared: float
    n_samples: int
    energy_limit: float

    @property
    def in_bracket(self) -> bool:
        """Whether theta_hat lies in the expected range (0, 0.55]."""
        return 0.0 < self.theta_hat <= 0.55


def fit_lojasiewicz(energy_gaps: np.ndarray, gradient_norms: np.ndarray) -> tuple[float, float, float]:
    """Regress log(gradient norm) on log(energy gap); returns (theta, slope, r2).

    A gradient inequality ||grad E|| >= c |E - E_inf|^(1-theta) shows up as
    slope = 1 - theta in these coordinates.
    """
    x = np.log(np.asarray(energy_gaps, dtype=float))
    y = np.log(np.asarray(gradient_norms, dtype=float))
    if x.size < 2:
        raise ValueError("need at least two samples")
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float(((y - fitted) ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return 1.0 - float(slope), float(slope), r2


def lojasiewicz_probe(ops: ModeOperators, result: SemiflowResult,
                      drop_last_fraction: float = 0.05,
                      min_samples: int = 10) -> LojasiewiczProbe:
    """Estimate the decay exponent from a finished relaxation run.

    Needs a run with collected snapshots that actually reached equilibrium.
    Samples with energy gap at the roundoff floor (10 eps |E_inf|) are
    discarded, as is the final drop_last_fraction of the remaining samples
    (they sit closest to the noise floor).
    """
    if not result.equilibrium_reached:
        raise ValueError("trajectory did not reach equilibrium; extend t_max or relax eq_tol")
    if not result.snapshots:
        raise ValueError("run was not collected with snapshots")
    e_by_step = {rec.step: rec.energy for rec in result.records}
    e_inf = result.records[-1].energy
    floor = 10.0 * np.finfo(float).eps * abs(e_inf)
    gaps, grads = [], []
    for step, coeffs in result.snapshots:
        gap = e_by_step[step] - e_inf
        if gap <= floor:
            continue
        gaps.append(gap)
        grads.append(gradient_residual(Field(ops.mesh, coeffs.copy()), ops))
    keep = len(gaps) - max(1, int(math.ceil(drop_last_fraction * len(gaps)))) \
        if gaps else 0
    gaps, grads = gaps[:keep], grads[:keep]
    if len(gaps) < min_samples:
        raise ValueError(f"only {len(gaps)} usable samples (< {min_samples}); "
                         "the trajectory spent too little time in the scaling regime")
    theta, slope, r2 = fit_lojasiewicz(np.array(gaps), np.array(grads))
    return LojasiewiczProbe(theta_hat=theta, slope=slope, r_squared=r2,
                            n_samples=len(gaps), energy_limit=e_inf)


# ------------------------------------------------------------ initial sampler


def smooth_random_field(ops: ModeOperators, rng: np.random.Generator,
                        dual_radius: float | None = None,
                        sup_amplitude: float | None = None,
                        mode_decay: float = 2.0) -> Field:
    """Mean-zero random initial data, smooth enough for the fourth-order flow.

    Gaussian coefficients with (1+k)^(-mode_decay) angular decay are passed
    twice through the inverse Laplacian (radial smoothing), mean-projected,
    and rescaled to the requested dual norm or sup amplitude.
    """
    mesh = ops.mesh
    coeffs = rng.standard_normal((ops.max_mode + 1, 2, mesh.cells))
    coeffs[0, 1, :] = 0.0
    coeffs *= ((1.0 + np.arange(ops.max_mode + 1)) ** (-mode_decay))[:, None, None]
    for _ in range(2):
        out = np.empty_like(coeffs)
        for k in range(ops.max_mode + 1):
            stack = coeffs[k].T
            if k == 0:
                stack = stack.copy()
                stack[:, 0] -= (ops.volumes @ stack[:, 0]) / mesh.area
            out[k] = ops.solve_neglap(k, stack).T
        coeffs = out
    coeffs[0, 0, :] -= (mesh.volumes @ coeffs[0, 0]) / mesh.area
    u = Field(mesh, coeffs)
    if dual_radius is not None:
        u = u * (dual_radius / h01_dual_norm(u, ops))
    elif sup_amplitude is not None:
        u = u * (sup_amplitude / u.max_abs())
    return u


# ------------------------------------------------------- absorbing experiment


@dataclass
class AbsorbingReport:
    """Ensemble evidence for an absorbing set: entry levels and post-entry sups."""

    radii: tuple[float, ...]
    seeds_per_radius: int
    level: float
    entry_times: dict       # radius -> list of entry times (one per seed)
    post_sups: dict         # radius -> list of post-entry sup H^1_0 norms
    kappa: dict             # radius -> max post-entry sup over the ensemble
    tip_norm_sup: dict      # radius -> sup of mellin_norm(u, s=0) after entry
    tip_norm_sup_lap: dict  # radius -> same for Lap(u)
    diam_times: np.ndarray
    diameters: dict         # radius -> dual-norm ensemble diameter per record time

    @property
    def kappa_spread(self) -> float:
        """Relative disagreement of the absorbing radius across initial radii."""
        vals = [self.kappa[r] for r in self.radii]
        return (max(vals) - min(vals)) / max(vals)


def absorbing_set_experiment(ops: ModeOperators, cfg: StepperConfig,
                             radii=(1.0, 10.0), seeds_per_radius: int = 4,
                             base_seed: int = 0, level_margin: float = 1.05,
                             mode_decay: float = 2.0,
                             mellin_gamma: float = -0.75) -> AbsorbingReport:
    """Evolve ensembles started on dual-norm spheres and locate a common
    absorbing level for the Dirichlet norm.

    The entry level is level_margin times the largest final Dirichlet norm
    over all runs; each run's entry time is the first record from which the
    norm stays below that level, and kappa is the largest post-entry sup per
    starting radius.  Runs are independent and can execute on CONEKIT_THREADS
    workers without changing results.
    """
    jobs = [(radius, base_seed + i) for radius in radii for i in range(seeds_per_radius)]

    def one_run(job):
        radius, seed = job
        u0 = smooth_random_field(ops, np.random.default_rng(seed),
                                 dual_radius=radius, mode_decay=mode_decay)
        return run_semiflow(ops, u0, cfg, collect_snapshots=True)

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_run, jobs))
    else:
        results = [one_run(job) for job in jobs]

    # align records across runs (equilibrium stops can shorten a run)
    n_rec = min(len(r.records) for r in results)
    times = np.array([rec.t for rec in results[0].records[:n_rec]])
    norms = {job: np.array([rec.h1_seminorm for rec in res.records[:n_rec]])
             for job, res in zip(jobs, results)}
    level = level_margin * max(series[-1] for series in norms.values())

    entry_times = {r: [] for r in radii}
    post_sups = {r: [] for r in radii}
    tip_sup = {r: 0.0 for r in radii}
    tip_sup_lap = {r: 0.0 for r in radii}
    entry_idx = {}
    for job, res in zip(jobs, results):
        radius, _ = job
        series = norms[job]
        suffix = np.maximum.accumulate(series[::-1])[::-1]
        idx = int(np.argmax(suffix <= level))
        if suffix[idx] > level:  # never enters (cannot happen with this level)
            idx = n_rec - 1
        entry_idx[job] = idx
        entry_times[radius].append(float(times[idx]))
        post_sups[radius].append(float(suffix[idx]))
        t_entry = times[idx]
        for step, coeffs in res.snapshots:
            if step * cfg.dt >= t_entry:
                u = Field(ops.mesh, coeffs)
                tip_sup[radius] = max(tip_sup[radius],
                                      mellin_norm(u, 0, mellin_gamma))
                tip_sup_lap[radius] = max(tip_sup_lap[radius],
                                          mellin_norm(ops.apply_laplacian(u), 0, mellin_gamma))

    kappa = {r: max(post_sups[r]) for r in radii}

    # ensemble diameter in the dual norm at common snapshot steps
    common_steps = sorted(set.intersection(
        *[set(step for step, _ in res.snapshots) for res in results]))
    diam_times = np.array([s * cfg.dt for s in common_steps])
    snap_maps = [dict(res.snapshots) for res in results]
    diameters = {}
    for radius in radii:
        sel = [snap_maps[i] for i, job in enumerate(jobs) if job[0] == radius]
        series = []
        for s in common_steps:
            dmax = 0.0
            for i in range(len(sel)):
                for j in range(i + 1, len(sel)):
                    diff = Field(ops.mesh, sel[i][s] - sel[j][s])
                    dmax = max(dmax, h01_dual_norm(diff, ops))
            series.append(dmax)
        diameters[radius] = np.array(series)

    return AbsorbingReport(radii=tuple(radii), seeds_per_radius=seeds_per_radius,
                           level=float(level), entry_times=entry_times,
                           post_sups=post_sups, kappa=kappa,
                           tip_norm_sup=tip_sup, tip_norm_sup_lap=tip_sup_lap,
                           diam_times=diam_times, diameters=diameters)


# --------------------------------------------------- linearization spectrum


@dataclass(frozen=True)
class LinearizationSpectrum:
    """Spectrum of the second variation restricted to the mean-zero subspace."""

    eigenvalues: np.ndarray
    kernel_dim: int
    axisymmetric_path: bool

    def smallest(self, count: int) -> np.ndarray:
        return self.eigenvalues[:count]


def linearization_spectrum(ops: ModeOperators, phi: Field,
                           kernel_tol: float = 1e-6) -> LinearizationSpectrum:
    """Eigenvalues of h -> P(-Lap h + (3 phi^2 - 1) h) on mean-zero fields.

    P is the L^2 projection off constants; the operator is symmetric in the
    volume inner product on that subspace.  For axisymmetric phi the problem
    splits into angular modes and is solved as banded tridiagonal-plus-
    diagonal systems (fast); otherwise a dense matrix over all channels is
    assembled, which is only meant for modest resolutions.
    """
    ops._check_field(phi)
    mesh = ops.mesh
    m = mesh.cells
    scale = max(float(np.abs(phi.coeffs).max()), 1.0)
    axisym = phi.max_mode == 0 or float(np.abs(phi.coeffs[1:]).max()) <= 1e-12 * scale

    if axisym:
        w_diag = 3.0 * phi.coeffs[0, 0] ** 2 - 1.0
        eigs = []
        from scipy.linalg import eigh, eigh_tridiagonal
        for k in range(ops.max_mode + 1):
            diag, sub = ops.neglap_bands(k)
            if k == 0:
                a = np.diag(diag + w_diag) + np.diag(sub, 1) + np.diag(sub, -1)
                nhat = ops.sqrt_volumes / math.sqrt(mesh.area)
                proj = np.eye(m) - np.outer(nhat, nhat)
                big = 10.0 * (np.abs(diag).max() + np.abs(w_diag).max() + 1.0)
                a = proj @ a @ proj + big * np.outer(nhat, nhat)
                vals = eigh(a, eigvals_only=True)
                vals = vals[vals < 0.5 * big]
                eigs.extend(vals.tolist())
            else:
                vals = eigh_tridiagonal(diag + w_diag, sub, eigvals_only=True)
                eigs.extend(np.repeat(vals, 2).tolist())  # cos and sin channels
        evals = np.sort(np.array(eigs))
    else:
        evals = _dense_linearization_eigs(ops, phi)

    ktol = kernel_tol * max(1.0, float(np.abs(evals).max()))
    kernel_dim = int((np.abs(evals) < ktol).sum())
    return LinearizationSpectrum(eigenvalues=evals, kernel_dim=kernel_dim,
                                 axisymmetric_path=axisym)


def _dense_linearization_eigs(ops: ModeOperators, phi: Field) -> np.ndarray:
    """Dense assembly of the projected second variation over all live channels."""
    from scipy.linalg import eigh

    from .fields import channel_weights, coeffs_to_values, values_to_coeffs
    mesh = ops.mesh
    m = mesh.cells
    kmax = ops.max_mode
    w_vals = 3.0 * phi.grid_values() ** 2 - 1.0
    channels = [(0, 0)] + [(k, c) for k in range(1, kmax + 1) for c in (0, 1)]
    n = len(channels) * m
    wch = channel_weights(kmax)
    # diagonal scaling that turns the volume/channel inner product into the dot product
    dvec = np.concatenate([np.sqrt(wch[k, c] * mesh.volumes) for k, c in channels])

    def apply(coeffs):
        out = -ops.apply_laplacian_coeffs(coeffs)
        out += values_to_coeffs(w_vals * coeffs_to_values(coeffs), kmax)
        out[0, 0, :] -= (mesh.volumes @ out[0, 0]) / mesh.area
        return out

    a = np.empty((n, n))
    basis = np.zeros((kmax + 1, 2, m))
    for col in range(n):
        ch, i = divmod(col, m)
        k, c = channels[ch]
        basis[k, c, i] = 1.0 / dvec[col]
        img = apply(basis)
        basis[k, c, i] = 0.0
        a[:, col] = np.concatenate([img[k, c] for k, c in channels]) * dvec
    a = 0.5 * (a + a.T)
    # deflate the constant direction (mode-0 constants are not in the space)
    nhat = np.zeros(n)
    nhat[:m] = np.sqrt(wch[0, 0] * mesh.volumes)
    nhat /= np.linalg.norm(nhat)
    big = 10.0 * float(np.abs(a).max() + 1.0)
    proj = np.eye(n) - np.outer(nhat, nhat)
    a = proj @ a @ proj + big * np.outer(nhat, nhat)
    vals = eigh(a, eigvals_only=True)
    return vals[vals < 0.5 * big]

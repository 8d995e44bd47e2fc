"""Sparse strain fitting by basis pursuit denoising over a mixed dictionary,
per-basis energy accounting, threshold truncation, and backbone
reconstruction error metrics.

Per strain mode i the fit solves the weighted-l1 problem

    min_q  1/2 ||xi_i - Phi_i q||_2^2 + ||gamma_i * q||_1

with an accelerated proximal-gradient scheme (step 1 / Lambda from power
iteration on the Gram matrix, weighted soft-threshold prox, momentum restart
whenever the objective would increase).  Atoms are rescaled to unit
L2([0, L]) norm inside the solver so one gamma value is comparable across
monomials, harmonics and Gaussian bumps; output coefficients refer to the
unnormalized atoms.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyDictionary, LengthMismatch, ValidationError, ZeroEnergy
from .gvs import Atom, BasisDictionary
from .liealg import Pose, dist_so3
from .rodmodel import RodProperties
from .spectra import StrainGrid

# Safety factor on the power-iteration Lipschitz estimate; keeps the
# proximal step non-expansive even when the iteration stops early.
LIPSCHITZ_MARGIN = 1.0 + 1e-6


@dataclass(frozen=True)
class BPDConfig:
    """Sparsity weights and stopping rule of the proximal solver.

    ``gamma`` holds one weight per strain mode, broadcast to that mode's
    atoms; ``gamma_per_atom`` (length n_q) overrides the broadcast.
    """

    gamma: tuple = (0.0,) * 6
    max_iterations: int = 5000
    tolerance: float = 1e-12
    gamma_per_atom: tuple | None = None

    def __post_init__(self):
        gamma = tuple(float(g) for g in self.gamma)
        if len(gamma) != 6 or any(g < 0 for g in gamma):
            raise ValidationError("gamma must be six non-negative weights")
        if not self.tolerance > 0:
            raise ValidationError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        object.__setattr__(self, "gamma", gamma)
        if self.gamma_per_atom is not None:
            per_atom = tuple(float(g) for g in self.gamma_per_atom)
            if any(g < 0 for g in per_atom):
                raise ValidationError("per-atom gamma weights must be >= 0")
            object.__setattr__(self, "gamma_per_atom", per_atom)

    def atom_weights(self, dictionary: BasisDictionary) -> np.ndarray:
        if self.gamma_per_atom is not None:
            if len(self.gamma_per_atom) != dictionary.n_q:
                raise ValidationError("gamma_per_atom length must equal n_q")
            return np.array(self.gamma_per_atom)
        return np.array(self.gamma)[dictionary.column_modes]


@dataclass
class FitResult:
    """Coefficients of one fitted frame plus energy bookkeeping.

    ``per_basis_energy_fraction`` entries are NaN on modes with zero total
    energy; within an energetic mode the fractions sum to 1.
    """

    q: np.ndarray
    residual_norm: float
    per_basis_energy_fraction: np.ndarray
    kept_mask: np.ndarray
    converged: bool
    iterations: int
    objective: float
    dictionary: BasisDictionary
    s_grid: np.ndarray
    target: np.ndarray  # (N, 6) raw strain samples the fit approximates
    stress_free: np.ndarray  # (N, 6) xi* at the sample abscissae
    mode_lipschitz: np.ndarray = field(default_factory=lambda: np.zeros(6))
    objective_history: tuple = ()


def _soft_threshold(z: np.ndarray, thr: np.ndarray) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)


def _power_iteration(gram: np.ndarray, tol: float = 1e-8, max_iter: int = 1000) -> float:
    n = gram.shape[0]
    if n == 1:
        return float(gram[0, 0])
    v = np.ones(n) / np.sqrt(n)
    lam = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v_new = w / norm
        lam_new = float(v_new @ gram @ v_new)
        if abs(lam_new - lam) <= tol * max(abs(lam_new), 1e-30):
            return lam_new
        lam, v = lam_new, v_new
    return lam


def _solve_mode(
    cols: np.ndarray,
    y: np.ndarray,
    gram: np.ndarray,
    corr: np.ndarray,
    gamma: np.ndarray,
    lipschitz: float,
    x0: np.ndarray,
    max_iterations: int,
    tolerance: float,
) -> tuple[np.ndarray, bool, int, float, list[float]]:
    """Accelerated proximal gradient on one mode's normalized problem.

    Gradients use the precomputed Gram matrix; the objective is evaluated
    in residual form 1/2 ||y - Phi x||^2 + gamma |x| so the stopping rule
    resolves changes far below the data norm.
    """

    def objective(x):
        r = y - cols @ x
        return 0.5 * float(r @ r) + float(gamma @ np.abs(x))

    if lipschitz <= 0.0:  # all-zero columns cannot happen with valid atoms
        return x0.copy(), True, 0, objective(x0), [objective(x0)]
    step = 1.0 / (lipschitz * LIPSCHITZ_MARGIN)
    thr = gamma * step
    x = x0.copy()
    y_acc = x.copy()
    t = 1.0
    obj = objective(x)
    history = [obj]
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        x_new = _soft_threshold(y_acc - step * (gram @ y_acc - corr), thr)
        obj_new = objective(x_new)
        if obj_new > obj:
            # momentum restart: plain proximal step from the last accepted x
            t = 1.0
            x_new = _soft_threshold(x - step * (gram @ x - corr), thr)
            obj_new = objective(x_new)
            if obj_new > obj:
                # numerical stagnation: no step can improve the objective
                converged = True
                break
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y_acc = x_new + (t - 1.0) / t_new * (x_new - x)
        delta = obj - obj_new
        x, obj, t = x_new, obj_new, t_new
        history.append(obj)
        if delta <= tolerance * max(abs(obj), 1e-300):
            converged = True
            break
    return x, converged, iterations, obj, history


@dataclass(frozen=True)
class _ModeProblem:
    columns: np.ndarray  # (N, n_i) normalized design block
    gram: np.ndarray
    lipschitz: float
    norms: np.ndarray  # atom L2([0, L]) norms (solver-space rescale factors)
    gamma: np.ndarray


def _mode_problems(
    dictionary: BasisDictionary, s_grid: np.ndarray, config: BPDConfig
) -> list[_ModeProblem]:
    if dictionary.n_q == 0:
        raise EmptyDictionary("basis dictionary has no atoms")
    values = dictionary.atom_values(s_grid)
    gamma_atoms = config.atom_weights(dictionary)
    problems = []
    for mode in range(6):
        sl = dictionary.mode_slice(mode)
        atoms = dictionary.atoms_per_mode[mode]
        if not atoms:
            problems.append(None)
            continue
        if len(atoms) > len(s_grid):
            warnings.warn(
                f"mode {mode}: {len(atoms)} atoms against {len(s_grid)} samples "
                "(underdetermined fit)",
                UserWarning,
                stacklevel=3,
            )
        norms = np.array([np.sqrt(a.l2_integral(dictionary.length)) for a in atoms])
        cols = values[:, sl] / norms
        gram = cols.T @ cols
        problems.append(
            _ModeProblem(cols, gram, _power_iteration(gram), norms, gamma_atoms[sl])
        )
    return problems


def _fit_frame(
    samples: np.ndarray,
    xi_star: np.ndarray,
    dictionary: BasisDictionary,
    problems: list,
    s_grid: np.ndarray,
    config: BPDConfig,
    warm: np.ndarray | None,
) -> FitResult:
    n_q = dictionary.n_q
    q = np.zeros(n_q)
    converged = True
    iterations = 0
    objective = 0.0
    history: list[float] = []
    lipschitz = np.zeros(6)
    for mode in range(6):
        prob = problems[mode]
        if prob is None:
            continue
        sl = dictionary.mode_slice(mode)
        y = samples[:, mode] - xi_star[:, mode]
        corr = prob.columns.T @ y
        x0 = warm[sl] * prob.norms if warm is not None else np.zeros(sl.stop - sl.start)
        x, ok, iters, obj, hist = _solve_mode(
            prob.columns, y, prob.gram, corr, prob.gamma, prob.lipschitz, x0,
            config.max_iterations, config.tolerance,
        )
        q[sl] = x / prob.norms
        converged &= ok
        iterations += iters
        objective += obj
        history.extend(hist)
        lipschitz[mode] = prob.lipschitz
    residual = reconstruction_residual(samples, xi_star, dictionary, s_grid, q)
    fractions = _energy_fractions_of(q, dictionary)
    return FitResult(
        q=q,
        residual_norm=residual,
        per_basis_energy_fraction=fractions,
        kept_mask=np.ones(n_q, dtype=bool),
        converged=bool(converged),
        iterations=iterations,
        objective=objective,
        dictionary=dictionary,
        s_grid=np.asarray(s_grid, dtype=float),
        target=samples.copy(),
        stress_free=xi_star.copy(),
        mode_lipschitz=lipschitz,
        objective_history=tuple(history),
    )


def reconstruction_residual(
    samples: np.ndarray,
    xi_star: np.ndarray,
    dictionary: BasisDictionary,
    s_grid: np.ndarray,
    q: np.ndarray,
) -> float:
    values = dictionary.atom_values(s_grid)
    modes = dictionary.column_modes
    recon = xi_star.copy()
    for j in range(dictionary.n_q):
        recon[:, modes[j]] += values[:, j] * q[j]
    return float(np.linalg.norm(samples - recon))


def bpd_fit(
    samples,
    s_grid,
    dictionary: BasisDictionary,
    rod: RodProperties,
    config: BPDConfig,
    warm_start=None,
) -> FitResult:
    """Fit one frame of strain samples with the weighted-l1 problem.

    ``samples`` is (N, 6) at the abscissae ``s_grid``; the target of the fit
    is ``samples - xi*(s_grid)``.  Each strain mode is solved independently
    (the dictionary is block structured).  A non-converged solve returns the
    best iterate with ``converged = False``.
    """
    samples = np.asarray(samples, dtype=float)
    s_grid = np.asarray(s_grid, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 6 or samples.shape[0] != len(s_grid):
        raise ValidationError("samples must be (N, 6) aligned with s_grid")
    problems = _mode_problems(dictionary, s_grid, config)
    xi_star = rod.stress_free_on(s_grid)
    warm = None if warm_start is None else np.asarray(warm_start, dtype=float)
    return _fit_frame(samples, xi_star, dictionary, problems, s_grid, config, warm)


@dataclass
class SeriesFit:
    """Per-frame fits of a strain time series sharing one dictionary."""

    dictionary: BasisDictionary
    s_grid: np.ndarray
    t_grid: np.ndarray
    frames: list

    @property
    def q_matrix(self) -> np.ndarray:
        return np.stack([f.q for f in self.frames])

    @property
    def mean_energy_fraction(self) -> np.ndarray:
        stacked = np.stack([f.per_basis_energy_fraction for f in self.frames])
        defined = np.isfinite(stacked)
        counts = defined.sum(axis=0)
        sums = np.where(defined, stacked, 0.0).sum(axis=0)
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)

    @property
    def converged(self) -> bool:
        return all(f.converged for f in self.frames)


def fit_series(
    grid: StrainGrid,
    dictionary: BasisDictionary,
    rod: RodProperties,
    config: BPDConfig,
    warm_start: bool = True,
) -> SeriesFit:
    """Fit every time frame of a strain grid, warm-starting from the
    previous frame's coefficients."""
    problems = _mode_problems(dictionary, grid.s_grid, config)
    xi_star = rod.stress_free_on(grid.s_grid)
    frames = []
    warm = None
    for m in range(grid.n_time):
        fit = _fit_frame(
            grid.samples[m], xi_star, dictionary, problems, grid.s_grid, config, warm
        )
        frames.append(fit)
        if warm_start:
            warm = fit.q
    return SeriesFit(dictionary, grid.s_grid.copy(), grid.t_grid.copy(), frames)


# ---------------------------------------------------------------------------
# energy accounting and truncation
# ---------------------------------------------------------------------------


def basis_energy(coefficient: float, atom: Atom, length: float) -> float:
    """Energy q^2 int_0^L b(s)^2 ds of one weighted atom.

    By Parseval this equals the wavenumber-domain energy
    q^2 (1/2pi) int |b(jk)|^2 dk; the spatial integral has closed forms for
    all three atom families (monomials, harmonics, Gaussians via erf).
    """
    return float(coefficient) ** 2 * atom.l2_integral(length)


def _energy_fractions_of(q: np.ndarray, dictionary: BasisDictionary) -> np.ndarray:
    fractions = np.full(dictionary.n_q, np.nan)
    for mode in range(6):
        sl = dictionary.mode_slice(mode)
        atoms = dictionary.atoms_per_mode[mode]
        if not atoms:
            continue
        energies = np.array(
            [basis_energy(q[j], a, dictionary.length) for j, a in zip(range(sl.start, sl.stop), atoms)]
        )
        total = energies.sum()
        if total > 0.0:
            fractions[sl] = energies / total
    return fractions


def energy_fractions(fit: FitResult, dictionary: BasisDictionary) -> np.ndarray:
    """Per-atom energy fractions (summing to 1 within each energetic mode).

    Modes with zero total energy are masked with NaN; raises ZeroEnergy only
    when every mode is energy-free.
    """
    fractions = _energy_fractions_of(fit.q, dictionary)
    if np.all(np.isnan(fractions)):
        raise ZeroEnergy("fit carries no basis energy in any mode")
    return fractions


def _least_squares_refit(fit: FitResult, kept: np.ndarray) -> np.ndarray:
    """Debias: ordinary least squares on the kept support, per mode."""
    d = fit.dictionary
    values = d.atom_values(fit.s_grid)
    q = np.zeros(d.n_q)
    centred = fit.target - fit.stress_free
    for mode in range(6):
        sl = d.mode_slice(mode)
        idx = np.arange(sl.start, sl.stop)[kept[sl]]
        if len(idx) == 0:
            continue
        sol, *_ = np.linalg.lstsq(values[:, idx], centred[:, mode], rcond=None)
        q[idx] = sol
    return q


def _reconstruct_samples(fit: FitResult, q: np.ndarray) -> np.ndarray:
    """Model strain samples B_q(s_grid) q + xi*(s_grid)."""
    d = fit.dictionary
    values = d.atom_values(fit.s_grid)
    modes = d.column_modes
    out = fit.stress_free.copy()
    for j in range(d.n_q):
        out[:, modes[j]] += values[:, j] * q[j]
    return out


def truncate_bases(fit, threshold: float):
    """Drop atoms whose (time-averaged) energy fraction is below threshold.

    Accepts a single FitResult or a SeriesFit.  The kept coefficients are
    re-fitted by least squares on the surviving support (debiasing), so the
    truncated residual is never worse than simply zeroing the dropped
    coefficients.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValidationError("threshold must be in [0, 1)")
    if isinstance(fit, SeriesFit):
        mean_fraction = fit.mean_energy_fraction
        kept = _kept_mask(mean_fraction, threshold)
        frames = [_truncate_frame(f, kept) for f in fit.frames]
        return SeriesFit(fit.dictionary, fit.s_grid, fit.t_grid, frames)
    kept = _kept_mask(fit.per_basis_energy_fraction, threshold)
    return _truncate_frame(fit, kept)


def _kept_mask(fractions: np.ndarray, threshold: float) -> np.ndarray:
    kept = np.ones(len(fractions), dtype=bool)
    defined = ~np.isnan(fractions)
    kept[defined] = fractions[defined] >= threshold
    if threshold == 0.0:
        kept[:] = True
    return kept


def _truncate_frame(fit: FitResult, kept: np.ndarray) -> FitResult:
    from dataclasses import replace

    q_new = _least_squares_refit(fit, kept)
    residual = reconstruction_residual(
        fit.target, fit.stress_free, fit.dictionary, fit.s_grid, q_new
    )
    fractions = _energy_fractions_of(q_new, fit.dictionary)
    return replace(
        fit,
        q=q_new,
        residual_norm=residual,
        per_basis_energy_fraction=fractions,
        kept_mask=kept.copy(),
    )


def kkt_certificate(fit: FitResult, config: BPDConfig, tol_scale: float = 1e-6) -> bool:
    """Subgradient optimality check of a converged fit, in solver space.

    Active coordinates must satisfy |grad + gamma sign(q)| < tol_scale *
    Lambda, inactive ones |grad| <= gamma + tol_scale * Lambda.
    """
    d = fit.dictionary
    gamma_atoms = config.atom_weights(d)
    values = d.atom_values(fit.s_grid)
    centred = fit.target - fit.stress_free
    for mode in range(6):
        sl = d.mode_slice(mode)
        atoms = d.atoms_per_mode[mode]
        if not atoms:
            continue
        norms = np.array([np.sqrt(a.l2_integral(d.length)) for a in atoms])
        cols = values[:, sl] / norms
        y = centred[:, mode]
        x = fit.q[sl] * norms
        grad = cols.T @ (cols @ x - y)
        lam = fit.mode_lipschitz[mode]
        slack = tol_scale * max(lam, 1e-30)
        gamma = gamma_atoms[sl]
        for j in range(len(x)):
            if x[j] != 0.0:
                if abs(grad[j] + gamma[j] * np.sign(x[j])) >= slack:
                    return False
            elif abs(grad[j]) > gamma[j] + slack:
                return False
    return True


# ---------------------------------------------------------------------------
# backbone errors and export
# ---------------------------------------------------------------------------


def backbone_errors(
    reconstructed: Sequence[Pose], measured: Sequence[Pose]
) -> tuple[np.ndarray, np.ndarray]:
    """Per-section position (m) and orientation (rad) errors.

    Position is the Euclidean distance of section centres, orientation the
    SO(3) geodesic angle.
    """
    if len(reconstructed) != len(measured):
        raise LengthMismatch(
            f"{len(reconstructed)} reconstructed vs {len(measured)} measured sections"
        )
    pos = np.array(
        [float(np.linalg.norm(a.position - b.position)) for a, b in zip(reconstructed, measured)]
    )
    ori = np.array(
        [dist_so3(a.rotation, b.rotation) for a, b in zip(reconstructed, measured)]
    )
    return pos, ori


def fit_to_csv(series: SeriesFit, path) -> None:
    """Write a fitted series as CSV rows (t, atom_id, mode, coefficient,
    energy_fraction, kept)."""
    d = series.dictionary
    modes = d.column_modes
    from .spectra import MODE_LABELS

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "atom_id", "mode", "coefficient", "energy_fraction", "kept"])
        for t, fit in zip(series.t_grid, series.frames):
            for j in range(d.n_q):
                frac = fit.per_basis_energy_fraction[j]
                writer.writerow(
                    [
                        repr(float(t)),
                        j,
                        MODE_LABELS[modes[j]],
                        repr(float(fit.q[j])),
                        repr(float(frac)) if np.isfinite(frac) else "nan",
                        int(fit.kept_mask[j]),
                    ]
                )

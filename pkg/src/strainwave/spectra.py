"""Discrete spatial and space-time Fourier spectra of sampled strain fields,
sampling/aliasing analysis, the Nyquist segment rule, energy truncation
indices, and the piecewise-reconstructor transfer functions.

Transform convention (non-normalized forward sums, no 1/N):

    SFT   Xi(k)        = sum_n  xi(n lambda_s)            e^{-j k n lambda_s}
    STFT  Xi(k, omega) = sum_mn xi(n lambda_s, m T_s)     e^{-j(k n lambda_s + omega m T_s)}

evaluated by FFT at the bins ``k_i = 2 pi i / (N' lambda_s)`` (and
``omega_j = 2 pi j / (M' T_s)``), where ``N' = N * zero_pad_factor``.  Bins
are kept in raw FFT order, so index ``N' - i`` carries ``-k_i`` and real
inputs give conjugate-symmetric values.  Parseval holds with the 1/N factor
on the spectral side:  sum_n |xi(n)|^2 = (1/N) sum_i |Xi(i)|^2.

The same sampled-field container works for any 6-vector field along the rod
(strain, velocity, wrench); only strain is given a dedicated name.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    IndexOutOfRange,
    NumericalError,
    OutOfDomain,
    ValidationError,
    ZeroEnergy,
)
from .liealg import ScrewVector
from .rodmodel import RodProperties, stiffness_diagonal

DEFAULT_ZERO_PAD = 4

MODE_LABELS = ("kx", "ky", "kz", "sx", "sy", "sz")


class TruncationIndexWarning(UserWarning):
    """Raised (as a warning) when the truncation index exceeds 1."""


@dataclass(frozen=True)
class StrainGrid:
    """M x N x 6 samples of a strain field with sampling metadata.

    Sample (m, n) sits at abscissa ``s_start + n * lambda_s`` and time
    ``m * T_s``.  ``s_start`` is 0 for directly sampled fields and
    ``lambda_s / 2`` for strains extracted from marker pairs (midpoint
    attribution).
    """

    samples: np.ndarray
    lambda_s: float
    T_s: float
    length: float
    s_start: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 3 or samples.shape[2] != 6:
            raise ValidationError(f"samples must be (M, N, 6), got {samples.shape}")
        m, n = samples.shape[:2]
        if m < 1 or n < 2:
            raise ValidationError("need M >= 1 time frames and N >= 2 space samples")
        if not (self.lambda_s > 0 and self.T_s > 0 and self.length > 0):
            raise ValidationError("lambda_s, T_s and length must be positive")
        if n * self.lambda_s > self.length + self.lambda_s * (1 + 1e-9):
            raise ValidationError(
                f"{n} samples at pitch {self.lambda_s} overrun the rod length {self.length}"
            )
        if not np.all(np.isfinite(samples)):
            raise ValidationError("strain samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def n_time(self) -> int:
        return self.samples.shape[0]

    @property
    def n_space(self) -> int:
        return self.samples.shape[1]

    @property
    def s_grid(self) -> np.ndarray:
        return self.s_start + np.arange(self.n_space) * self.lambda_s

    @property
    def t_grid(self) -> np.ndarray:
        return np.arange(self.n_time) * self.T_s

    @property
    def sampling_wavenumber(self) -> float:
        """k_s = 2 pi / lambda_s (rad/m)."""
        return 2.0 * math.pi / self.lambda_s


@dataclass(frozen=True)
class Spectrum:
    """Complex spectrum per strain mode with physical axes.

    ``values`` is (6, N') for a per-time SFT and (6, M', N') for the STFT,
    in raw FFT bin order.  ``wavenumber_axis`` carries k in rad/m;
    ``frequency_axis`` (STFT only) carries omega in rad/s.
    """

    values: np.ndarray
    wavenumber_axis: np.ndarray
    lambda_s: float
    zero_pad_space: int
    n_space: int
    frequency_axis: np.ndarray | None = None
    T_s: float | None = None
    zero_pad_time: int = 1
    n_time: int = 1

    @property
    def kind(self) -> str:
        return "stft" if self.values.ndim == 3 else "sft"

    @property
    def wavenumber_cycles(self) -> np.ndarray:
        """Wavenumber axis in cycles per metre (nu = k / 2 pi)."""
        return self.wavenumber_axis / (2.0 * math.pi)

    @property
    def frequency_hz(self) -> np.ndarray | None:
        if self.frequency_axis is None:
            return None
        return self.frequency_axis / (2.0 * math.pi)

    def unpadded_space_bins(self, mode: int) -> np.ndarray:
        """Values of one mode at the original (unpadded) wavenumber bins."""
        stride = self.zero_pad_space
        idx = np.arange(self.n_space) * stride
        if self.values.ndim == 3:
            return self.values[mode][:, idx]
        return self.values[mode][idx]


def dsft(grid: StrainGrid, time_index: int, zero_pad_factor: int = DEFAULT_ZERO_PAD) -> Spectrum:
    """Discrete spatial Fourier transform of one time frame.

    FFT of the zero-padded sample row; identical (to roundoff) to the direct
    summation at the bins ``k_i = 2 pi i / (N' lambda_s)``.
    """
    if not 0 <= time_index < grid.n_time:
        raise IndexOutOfRange(f"time index {time_index} outside [0, {grid.n_time})")
    if zero_pad_factor < 1:
        raise ValidationError("zero_pad_factor must be >= 1")
    n_fft = grid.n_space * zero_pad_factor
    values = np.fft.fft(grid.samples[time_index], n=n_fft, axis=0).T  # (6, N')
    k_axis = 2.0 * math.pi * np.arange(n_fft) / (n_fft * grid.lambda_s)
    return Spectrum(
        values=values,
        wavenumber_axis=k_axis,
        lambda_s=grid.lambda_s,
        zero_pad_space=zero_pad_factor,
        n_space=grid.n_space,
    )


def dstft(
    grid: StrainGrid, zero_pad: tuple[int, int] = (DEFAULT_ZERO_PAD, DEFAULT_ZERO_PAD)
) -> Spectrum:
    """Discrete space-time Fourier transform (2-D FFT of the sample grid)."""
    if grid.n_time < 2:
        raise ValidationError("STFT needs at least 2 time frames")
    pad_s, pad_t = zero_pad
    if pad_s < 1 or pad_t < 1:
        raise ValidationError("zero-pad factors must be >= 1")
    n_fft = grid.n_space * pad_s
    m_fft = grid.n_time * pad_t
    values = np.fft.fft2(grid.samples, s=(m_fft, n_fft), axes=(0, 1))
    values = np.moveaxis(values, 2, 0)  # (6, M', N')
    k_axis = 2.0 * math.pi * np.arange(n_fft) / (n_fft * grid.lambda_s)
    w_axis = 2.0 * math.pi * np.arange(m_fft) / (m_fft * grid.T_s)
    return Spectrum(
        values=values,
        wavenumber_axis=k_axis,
        lambda_s=grid.lambda_s,
        zero_pad_space=pad_s,
        n_space=grid.n_space,
        frequency_axis=w_axis,
        T_s=grid.T_s,
        zero_pad_time=pad_t,
        n_time=grid.n_time,
    )


def replica_spectrum(
    continuous_sft: Callable[[float], np.ndarray],
    lambda_s: float,
    n_replicas: int,
    k_eval,
) -> np.ndarray:
    """Sampled-field spectrum as the truncated sum of shifted replicas.

    (1/lambda_s) sum_{|n| <= n_replicas} Xi(k - n k_s) with k_s the sampling
    angular wavenumber; for aliasing visualisation and analysis.
    """
    if n_replicas < 1:
        raise ValidationError("n_replicas must be >= 1")
    if not lambda_s > 0:
        raise ValidationError("lambda_s must be positive")
    k_s = 2.0 * math.pi / lambda_s
    k_eval = np.atleast_1d(np.asarray(k_eval, dtype=float))
    out = np.zeros((6, len(k_eval)), dtype=complex)
    for n in range(-n_replicas, n_replicas + 1):
        for j, k in enumerate(k_eval):
            out[:, j] += np.asarray(continuous_sft(k - n * k_s), dtype=complex).reshape(6)
    out /= lambda_s
    return out[:, 0] if out.shape[1] == 1 else out


def min_segments(lambda_max: float, length: float) -> int:
    """Smallest integer strictly greater than 2 L / lambda_max.

    The Nyquist rule in wavelength form: resolving spatial content down to
    the wavelength lambda_max needs N > 2 L / lambda_max pieces.
    """
    if not (lambda_max > 0 and length > 0):
        raise ValidationError("lambda_max and length must be positive")
    ratio = 2.0 * length / lambda_max
    snapped = round(ratio)
    if abs(ratio - snapped) < 1e-9 * max(1.0, abs(ratio)):
        ratio = snapped
    return int(math.floor(ratio)) + 1


def _space_energy(spectrum: Spectrum, mode: int) -> np.ndarray:
    """|Xi_mode|^2 per unpadded spatial bin (summed over time bins for STFT)."""
    bins = spectrum.unpadded_space_bins(mode)
    power = np.abs(bins) ** 2
    if power.ndim == 2:
        power = power.sum(axis=0)
    return power


def truncation_index(spectrum: Spectrum, mode: int, n_max: int) -> float:
    """Energy truncation index with the N / N_max prefactor.

    (N / N_max) * (sum_{n < N_max} |Xi(n)|^2) / (sum_{n < N} |Xi(n)|^2) over
    the unpadded bins of one mode.  The prefactor makes the index exceed 1
    for spectra concentrated below the cutoff; values > 1 emit a
    TruncationIndexWarning and are returned verbatim.
    """
    if spectrum.kind != "sft":
        raise ValidationError("truncation_index operates on per-time spatial spectra")
    n = spectrum.n_space
    if not 1 <= n_max < n:
        raise ValidationError(f"need 1 <= n_max < {n}, got {n_max}")
    power = _space_energy(spectrum, mode)
    total = float(power.sum())
    if total < 1e-300:
        raise ZeroEnergy(f"mode {MODE_LABELS[mode]} has no spectral energy")
    value = (n / n_max) * float(power[:n_max].sum()) / total
    if value > 1.0:
        warnings.warn(
            f"truncation index {value:.6g} exceeds 1 (low-wavenumber concentration)",
            TruncationIndexWarning,
            stacklevel=2,
        )
    return value


def stiffness_weighted_truncation(spectrum: Spectrum, rod: RodProperties, n_max: int) -> float:
    """Truncation index weighted by the mean stiffness diagonal.

    Replaces |Xi_i|^2 by Sigma_ii-weighted power summed over the six modes,
    so the index measures the fraction of deformation energy stored up to
    the cutoff wavenumber.
    """
    if spectrum.kind != "sft":
        raise ValidationError("stiffness-weighted truncation operates on spatial spectra")
    n = spectrum.n_space
    if not 1 <= n_max < n:
        raise ValidationError(f"need 1 <= n_max < {n}, got {n_max}")
    weights = stiffness_diagonal(rod, np.linspace(0.0, rod.length, 101)).mean(axis=0)
    head = 0.0
    total = 0.0
    for mode in range(6):
        power = _space_energy(spectrum, mode)
        head += weights[mode] * float(power[:n_max].sum())
        total += weights[mode] * float(power.sum())
    if total < 1e-300:
        raise ZeroEnergy("no stiffness-weighted spectral energy")
    value = (n / n_max) * head / total
    if value > 1.0:
        warnings.warn(
            f"stiffness-weighted truncation index {value:.6g} exceeds 1",
            TruncationIndexWarning,
            stacklevel=2,
        )
    return value


def zoh_transfer(k, lambda_p: float):
    """Zero-order-hold reconstructor H0 = lambda_p sinc(k lambda_p / 2) e^{-j k lambda_p / 2}.

    The piecewise-constant-strain reconstructor in space; applied identically
    to all six modes.  ``sinc`` is unnormalized (sin x / x).
    """
    if not lambda_p > 0:
        raise ValidationError("lambda_p must be positive")
    k = np.asarray(k, dtype=float)
    x = k * lambda_p / 2.0
    return lambda_p * np.sinc(x / np.pi) * np.exp(-1j * x)


def foh_transfer(k, lambda_p: float):
    """First-order-hold reconstructor H1 = lambda_p sinc^2(k lambda_p / 2) (1 + j k lambda_p) e^{-j k lambda_p / 2}.

    The piecewise-linear-strain reconstructor in space.
    """
    if not lambda_p > 0:
        raise ValidationError("lambda_p must be positive")
    k = np.asarray(k, dtype=float)
    x = k * lambda_p / 2.0
    return lambda_p * np.sinc(x / np.pi) ** 2 * (1.0 + 1j * k * lambda_p) * np.exp(-1j * x)


def _check_samples(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 6:
        raise ValidationError(f"samples must be (K, 6), got {samples.shape}")
    return samples


def reconstruct_pcs(samples, lambda_p: float, s_eval: float) -> ScrewVector:
    """Piecewise-constant hold of the left sample per segment of pitch lambda_p."""
    samples = _check_samples(samples)
    k = samples.shape[0]
    if not 0.0 <= s_eval <= k * lambda_p * (1 + 1e-12):
        raise OutOfDomain(f"s = {s_eval} outside [0, {k * lambda_p}]")
    idx = min(int(s_eval / lambda_p), k - 1)
    return ScrewVector.from_vector(samples[idx])


def reconstruct_pls(samples, lambda_p: float, s_eval: float) -> ScrewVector:
    """Linear interpolation between consecutive samples (first-order hold)."""
    samples = _check_samples(samples)
    k = samples.shape[0]
    span = (k - 1) * lambda_p
    if not 0.0 <= s_eval <= span * (1 + 1e-12):
        raise OutOfDomain(f"s = {s_eval} outside [0, {span}]")
    grid = np.arange(k) * lambda_p
    return ScrewVector.from_vector(
        np.array([np.interp(s_eval, grid, samples[:, i]) for i in range(6)])
    )


def check_spectrum_invariants(
    spectrum: Spectrum, grid: StrainGrid, time_index: int = 0
) -> None:
    """Parseval and conjugate symmetry of a spectrum against its source grid.

    ``time_index`` names the frame a per-time spectrum was computed from.
    Raises NumericalError on violation; used as a guard before exporting.
    """
    values = spectrum.values
    # conjugate symmetry of real input: value(-k) = conj(value(k))
    if spectrum.kind == "sft":
        flipped = values[:, (-np.arange(values.shape[1])) % values.shape[1]]
    else:
        m_idx = (-np.arange(values.shape[1])) % values.shape[1]
        n_idx = (-np.arange(values.shape[2])) % values.shape[2]
        flipped = values[:, m_idx][:, :, n_idx]
    scale = max(np.abs(values).max(), 1e-30)
    if np.abs(flipped - values.conj()).max() > 1e-12 * scale:
        raise NumericalError("spectrum violates conjugate symmetry")
    # Parseval on the unpadded bins
    if spectrum.kind == "sft":
        candidate = dsft(grid, time_index, zero_pad_factor=1)
        space = float((grid.samples[time_index] ** 2).sum())
        spec = float((np.abs(candidate.values) ** 2).sum()) / grid.n_space
        if abs(space - spec) > 1e-10 * max(space, 1e-30):
            raise NumericalError("spectrum violates the Parseval identity")
    else:
        unpadded = dstft(grid, zero_pad=(1, 1))
        space = float((grid.samples**2).sum())
        spec = float((np.abs(unpadded.values) ** 2).sum()) / (grid.n_space * grid.n_time)
        if abs(space - spec) > 1e-10 * max(space, 1e-30):
            raise NumericalError("spectrum violates the Parseval identity")


def spectrum_rows(spectrum: Spectrum, normalize_db: bool = False):
    """Yield CSV rows (mode, k, nu, [f,] real, imag, magnitude_dB, phase)."""
    with_time = spectrum.kind == "stft"
    for mode in range(6):
        vals = spectrum.values[mode]
        if normalize_db:
            ref = abs(vals[0, 0] if with_time else vals[0])
            if ref < 1e-300:
                ref = 1.0
        else:
            ref = 1.0
        if with_time:
            freq = spectrum.frequency_hz
            for j in range(vals.shape[0]):
                for i in range(vals.shape[1]):
                    yield _row(spectrum, mode, i, vals[j, i], ref, f_hz=freq[j])
        else:
            for i in range(vals.shape[0]):
                yield _row(spectrum, mode, i, vals[i], ref)


def _row(spectrum: Spectrum, mode: int, i: int, value: complex, ref: float, f_hz=None):
    mag = abs(value)
    with np.errstate(divide="ignore"):
        mag_db = float(20.0 * np.log10(mag / ref)) if mag > 0 else float("-inf")
    row = [
        MODE_LABELS[mode],
        repr(float(spectrum.wavenumber_axis[i])),
        repr(float(spectrum.wavenumber_cycles[i])),
    ]
    if f_hz is not None:
        row.append(repr(float(f_hz)))
    row += [repr(value.real), repr(value.imag), repr(mag_db), repr(float(np.angle(value)))]
    return row


def spectrum_to_csv(path, spectrum: Spectrum, normalize_db: bool = False) -> None:
    """Write a spectrum as plot-ready CSV (raw FFT bin order)."""
    header = ["mode", "k_rad_per_m", "nu_per_m"]
    if spectrum.kind == "stft":
        header.append("f_Hz")
    header += ["real", "imag", "magnitude_dB", "phase_rad"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in spectrum_rows(spectrum, normalize_db=normalize_db):
            writer.writerow(row)

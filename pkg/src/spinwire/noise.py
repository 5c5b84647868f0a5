"""Disorder sampling: Overhauser fields and exchange-coupling fluctuations.

Coupling offsets delta_k(t) come in three flavours selected by the
spectral exponent alpha: white (independent redraw each time step),
pink (1/f, synthesised by an inverse-DFT sum of randomly detuned
harmonics) and static (one draw held for the whole evolution).  All
samplers are pure functions of their parameters and an explicit RNG, so
realizations are reproducible from (seed, realization index) alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_F_MAX = 1000.0
DEFAULT_N_COMPONENTS = 2 ** 14

STATIC = float("inf")

# substream labels for per-realization generators
_STREAM_OVERHAUSER = 0
_STREAM_COUPLING = 1
_STREAM_RESTART = 2


def stream_rng(seed: int, realization: int, stream: int,
               sub: int = 0) -> np.random.Generator:
    """Independent generator for one (realization, purpose, link) triple.

    Streams are derived from the root seed by spawn keys, so drawing
    order and worker scheduling cannot change any realization.
    """
    ss = np.random.SeedSequence(seed, spawn_key=(realization, stream, sub))
    return np.random.default_rng(ss)


def overhauser_rng(seed: int, realization: int) -> np.random.Generator:
    return stream_rng(seed, realization, _STREAM_OVERHAUSER)


def coupling_rng(seed: int, realization: int, link: int) -> np.random.Generator:
    return stream_rng(seed, realization, _STREAM_COUPLING, link)


def restart_rng(seed: int, restart: int) -> np.random.Generator:
    return stream_rng(seed, 0, _STREAM_RESTART, restart)


@dataclass(frozen=True)
class OverhauserDraw:
    """One quasi-static draw of nuclear fields, one 3-vector per site."""

    fields: np.ndarray  # (n_sites, 3)
    b_nuc: float

    @property
    def is_zero(self) -> bool:
        return self.b_nuc == 0.0 or not np.any(self.fields)


def sample_overhauser(n_sites: int, b_nuc: float,
                      rng: np.random.Generator) -> OverhauserDraw:
    """Draw isotropic Gaussian fields with per-component std b_nuc."""
    if b_nuc < 0:
        raise ValueError(f"b_nuc must be >= 0, got {b_nuc}")
    if b_nuc == 0.0:
        return OverhauserDraw(np.zeros((n_sites, 3)), 0.0)
    return OverhauserDraw(b_nuc * rng.standard_normal((n_sites, 3)), b_nuc)


@dataclass(frozen=True)
class CouplingTrajectory:
    """Per-link coupling offsets delta_k sampled on the propagation grid.

    ``values`` has shape (n_links, n_samples); static noise stores a
    single column.  Between grid points the offset is held constant
    (zero-order hold), matching the piecewise-constant propagator.
    """

    values: np.ndarray
    dt: float
    alpha: float
    sigma_j: float

    @property
    def n_links(self) -> int:
        return self.values.shape[0]

    @property
    def is_zero(self) -> bool:
        return self.sigma_j == 0.0 or not np.any(self.values)

    def at_step(self, step: int) -> np.ndarray:
        """Offsets on the interval [step*dt, (step+1)*dt)."""
        cols = self.values.shape[1]
        return self.values[:, min(step, cols - 1)]


def sample_static(sigma_j: float, n_links: int,
                  rng: np.random.Generator) -> CouplingTrajectory:
    """One Gaussian offset per link, constant in time (alpha = infinity)."""
    if sigma_j < 0:
        raise ValueError(f"sigma_j must be >= 0, got {sigma_j}")
    if sigma_j == 0.0:
        values = np.zeros((n_links, 1))
    else:
        values = sigma_j * rng.standard_normal((n_links, 1))
    return CouplingTrajectory(values, np.inf, STATIC, sigma_j)


def sample_white(sigma_j: float, n_links: int, n_steps: int, dt: float,
                 rng: np.random.Generator) -> CouplingTrajectory:
    """Independent Gaussian offsets for every link and time step."""
    if sigma_j < 0:
        raise ValueError(f"sigma_j must be >= 0, got {sigma_j}")
    shape = (n_links, n_steps + 1)
    if sigma_j == 0.0:
        values = np.zeros(shape)
    else:
        values = sigma_j * rng.standard_normal(shape)
    return CouplingTrajectory(values, dt, 0.0, sigma_j)


def _harmonic_sum(amps: np.ndarray, freqs: np.ndarray, n_samples: int,
                  dt: float) -> np.ndarray:
    """sum_k amps_k exp(2 pi i freqs_k n dt) for n = 0..n_samples-1.

    The frequencies are irrational multiples of the grid in general, so
    no FFT applies; iterated phasor products keep this O(M) per sample.
    """
    out = np.empty(n_samples, dtype=complex)
    z = np.exp(2j * np.pi * freqs * dt)
    w = amps.astype(complex, copy=True)
    for n in range(n_samples):
        out[n] = w.sum()
        w *= z
    return out


def generate_colored_trajectory(
    alpha: float,
    sigma_j: float,
    duration: float,
    dt: float,
    f_max: float = DEFAULT_F_MAX,
    m: int = DEFAULT_N_COMPONENTS,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Synthesise one 1/f^alpha offset series on a uniform time grid.

    Superposes m harmonics at frequencies f_k = (k/m) f_max, each
    detuned by a standard-normal eta_k and weighted by sigma_j/f_k^alpha.
    The real part is taken, the mean removed, and the series rescaled so
    its empirical standard deviation equals sigma_j exactly.  The k = 0
    component diverges for alpha >= 1 and is dropped there.
    """
    if alpha < 0:
        raise ValueError(f"spectral exponent must be >= 0, got {alpha}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if m < 2 or (m & (m - 1)) != 0:
        raise ValueError(f"m must be a power of two >= 2, got {m}")
    if rng is None:
        rng = np.random.default_rng()
    n_samples = int(round(duration / dt)) + 1
    if sigma_j == 0.0:
        return np.zeros(n_samples)

    freqs = np.arange(m, dtype=float) / m * f_max
    eta = rng.standard_normal(m)
    if alpha > 0:
        # the k = 0 weight diverges; drop the DC component
        freqs, eta = freqs[1:], eta[1:]
        amps = sigma_j / freqs ** alpha / m
    else:
        amps = np.full(m, sigma_j / m)
    series = np.real(_harmonic_sum(amps, freqs - eta, n_samples, dt))
    series -= series.mean()
    std = series.std()
    if std == 0.0:
        return np.zeros(n_samples)
    return series * (sigma_j / std)


def sample_colored(alpha: float, sigma_j: float, n_links: int, n_steps: int,
                   dt: float, rngs: list[np.random.Generator],
                   f_max: float = DEFAULT_F_MAX,
                   m: int = DEFAULT_N_COMPONENTS) -> CouplingTrajectory:
    """Independent 1/f^alpha series for each link, one RNG per link."""
    if len(rngs) != n_links:
        raise ValueError("need one generator per link")
    duration = n_steps * dt
    values = np.empty((n_links, n_steps + 1))
    for link in range(n_links):
        values[link] = generate_colored_trajectory(
            alpha, sigma_j, duration, dt, f_max, m, rngs[link])
    return CouplingTrajectory(values, dt, alpha, sigma_j)


@dataclass(frozen=True)
class NoiseRealization:
    """Everything random about one run: fields plus coupling offsets."""

    overhauser: OverhauserDraw | None
    couplings: CouplingTrajectory | None
    seed: int
    index: int

    @property
    def has_fields(self) -> bool:
        return self.overhauser is not None and not self.overhauser.is_zero

    @property
    def has_coupling_noise(self) -> bool:
        return self.couplings is not None and not self.couplings.is_zero


NOISELESS = NoiseRealization(None, None, 0, 0)


def spectrum_estimate(values: np.ndarray, dt: float,
                      window: str | None = None
                      ) -> tuple[np.ndarray, np.ndarray]:
    """One-sided spectral estimate |DFT| of a uniformly sampled series.

    Returns (frequencies, magnitude).  The synthesis above places the
    target spectral law in the component amplitudes, so the magnitude of
    the transform (not its square) is the quantity compared against
    sigma_j / f^alpha.  A 'hann' window tames leakage from the strong
    sub-resolution components of steep spectra.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[-1]
    if n < 8:
        raise ValueError(f"need at least 8 samples, got {n}")
    if window == "hann":
        w = np.hanning(n)
        values = values * (w / w.mean())
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    freqs = np.fft.rfftfreq(n, d=dt)
    mag = np.abs(np.fft.rfft(values, axis=-1)) / n
    return freqs, mag


def fit_loglog_slope(freqs: np.ndarray, power: np.ndarray,
                     f_lo: float, f_hi: float) -> float:
    """Least-squares slope of log10(power) against log10(f) on a band."""
    sel = (freqs >= f_lo) & (freqs <= f_hi) & (power > 0)
    if sel.sum() < 2:
        raise ValueError("fit band contains fewer than two usable points")
    return float(np.polyfit(np.log10(freqs[sel]), np.log10(power[sel]), 1)[0])


def averaged_colored_spectrum(
    alpha: float,
    realizations: int,
    sigma_j: float = 1.0,
    f_max: float = DEFAULT_F_MAX,
    m: int = DEFAULT_N_COMPONENTS,
    n_samples: int = 2048,
    seed: int = 0,
    window: str | None = "hann",
) -> tuple[np.ndarray, np.ndarray]:
    """Mean spectral estimate over many synthesis realizations.

    Samples each series at twice f_max so no synthesis component folds
    back across Nyquist, then averages the windowed spectral magnitude
    bin by bin.  The Hann window contains leakage from the strong
    components below the resolution bandwidth.
    """
    dt = 0.5 / f_max
    duration = (n_samples - 1) * dt
    acc = None
    for r in range(realizations):
        rng = stream_rng(seed, r, _STREAM_COUPLING)
        series = generate_colored_trajectory(alpha, sigma_j, duration, dt,
                                             f_max, m, rng)
        freqs, mag = spectrum_estimate(series, dt, window=window)
        acc = mag if acc is None else acc + mag
    return freqs, acc / realizations

"""Initial-state preparation and piecewise-constant time evolution.

Evolution applies exp(-i H_n dt) interval by interval in time order.
Within one interval the Hamiltonian is constant and the exponential is
applied to machine accuracy, so the step size only controls how often
noise is resampled and how finely pulses are resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import eigh

from . import model
from .model import ChainSpec, SectorBasis
from .noise import NoiseRealization

DEFAULT_DT = 0.05

# largest ||H dt|| handled by a single Taylor sum; larger steps are split
_TAYLOR_THETA = 3.0
_TAYLOR_MAX_TERMS = 80


class PropagationError(RuntimeError):
    """Evolution produced non-finite amplitudes or lost normalisation."""


class EigensolverError(RuntimeError):
    """Iterative ground-state solve failed to converge."""


def matrix_exponential_apply(h: sp.spmatrix, dt: float, v: np.ndarray,
                             tol: float = 1e-12) -> np.ndarray:
    """Apply exp(-i h dt) to a vector or to stacked columns.

    Uses a scaled Taylor sum: the step is split until ||h dt|| is modest,
    then terms are accumulated until they drop below ``tol`` relative to
    the result.  Accurate to well below the 1e-10 contract for Hermitian
    input.
    """
    v = np.asarray(v, dtype=complex)
    if dt == 0.0:
        return v.copy()
    norm = float(np.abs(h).sum(axis=1).max()) if h.nnz else 0.0
    scale = norm * abs(dt)
    n_sub = max(1, int(np.ceil(scale / _TAYLOR_THETA)))
    coef = -1j * dt / n_sub
    out = v
    ref = float(np.linalg.norm(v))
    if ref == 0.0:
        return v.copy()
    for _ in range(n_sub):
        acc = out.copy()
        term = out
        for j in range(1, _TAYLOR_MAX_TERMS + 1):
            term = h.dot(term) * (coef / j)
            acc += term
            if float(np.linalg.norm(term)) < tol * ref:
                break
        else:
            raise PropagationError(
                "matrix exponential did not converge within term cap")
        out = acc
    return out


@dataclass
class HamiltonianSchedule:
    """Constant-per-interval Hamiltonian H(t) on a uniform grid.

    ``static`` collects every time-independent contribution; ``terms``
    holds (coefficient series, operator) pairs whose coefficient may
    change from step to step.  The Hamiltonian on interval
    [n dt, (n+1) dt) is ``static + sum_i coeffs_i[n] * op_i``.
    """

    static: sp.csr_matrix
    dt: float
    terms: list[tuple[np.ndarray, sp.csr_matrix]] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.static.shape[0]

    @property
    def is_static(self) -> bool:
        return not self.terms

    @property
    def max_steps(self) -> int | None:
        if not self.terms:
            return None
        return min(len(c) for c, _ in self.terms)

    def conserves_sz(self, tol: float = 1e-10) -> bool:
        if not model.commutes_with_sz(self.static, tol):
            return False
        return all(model.commutes_with_sz(op, tol) for _, op in self.terms)

    def op(self, step: int) -> sp.csr_matrix:
        if self.is_static:
            return self.static
        h = self.static
        for coeffs, op in self.terms:
            c = coeffs[step]
            if c != 0.0:
                h = h + c * op
        return h.tocsr()

    def restricted(self, sector: SectorBasis) -> "HamiltonianSchedule":
        """Project every constituent onto a fixed-excitation sector."""
        static = model.project_to_sector(self.static, sector)
        terms = [(coeffs, model.project_to_sector(op, sector))
                 for coeffs, op in self.terms]
        return HamiltonianSchedule(static, self.dt, terms)


def build_schedule(
    spec: ChainSpec,
    noise: NoiseRealization | None = None,
    dt: float = DEFAULT_DT,
    n_steps: int = 0,
    j0_series: np.ndarray | None = None,
) -> HamiltonianSchedule:
    """Assemble the schedule for one disorder realization.

    ``j0_series`` optionally replaces the constant boundary coupling
    with a per-step signed amplitude (pulse control); coupling-offset
    noise multiplies whatever boundary amplitude is in force.
    """
    n = spec.n_sites
    static = model.channel_hamiltonian(spec)
    terms: list[tuple[np.ndarray, sp.csr_matrix]] = []

    overhauser = noise.overhauser if noise is not None else None
    if overhauser is not None and not overhauser.is_zero:
        fields = np.asarray(overhauser.fields)
        if fields.shape != (spec.n_channel + 1, 3):
            raise ValueError(
                f"overhauser fields must cover sites 0..N:"
                f" expected {(spec.n_channel + 1, 3)}, got {fields.shape}")
        for label in range(spec.n_channel + 1):
            if np.any(fields[label] != 0.0):
                static = static + model.field_operator(
                    n, spec.slot(label), fields[label])

    couplings = noise.couplings if noise is not None else None
    deltas = None
    if couplings is not None and not couplings.is_zero:
        if couplings.n_links != spec.n_links:
            raise ValueError(
                f"coupling trajectory covers {couplings.n_links} links,"
                f" chain has {spec.n_links}")
        deltas = couplings.values

    # bulk links k = 1..N-1
    for k in range(1, spec.n_links):
        op = model.coupling_operator(n, spec.slot(k))
        base = spec.link_coupling(k)
        static = static + base * op
        if deltas is not None:
            dk = deltas[k]
            if dk.shape[0] == 1:  # static offset folds into the constant part
                static = static + base * float(dk[0]) * op
            elif np.any(dk != 0.0):
                terms.append((base * dk, op))

    # boundary link 0: possibly pulsed
    op0 = model.coupling_operator(n, spec.sender_slot)
    d0 = deltas[0] if deltas is not None else None
    if j0_series is None:
        base0 = spec.link_coupling(0)
        static = static + base0 * op0
        if d0 is not None:
            if d0.shape[0] == 1:
                static = static + base0 * float(d0[0]) * op0
            elif np.any(d0 != 0.0):
                terms.append((base0 * d0, op0))
    else:
        j0_series = np.asarray(j0_series, dtype=float)
        if n_steps and len(j0_series) < n_steps:
            raise ValueError("j0_series shorter than the requested evolution")
        if d0 is None:
            coeffs = j0_series
        elif d0.shape[0] == 1:
            coeffs = j0_series * (1.0 + float(d0[0]))
        else:
            m = min(len(j0_series), len(d0))
            coeffs = j0_series[:m] * (1.0 + d0[:m])
        terms.append((coeffs, op0))

    return HamiltonianSchedule(static.tocsr(), dt, terms)


# ---------------------------------------------------------------------------
# initial states

_EIGSH_DENSE_CUTOFF = 128


def _fix_phase(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    ph = v[i] / abs(v[i])
    return v * np.conj(ph)


def ground_state(h: sp.spmatrix, break_strength: float = 1e-6) -> np.ndarray:
    """Lowest eigenvector with a tiny S_z tie-break for degenerate cases.

    The tie-break field is added only here, never to the evolution; with
    a positive strength it selects the most spin-down member of a
    degenerate multiplet.  The global phase is fixed by making the
    largest-magnitude amplitude real positive.
    """
    dim = h.shape[0]
    n = dim.bit_length() - 1
    hb = h + break_strength * model.sz_total(n) if break_strength else h
    if dim <= _EIGSH_DENSE_CUTOFF:
        _, vecs = eigh(hb.toarray())
        return _fix_phase(vecs[:, 0])
    v0 = np.random.default_rng(12345).standard_normal(dim)
    try:
        _, vecs = spla.eigsh(hb.tocsc(), k=1, which="SA", v0=v0,
                             maxiter=max(5000, 20 * dim))
    except spla.ArpackNoConvergence as exc:
        if dim <= 4096:
            _, dense_vecs = eigh(hb.toarray())
            return _fix_phase(dense_vecs[:, 0])
        residual = getattr(exc, "eigenvalues", None)
        raise EigensolverError(
            f"ground-state solve failed to converge (dim {dim},"
            f" partial eigenvalues {residual})") from exc
    return _fix_phase(vecs[:, 0])


def sender_qubit(theta: float, phi: float) -> np.ndarray:
    """Bloch state cos(theta/2)|0> + e^{i phi} sin(theta/2)|1>."""
    return np.array([np.cos(theta / 2),
                     np.exp(1j * phi) * np.sin(theta / 2)], dtype=complex)


def all_down_state(n_sites: int) -> np.ndarray:
    v = np.zeros(2 ** n_sites, dtype=complex)
    v[0] = 1.0
    return v


def initial_transfer_state(theta: float, phi: float,
                           channel_state: np.ndarray) -> np.ndarray:
    """Product of the sender Bloch state with the channel state."""
    return np.kron(sender_qubit(theta, phi), channel_state)


SINGLET_PAIR = np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / np.sqrt(2.0)


def initial_entangle_state(spec: ChainSpec,
                           channel_state: np.ndarray) -> np.ndarray:
    """Singlet between 0' and the sender, product with the channel."""
    if not spec.entangle_mode:
        raise ValueError("initial_entangle_state requires entangle_mode")
    if len(channel_state) != 2 ** spec.n_channel:
        raise ValueError("channel state dimension mismatch")
    return np.kron(SINGLET_PAIR, channel_state)


def thermal_ensemble(h_ch: sp.spmatrix, kt: float,
                     break_strength: float = 1e-6,
                     weight_cutoff: float = 1e-12
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Gibbs weights and eigenvectors of the channel Hamiltonian.

    Returns (weights, vectors) with vectors in columns, keeping only
    weights above ``weight_cutoff`` (relative).  kT = 0 degenerates to
    the tie-broken ground state with unit weight.
    """
    if kt < 0:
        raise ValueError(f"kT must be >= 0, got {kt}")
    dim = h_ch.shape[0]
    n = dim.bit_length() - 1
    if kt == 0.0:
        g = ground_state(h_ch, break_strength)
        return np.array([1.0]), g.reshape(-1, 1)
    hb = h_ch + break_strength * model.sz_total(n) if break_strength else h_ch
    energies, vectors = eigh(hb.toarray())
    w = np.exp(-(energies - energies[0]) / kt)
    w /= w.sum()
    keep = w > weight_cutoff * w.max()
    w = w[keep] / w[keep].sum()
    return w, vectors[:, keep]


def thermal_channel_state(h_ch: sp.spmatrix, kt: float,
                          break_strength: float = 1e-6) -> np.ndarray:
    """Gibbs density matrix exp(-H/kT)/Z of the channel sites."""
    w, v = thermal_ensemble(h_ch, kt, break_strength, weight_cutoff=0.0)
    return (v * w) @ v.conj().T


# ---------------------------------------------------------------------------
# propagation

@dataclass
class PropagationResult:
    """Snapshots of an evolution, including the initial state at t = 0."""

    times: np.ndarray
    states: np.ndarray  # (n_snap, dim) vectors, (n_snap, dim, k) columns,
                        # or (n_snap, dim, dim) density matrices


def _steps_for(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if abs(n * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"dt {dt} does not divide t_end {t_end}")
    return n


def _check_finite(x: np.ndarray):
    if not np.all(np.isfinite(x.view(float))):
        raise PropagationError("non-finite amplitudes during evolution")


def propagate_columns(cols: np.ndarray, schedule: HamiltonianSchedule,
                      t_end: float, snapshot_stride: int = 1,
                      tol: float = 1e-12) -> PropagationResult:
    """Evolve stacked pure-state columns, recording periodic snapshots."""
    dt = schedule.dt
    n_steps = _steps_for(t_end, dt)
    if n_steps % snapshot_stride:
        raise ValueError("snapshot stride must divide the step count")
    if schedule.max_steps is not None and n_steps > schedule.max_steps:
        raise ValueError("schedule coefficients are shorter than t_end")
    if cols.shape[0] != schedule.dim:
        raise ValueError("state dimension does not match schedule")
    n_snap = n_steps // snapshot_stride
    out = np.empty((n_snap + 1,) + cols.shape, dtype=complex)
    out[0] = cols
    state = np.asarray(cols, dtype=complex).copy()
    if schedule.is_static:
        h = schedule.static
        for i in range(1, n_snap + 1):
            state = matrix_exponential_apply(h, dt * snapshot_stride, state, tol)
            _check_finite(state)
            out[i] = state
    else:
        for step in range(n_steps):
            state = matrix_exponential_apply(schedule.op(step), dt, state, tol)
            if (step + 1) % snapshot_stride == 0:
                _check_finite(state)
                out[(step + 1) // snapshot_stride] = state
    times = np.arange(n_snap + 1) * (dt * snapshot_stride)
    return PropagationResult(times, out)


def _unitary_for(h: sp.spmatrix, dt: float, tol: float) -> np.ndarray:
    eye = np.eye(h.shape[0], dtype=complex)
    return matrix_exponential_apply(h, dt, eye, tol)


def propagate_density(rho: np.ndarray, schedule: HamiltonianSchedule,
                      t_end: float, snapshot_stride: int = 1,
                      tol: float = 1e-12) -> PropagationResult:
    """Evolve a density matrix as U rho U^dagger per interval."""
    dt = schedule.dt
    n_steps = _steps_for(t_end, dt)
    if n_steps % snapshot_stride:
        raise ValueError("snapshot stride must divide the step count")
    if rho.shape != (schedule.dim, schedule.dim):
        raise ValueError("density matrix dimension does not match schedule")
    n_snap = n_steps // snapshot_stride
    out = np.empty((n_snap + 1, schedule.dim, schedule.dim), dtype=complex)
    out[0] = rho
    state = np.asarray(rho, dtype=complex).copy()
    if schedule.is_static:
        u = _unitary_for(schedule.static, dt * snapshot_stride, tol)
        for i in range(1, n_snap + 1):
            state = u @ state @ u.conj().T
            _check_finite(state)
            out[i] = state
    else:
        for step in range(n_steps):
            u = _unitary_for(schedule.op(step), dt, tol)
            state = u @ state @ u.conj().T
            if (step + 1) % snapshot_stride == 0:
                _check_finite(state)
                out[(step + 1) // snapshot_stride] = state
    times = np.arange(n_snap + 1) * (dt * snapshot_stride)
    return PropagationResult(times, out)


def propagate(state: np.ndarray, schedule: HamiltonianSchedule, t_end: float,
              snapshot_stride: int = 1, tol: float = 1e-12
              ) -> PropagationResult:
    """Evolve a pure state (1-D) or a density matrix (2-D square)."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        res = propagate_columns(state.reshape(-1, 1), schedule, t_end,
                                snapshot_stride, tol)
        return PropagationResult(res.times, res.states[:, :, 0])
    if state.ndim == 2 and state.shape[0] == state.shape[1]:
        return propagate_density(state, schedule, t_end, snapshot_stride, tol)
    raise ValueError("state must be a vector or a square density matrix")


def expectation(op: sp.spmatrix, state: np.ndarray) -> float:
    """Real expectation value for a pure state or density matrix."""
    if state.ndim == 1:
        return float(np.real(np.vdot(state, op.dot(state))))
    return float(np.real(np.trace(op.dot(state))))

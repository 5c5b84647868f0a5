"""Chain description, spin-1/2 operators and Hamiltonian construction.

Conventions used throughout the package:

* per-site basis ``|0> = spin down``, ``|1> = spin up``;
* site 0 is the sender, sites ``1..N`` form the channel, and in entangle
  mode an extra decoupled site ``0'`` precedes the sender;
* in the computational product basis the leftmost site is the most
  significant bit, so site ``s`` of ``n`` sites owns bit ``n - 1 - s``;
* energies are measured in units of the exchange magnitude ``|J|`` and
  times in ``1/|J|`` (hbar = 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

FM = "FM"
AFM = "AFM"

# S.S for two adjacent spin-1/2 sites, basis order (00, 01, 10, 11)
_EXCHANGE_BLOCK = np.array(
    [
        [0.25, 0.0, 0.0, 0.0],
        [0.0, -0.25, 0.5, 0.0],
        [0.0, 0.5, -0.25, 0.0],
        [0.0, 0.0, 0.0, 0.25],
    ],
    dtype=complex,
)

_SX = 0.5 * np.array([[0, 1], [1, 0]], dtype=complex)
_SY = 0.5 * np.array([[0, -1j], [1j, 0]], dtype=complex)
_SZ = 0.5 * np.array([[-1, 0], [0, 1]], dtype=complex)


class SymmetryError(ValueError):
    """Raised when an operator does not commute with total S_z."""


@dataclass(frozen=True)
class ChainSpec:
    """Static description of a quantum-dot chain.

    ``n_channel`` is the number of channel sites N.  ``j_mag`` and
    ``j0_mag`` are the magnitudes of the bulk and boundary exchange
    couplings; the sign is fixed by ``phase`` (negative for FM, positive
    for AFM).  ``degeneracy_break`` is the tiny z-field used only while
    selecting a unique ground state, never during evolution.
    """

    n_channel: int
    phase: str = AFM
    j_mag: float = 1.0
    j0_mag: float | None = None
    hz: float = 0.0
    entangle_mode: bool = False
    degeneracy_break: float | None = None

    def __post_init__(self):
        if self.n_channel < 1:
            raise ValueError(f"n_channel must be >= 1, got {self.n_channel}")
        if self.phase not in (FM, AFM):
            raise ValueError(f"phase must be 'FM' or 'AFM', got {self.phase!r}")
        if self.j_mag <= 0:
            raise ValueError(f"j_mag must be positive, got {self.j_mag}")
        if self.j0_mag is None:
            object.__setattr__(self, "j0_mag", self.j_mag)
        if self.j0_mag < 0:
            raise ValueError(f"j0_mag must be >= 0, got {self.j0_mag}")
        if self.degeneracy_break is None:
            object.__setattr__(self, "degeneracy_break", 1e-6 * self.j_mag)
        if self.degeneracy_break < 0:
            raise ValueError("degeneracy_break must be >= 0")

    @property
    def sign(self) -> float:
        return -1.0 if self.phase == FM else 1.0

    @property
    def n_sites(self) -> int:
        return self.n_channel + 1 + (1 if self.entangle_mode else 0)

    @property
    def dim(self) -> int:
        return 2 ** self.n_sites

    @property
    def slot_offset(self) -> int:
        """Array slot of labelled site 0 (the sender)."""
        return 1 if self.entangle_mode else 0

    def slot(self, label: int) -> int:
        """Array slot of labelled site 0..N (0' has slot 0 in entangle mode)."""
        if not 0 <= label <= self.n_channel:
            raise ValueError(f"site label out of range: {label}")
        return label + self.slot_offset

    @property
    def sender_slot(self) -> int:
        return self.slot(0)

    @property
    def receiver_slot(self) -> int:
        return self.slot(self.n_channel)

    @property
    def n_links(self) -> int:
        """Couplings 0..N-1; link k joins labelled sites k and k+1."""
        return self.n_channel

    def link_coupling(self, k: int) -> float:
        """Signed exchange coupling of link k (link 0 is the boundary)."""
        mag = self.j0_mag if k == 0 else self.j_mag
        return self.sign * mag



def _embed(n: int, slot: int, block: np.ndarray) -> sp.csr_matrix:
    """Embed a local operator acting on sites slot..slot+w-1 of n sites."""
    width = block.shape[0].bit_length() - 1
    left = sp.identity(2 ** slot, format="coo")
    right = sp.identity(2 ** (n - slot - width), format="coo")
    return sp.kron(sp.kron(left, sp.coo_matrix(block)), right).tocsr()


@lru_cache(maxsize=None)
def coupling_operator(n: int, slot: int) -> sp.csr_matrix:
    """S.S between adjacent slots (slot, slot+1) on an n-site chain."""
    if not 0 <= slot < n - 1:
        raise ValueError(f"slot {slot} has no right neighbour on {n} sites")
    return _embed(n, slot, _EXCHANGE_BLOCK)


@lru_cache(maxsize=None)
def site_spin_operators(n: int, slot: int) -> tuple[sp.csr_matrix, ...]:
    """(S_x, S_y, S_z) of one site embedded in the n-site space."""
    return tuple(_embed(n, slot, m) for m in (_SX, _SY, _SZ))


def field_operator(n: int, slot: int, b: np.ndarray) -> sp.csr_matrix:
    """Zeeman term B . S for one site."""
    sx, sy, sz = site_spin_operators(n, slot)
    return (b[0] * sx + b[1] * sy + b[2] * sz).tocsr()


@lru_cache(maxsize=None)
def sz_total(n: int) -> sp.csr_matrix:
    """Total S_z of the n-site space (diagonal)."""
    states = np.arange(2 ** n, dtype=np.uint64)
    ups = np.bitwise_count(states).astype(float)
    return sp.diags(ups - 0.5 * n, format="csr", dtype=complex)


def _zero(n: int) -> sp.csr_matrix:
    return sp.csr_matrix((2 ** n, 2 ** n), dtype=complex)


def channel_hamiltonian(spec: ChainSpec) -> sp.csr_matrix:
    """Heisenberg Hamiltonian of the channel sites; sender (and 0') idle.

    Sum of J S_k.S_{k+1} over channel links k = 1..N-1 plus the optional
    global z-field on the channel sites.
    """
    n = spec.n_sites
    h = _zero(n)
    for k in range(1, spec.n_links):
        h = h + spec.link_coupling(k) * coupling_operator(n, spec.slot(k))
    if spec.hz != 0.0:
        for k in range(1, spec.n_channel + 1):
            h = h + spec.hz * site_spin_operators(n, spec.slot(k))[2]
    return h.tocsr()


def boundary_hamiltonian(spec: ChainSpec) -> sp.csr_matrix:
    """Sender-channel coupling J0 S_0 . S_1."""
    return (spec.link_coupling(0)
            * coupling_operator(spec.n_sites, spec.sender_slot)).tocsr()


def total_hamiltonian(
    spec: ChainSpec,
    deltas: np.ndarray | None = None,
    fields: np.ndarray | None = None,
) -> sp.csr_matrix:
    """Full Hamiltonian with coupling offsets and Overhauser fields.

    ``deltas`` holds one dimensionless offset per link 0..N-1 (link k
    coupling becomes J_k (1 + delta_k)); ``fields`` holds one 3-vector
    per labelled site 0..N.  With both zero (or None) this reduces
    exactly to ``channel_hamiltonian + boundary_hamiltonian``.
    """
    n = spec.n_sites
    if deltas is None:
        deltas = np.zeros(spec.n_links)
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (spec.n_links,):
        raise ValueError(
            f"deltas must have one entry per link, expected {(spec.n_links,)},"
            f" got {deltas.shape}")
    if fields is not None:
        fields = np.asarray(fields, dtype=float)
        if fields.shape != (spec.n_channel + 1, 3):
            raise ValueError(
                f"fields must be (n_channel + 1, 3), expected"
                f" {(spec.n_channel + 1, 3)}, got {fields.shape}")

    h = channel_hamiltonian(spec) + boundary_hamiltonian(spec)
    for k in range(spec.n_links):
        if deltas[k] != 0.0:
            h = h + (spec.link_coupling(k) * deltas[k]
                     * coupling_operator(n, spec.slot(k)))
    if fields is not None:
        for label in range(spec.n_channel + 1):
            b = fields[label]
            if np.any(b != 0.0):
                h = h + field_operator(n, spec.slot(label), b)
    return h.tocsr()


def open_chain_hamiltonian(m: int, j_signed: float, hz: float = 0.0,
                           fields: np.ndarray | None = None) -> sp.csr_matrix:
    """Uniform open Heisenberg chain on m sites (used for the bare channel).

    ``fields`` optionally adds one Zeeman 3-vector per site.
    """
    h = _zero(m)
    for s in range(m - 1):
        h = h + j_signed * coupling_operator(m, s)
    if hz != 0.0:
        for s in range(m):
            h = h + hz * site_spin_operators(m, s)[2]
    if fields is not None:
        fields = np.asarray(fields, dtype=float)
        if fields.shape != (m, 3):
            raise ValueError(f"fields must be ({m}, 3), got {fields.shape}")
        for s in range(m):
            if np.any(fields[s] != 0.0):
                h = h + field_operator(m, s, fields[s])
    return h.tocsr()


def hermiticity_defect(op: sp.spmatrix) -> float:
    """Largest element of |A - A^dagger|."""
    diff = (op - op.getH()).tocoo()
    return 0.0 if diff.nnz == 0 else float(np.abs(diff.data).max())


@dataclass(frozen=True)
class SectorBasis:
    """Fixed-excitation subspace of the n-site product basis.

    ``indices`` lists the full-space basis states holding exactly
    ``n_excitations`` up spins, in increasing order; ``positions`` is the
    inverse map (full index -> sector index, -1 elsewhere).
    """

    n_sites: int
    n_excitations: int
    indices: np.ndarray = field(repr=False)
    positions: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.indices)


@lru_cache(maxsize=None)
def sector_basis(n_sites: int, n_excitations: int) -> SectorBasis:
    if not 0 <= n_excitations <= n_sites:
        raise ValueError(f"n_excitations out of range: {n_excitations}")
    states = np.arange(2 ** n_sites, dtype=np.uint64)
    mask = np.bitwise_count(states) == n_excitations
    indices = np.nonzero(mask)[0]
    assert len(indices) == comb(n_sites, n_excitations)
    positions = np.full(2 ** n_sites, -1, dtype=np.int64)
    positions[indices] = np.arange(len(indices))
    return SectorBasis(n_sites, n_excitations, indices, positions)


def commutes_with_sz(op: sp.spmatrix, tol: float = 1e-10) -> bool:
    n = int(op.shape[0]).bit_length() - 1
    sz = sz_total(n)
    comm = (op @ sz - sz @ op).tocoo()
    return comm.nnz == 0 or float(np.abs(comm.data).max()) <= tol


def project_to_sector(op: sp.spmatrix, sector: SectorBasis) -> sp.csr_matrix:
    """Restrict an S_z-conserving operator to a fixed-excitation sector.

    Raises SymmetryError when the operator mixes sectors (the signal that
    transverse hyperfine fields are present and full-space evolution is
    required).
    """
    if op.shape != (2 ** sector.n_sites,) * 2:
        raise ValueError("operator dimension does not match sector space")
    if not commutes_with_sz(op):
        raise SymmetryError("operator does not commute with total S_z")
    sub = op.tocsr()[sector.indices, :][:, sector.indices]
    return sub.tocsr()


def embed_vector(sector: SectorBasis, v: np.ndarray) -> np.ndarray:
    """Lift a sector vector into the full product space."""
    full = np.zeros(2 ** sector.n_sites, dtype=complex)
    full[sector.indices] = v
    return full


def restrict_vector(sector: SectorBasis, full: np.ndarray) -> np.ndarray:
    """Component of a full-space vector inside the sector."""
    return np.asarray(full)[sector.indices]

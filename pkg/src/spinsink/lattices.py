"""Lattice geometries, dipolar couplings, and sparse spin-model Hamiltonians.

Basis convention (fixed for reproducibility): the many-body basis of an
``n_sites`` system is labelled by integers ``0 .. 2**n_sites - 1``, where bit
``i`` (site ``i`` = least significant bit) gives the occupation of site ``i``.
Raising operators satisfy ``S_i^+ |..0_i..> = |..1_i..>``, and ``S^z`` takes
the values +-1/2 (bit set -> +1/2).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Geometry",
    "build_geometry",
    "chain",
    "hexagon",
    "torus",
    "dipolar_couplings",
    "build_xy",
    "build_hofstadter_hardcore",
    "build_ising_longitudinal",
    "number_operator",
    "raising_operator",
    "occupation_labels",
    "hermiticity_defect",
    "MAX_SITES_DEFAULT",
]

# Dimension guard for dense-basis constructions (2**16 = 65536 states).
MAX_SITES_DEFAULT = 16


@dataclass(frozen=True)
class Geometry:
    """Site positions in units of the nearest-neighbour distance.

    ``kind`` is one of ``"chain"``, ``"hexagon"``, ``"torus"``.  For a torus
    the integer extents ``lx, ly`` are kept and distances are evaluated with
    the minimum-image convention in both directions.
    """

    kind: str
    positions: np.ndarray  # (n_sites, 2)
    lx: int | None = None
    ly: int | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "positions", pos)
        if pos.ndim != 2 or pos.shape[1] != 2:
            raise ValueError("positions must be an (n, 2) array")
        d = self.distance_matrix()
        off = d[~np.eye(len(pos), dtype=bool)]
        if len(pos) > 1 and off.min() < 1e-12:
            raise ValueError("geometry has coincident sites")

    @property
    def n_sites(self) -> int:
        return self.positions.shape[0]

    def distance_matrix(self) -> np.ndarray:
        """Pairwise distances; minimum image on the torus."""
        delta = self.positions[:, None, :] - self.positions[None, :, :]
        if self.kind == "torus":
            delta = np.abs(delta)
            delta[..., 0] = np.minimum(delta[..., 0], self.lx - delta[..., 0])
            delta[..., 1] = np.minimum(delta[..., 1], self.ly - delta[..., 1])
        return np.sqrt((delta**2).sum(axis=-1))


def chain(n_sites: int) -> Geometry:
    """Unit-spaced collinear chain of ``n_sites`` atoms."""
    if n_sites < 1:
        raise ValueError(f"chain needs at least one site, got {n_sites}")
    pos = np.column_stack([np.arange(n_sites, dtype=float), np.zeros(n_sites)])
    return Geometry("chain", pos)


def hexagon() -> Geometry:
    """Six vertices of a unit-edge regular hexagon (circumradius 1)."""
    angles = np.arange(6) * np.pi / 3.0
    pos = np.column_stack([np.cos(angles), np.sin(angles)])
    return Geometry("hexagon", pos)


def torus(lx: int, ly: int) -> Geometry:
    """``lx x ly`` square lattice with periodic wrap; site ``i = x + lx*y``."""
    if lx < 2 or ly < 2:
        raise ValueError(f"torus needs lx, ly >= 2, got {lx}x{ly}")
    pos = np.array([[x, y] for y in range(ly) for x in range(lx)], dtype=float)
    return Geometry("torus", pos, lx=lx, ly=ly)


def build_geometry(kind: str, **params) -> Geometry:
    """Dispatch on ``kind``: chain(n) | hexagon | torus(lx, ly)."""
    if kind == "chain":
        return chain(int(params["n"]))
    if kind == "hexagon":
        return hexagon()
    if kind == "torus":
        return torus(int(params["lx"]), int(params["ly"]))
    raise ValueError(f"unknown geometry kind {kind!r}")


def dipolar_couplings(geom: Geometry, v_nn: float) -> np.ndarray:
    """Coupling matrix ``V_ij = v_nn / d_ij**3`` (zero diagonal).

    The sign of ``v_nn`` is shared by every pair: the dipolar interaction is
    isotropic in sign and falls off with the cube of the distance.
    """
    d = geom.distance_matrix()
    with np.errstate(divide="ignore"):
        v = v_nn / d**3
    np.fill_diagonal(v, 0.0)
    return v


def occupation_labels(n_sites: int) -> list[str]:
    """Occupation bitstrings, site 0 rendered rightmost (LSB last)."""
    return [format(k, f"0{n_sites}b") for k in range(2**n_sites)]


def _check_size(n_sites: int, max_sites: int):
    if n_sites > max_sites:
        raise ValueError(
            f"{n_sites} sites exceeds the dense-basis guard of {max_sites}; "
            "raise max_sites explicitly if you really want this"
        )


def _popcounts(n_sites: int) -> np.ndarray:
    dim = 2**n_sites
    ks = np.arange(dim, dtype=np.int64)
    counts = np.zeros(dim, dtype=np.int64)
    for b in range(n_sites):
        counts += (ks >> b) & 1
    return counts


def raising_operator(n_sites: int, site: int, max_sites: int = MAX_SITES_DEFAULT) -> sp.csr_matrix:
    """``S_site^+`` on the full occupation basis."""
    _check_size(n_sites, max_sites)
    dim = 2**n_sites
    bit = 1 << site
    cols = np.flatnonzero((np.arange(dim) & bit) == 0)
    rows = cols | bit
    data = np.ones(len(cols), dtype=complex)
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim))


def _hop_term(n_sites: int, i: int, j: int, amplitude: complex) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Triplets of ``amplitude * S_i^+ S_j^-`` (i != j)."""
    dim = 2**n_sites
    bi, bj = 1 << i, 1 << j
    ks = np.arange(dim)
    mask = ((ks & bj) != 0) & ((ks & bi) == 0)
    cols = ks[mask]
    rows = (cols ^ bj) | bi
    return rows, cols, np.full(len(cols), amplitude, dtype=complex)


def build_xy(couplings: np.ndarray, max_sites: int = MAX_SITES_DEFAULT) -> sp.csr_matrix:
    """Flip-flop XY Hamiltonian ``H = -sum_{i<j} V_ij (S_i^+ S_j^- + h.c.)``.

    Commutes with the total occupation number.
    """
    v = np.asarray(couplings, dtype=float)
    if v.ndim != 2 or v.shape[0] != v.shape[1]:
        raise ValueError("couplings must be a square matrix")
    if not np.allclose(v, v.T, atol=1e-12):
        raise ValueError("couplings must be symmetric")
    n_sites = v.shape[0]
    _check_size(n_sites, max_sites)
    dim = 2**n_sites
    rows, cols, data = [], [], []
    for i in range(n_sites):
        for j in range(i + 1, n_sites):
            if v[i, j] == 0.0:
                continue
            for a, b in ((i, j), (j, i)):
                r, c, d = _hop_term(n_sites, a, b, -v[i, j])
                rows.append(r)
                cols.append(c)
                data.append(d)
    if not rows:
        return sp.csr_matrix((dim, dim), dtype=complex)
    h = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    h.sum_duplicates()
    return h


def build_hofstadter_hardcore(
    lx: int,
    ly: int,
    alpha: float,
    v: float,
    boundary: str = "torus",
    max_sites: int = MAX_SITES_DEFAULT,
) -> sp.csr_matrix:
    """Harper-Hofstadter Hamiltonian of hard-core bosons on an ``lx x ly`` torus.

    ``H = v * sum_{x,y} (e^{i 2 pi alpha y} a^+_{x+1,y} a_{x,y}
    + a^+_{x,y+1} a_{x,y} + h.c.)`` with periodic wrap in both directions and
    at most one boson per site (occupancy basis, site ``i = x + lx*y``).
    ``alpha`` is the flux per plaquette; a uniform flux requires
    ``alpha * ly`` integer in this gauge.
    """
    if boundary != "torus":
        raise ValueError("only the torus boundary is supported")
    if lx < 2 or ly < 2:
        raise ValueError(f"torus needs lx, ly >= 2, got {lx}x{ly}")
    n_sites = lx * ly
    _check_size(n_sites, max_sites)
    dim = 2**n_sites
    rows, cols, data = [], [], []

    def add_hop(i, j, amp):
        # amp * a_i^+ a_j + conj(amp) * a_j^+ a_i
        r, c, d = _hop_term(n_sites, i, j, amp)
        rows.append(r)
        cols.append(c)
        data.append(d)
        r, c, d = _hop_term(n_sites, j, i, np.conj(amp))
        rows.append(r)
        cols.append(c)
        data.append(d)

    for y in range(ly):
        for x in range(lx):
            i = x + lx * y
            jx = (x + 1) % lx + lx * y
            jy = x + lx * ((y + 1) % ly)
            add_hop(jx, i, v * np.exp(2j * np.pi * alpha * y))
            add_hop(jy, i, v + 0j)
    h = sp.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dim, dim),
    )
    h.sum_duplicates()
    return h


def build_ising_longitudinal(
    couplings: np.ndarray, delta: float, max_sites: int = MAX_SITES_DEFAULT
) -> sp.csr_matrix:
    """Longitudinal-field Ising Hamiltonian, diagonal in the occupation basis.

    ``H = sum_{i<j} V_ij S_i^z S_j^z + delta * sum_i S_i^z`` with
    ``S^z = +-1/2``.
    """
    v = np.asarray(couplings, dtype=float)
    n_sites = v.shape[0]
    _check_size(n_sites, max_sites)
    dim = 2**n_sites
    ks = np.arange(dim)
    z = np.empty((n_sites, dim))
    for i in range(n_sites):
        z[i] = np.where((ks >> i) & 1, 0.5, -0.5)
    diag = delta * z.sum(axis=0)
    for i in range(n_sites):
        for j in range(i + 1, n_sites):
            if v[i, j] != 0.0:
                diag = diag + v[i, j] * z[i] * z[j]
    return sp.diags(diag.astype(complex)).tocsr()


def number_operator(n_sites: int, max_sites: int = MAX_SITES_DEFAULT) -> sp.csr_matrix:
    """Total occupation number; diagonal with the popcount of each label."""
    _check_size(n_sites, max_sites)
    return sp.diags(_popcounts(n_sites).astype(complex)).tocsr()


def hermiticity_defect(a: sp.spmatrix) -> float:
    """``max |A - A^dagger|`` relative to ``max |A|`` (0 for empty matrices)."""
    d = (a - a.getH()).tocoo()
    scale = np.abs(a.tocoo().data).max() if a.nnz else 0.0
    if scale == 0.0:
        return 0.0
    return np.abs(d.data).max() / scale if d.nnz else 0.0

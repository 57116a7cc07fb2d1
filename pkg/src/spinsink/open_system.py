"""Composite system + auxiliary-atom Lindblad problems.

Three representation levels of the engineered dissipation are provided:

* ``build_full_model``      -- 4-level auxiliaries {g, i, 0, 1}: the decay
  path runs through the short-lived intermediate state ``i`` (rate ``Gamma``)
  which is resonantly coupled (``Omega_i``) to the Rydberg state that is
  being drained.
* ``build_reduced_model``   -- 3-level auxiliaries {g, 0, 1}: the intermediate
  state is eliminated and the drained Rydberg state decays directly to ``g``
  at the induced rate ``gamma``.  This is the default simulation model.
* ``build_effective_model`` -- 2-level auxiliaries with frequency-resolved,
  phase-modulated jump operators acting directly on system eigenstate pairs
  (valid deep in the large-``Gamma`` regime).

Frames: the default ``lab`` construction keeps the detuning as an explicit
time-dependent diagonal term, so all operators are static and only diagonal
coefficients vary.  The ``rotating`` construction moves the system
Hamiltonian and detunings into phase factors ``exp(i(omega t - int Delta))``
on frequency-resolved exchange blocks.  For constant detunings the two agree
on every observable that commutes with the frame generator (total system
occupation, auxiliary populations, system-eigenstate fidelities).

Composite ordering: the system is the leftmost Kronecker factor, auxiliaries
follow in list order, i.e. ``index = (sys * l_1 + a_1) * l_2 + a_2 ...``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .coefficients import Coefficient, Constant, ModulatedPhase, ScheduleCoefficient, product_coefficient
from .lattices import raising_operator
from .schedules import ConstantSchedule, DetuningSchedule
from .spectral import EigenDecomposition, frequency_resolve

__all__ = [
    "AuxiliarySpec",
    "JumpOperator",
    "LindbladProblem",
    "build_full_model",
    "build_reduced_model",
    "build_effective_model",
    "induced_decay_rate",
]

FULL_LEVELS = {"g": 0, "i": 1, "r0": 2, "r1": 3}
REDUCED_LEVELS = {"g": 0, "r0": 1, "r1": 2}
EFFECTIVE_SOURCE_LEVELS = {"g": 0, "r1": 1}
EFFECTIVE_SINK_LEVELS = {"g": 0, "r0": 1}


@dataclass
class AuxiliarySpec:
    """One engineered dissipative atom.

    ``kind`` is ``"source"`` (drains Rydberg state 0, injects excitations) or
    ``"sink"`` (drains state 1, absorbs excitations).  ``exchange`` is the
    system-auxiliary flip-flop coupling J, ``drive`` the optical repump Rabi
    frequency Omega.  Decay is given either directly (``gamma``, reduced and
    effective models) or through the intermediate-state pair
    (``big_gamma``, ``omega_i``; full model).  ``weights`` are per-site
    amplitudes of the system coupling operator ``sum_i w_i S_i^+`` (uniform
    when omitted).
    """

    kind: str
    exchange: float
    drive: float
    detuning: DetuningSchedule = field(default_factory=lambda: ConstantSchedule(0.0))
    gamma: float | None = None
    big_gamma: float | None = None
    omega_i: float | None = None
    weights: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("source", "sink"):
            raise ValueError(f"auxiliary kind must be 'source' or 'sink', got {self.kind!r}")
        for name in ("exchange", "drive", "gamma", "big_gamma", "omega_i"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise ValueError(f"{name} must be non-negative, got {val}")
        if isinstance(self.detuning, (int, float)):
            self.detuning = ConstantSchedule(float(self.detuning))

    def reduced_gamma(self) -> float:
        """Direct decay rate; derived from (Gamma, Omega_i) when not given."""
        if self.gamma is not None:
            return self.gamma
        if self.big_gamma is not None and self.omega_i is not None:
            return induced_decay_rate(self.omega_i, self.big_gamma)
        raise ValueError(f"auxiliary {self.label!r} specifies no decay")


def induced_decay_rate(omega0: float, gamma_big: float) -> float:
    """Effective decay rate of a level coupled at ``omega0`` to a lossy state.

    With ``H = omega0 (|i><0| + h.c.)`` and decay ``Gamma`` out of ``|i>``,
    adiabatic elimination of ``|i>`` leaves ``gamma = 4 omega0**2 / Gamma``
    (the proportionality constant fixes the convention; verified against a
    dense three-level decay fit for ``Gamma / omega0 >= 20``).
    """
    if gamma_big <= 0:
        raise ValueError("Gamma must be positive")
    if omega0 < 0:
        raise ValueError("omega0 must be non-negative")
    return 4.0 * omega0**2 / gamma_big


@dataclass
class JumpOperator:
    """A jump operator ``L(t) = sum_k c_k(t) A_k`` on the composite space."""

    terms: list[tuple[sp.csr_matrix, Coefficient]]
    label: str = ""

    @property
    def is_constant(self) -> bool:
        return all(c.is_constant for _, c in self.terms)

    def at(self, t: float) -> sp.csr_matrix:
        out = None
        for mat, coeff in self.terms:
            piece = complex(coeff(t)) * mat
            out = piece if out is None else out + piece
        return out.tocsr()

    def dagger_l_terms(self) -> list[tuple[sp.csr_matrix, Coefficient]]:
        """Terms of ``L(t)^dag L(t)`` with combined coefficients."""
        out = []
        for mat_a, ca in self.terms:
            for mat_b, cb in self.terms:
                coeff = product_coefficient(ca.conjugate(), cb)
                out.append(((mat_a.getH() @ mat_b).tocsr(), coeff))
        return out


def _kron_chain(mats) -> sp.csr_matrix:
    out = mats[0]
    for m in mats[1:]:
        out = sp.kron(out, m, format="csr")
    return out


@dataclass
class LindbladProblem:
    """Hamiltonian terms and jump operators on the composite product space."""

    dims: tuple[int, ...]
    hamiltonian: list[tuple[sp.csr_matrix, Coefficient]]
    jumps: list[JumpOperator]
    aux_specs: list[AuxiliarySpec]
    aux_levels: list[dict[str, int]]
    system_states: np.ndarray  # kept occupation labels of the system factor
    n_sites: int
    frame: str = "lab"
    meta: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def system_dim(self) -> int:
        return int(self.dims[0])

    @property
    def is_constant(self) -> bool:
        return all(c.is_constant for _, c in self.hamiltonian) and all(j.is_constant for j in self.jumps)

    # -- construction helpers -------------------------------------------------
    def hamiltonian_at(self, t: float) -> sp.csr_matrix:
        out = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for mat, coeff in self.hamiltonian:
            out = out + complex(coeff(t)) * mat
        return out.tocsr()

    def effective_terms(self) -> list[tuple[sp.csr_matrix, Coefficient]]:
        """Terms of ``H(t) - (i/2) sum_k L_k(t)^dag L_k(t)``."""
        terms = list(self.hamiltonian)
        for jump in self.jumps:
            for mat, coeff in jump.dagger_l_terms():
                if isinstance(coeff, Constant):
                    terms.append((mat, Constant(-0.5j * coeff.amplitude)))
                elif isinstance(coeff, ModulatedPhase):
                    terms.append((mat, ModulatedPhase(-0.5j * coeff.amplitude, coeff.omega, coeff.schedule, coeff.sign)))
                else:
                    raise NotImplementedError("unsupported jump coefficient type")
        return terms

    # -- embeddings ------------------------------------------------------------
    def embed_system(self, op: sp.spmatrix) -> sp.csr_matrix:
        """Lift a system operator (full ``2**n_sites`` basis) to the composite."""
        op = sp.csr_matrix(op)
        full = 2**self.n_sites
        if op.shape[0] == self.system_dim and self.system_dim != full:
            proj = op
        elif op.shape[0] == full:
            keep = self.system_states
            proj = op[keep][:, keep] if self.system_dim != full else op
        else:
            raise ValueError("operator dimension matches neither the full nor the kept system basis")
        mats = [proj] + [sp.identity(l, format="csr", dtype=complex) for l in self.dims[1:]]
        return _kron_chain(mats)

    def embed_aux(self, index: int, op: sp.spmatrix) -> sp.csr_matrix:
        mats = [sp.identity(d, format="csr", dtype=complex) for d in self.dims]
        mats[index + 1] = sp.csr_matrix(op)
        return _kron_chain(mats)

    def aux_population(self, index: int, level: str) -> sp.csr_matrix:
        lv = self.aux_levels[index][level]
        n = self.dims[index + 1]
        p = sp.csr_matrix(([1.0 + 0j], ([lv], [lv])), shape=(n, n))
        return self.embed_aux(index, p)

    def system_number_op(self) -> sp.csr_matrix:
        pops = np.array([bin(int(s)).count("1") for s in self.system_states], dtype=float)
        return self.embed_system(sp.diags(pops.astype(complex)).tocsr())

    def initial_state(self, system_state="vacuum") -> np.ndarray:
        """Composite state ``psi_sys (x) |g...g>``; default system vacuum."""
        if isinstance(system_state, str) and system_state == "vacuum":
            vec = np.zeros(self.system_dim, dtype=complex)
            vec[int(np.flatnonzero(self.system_states == 0)[0])] = 1.0
        elif isinstance(system_state, (int, np.integer)):
            vec = np.zeros(self.system_dim, dtype=complex)
            hits = np.flatnonzero(self.system_states == int(system_state))
            if len(hits) == 0:
                raise ValueError(f"basis label {system_state} not present in the kept system basis")
            vec[int(hits[0])] = 1.0
        else:
            vec = np.asarray(system_state, dtype=complex)
            full = 2**self.n_sites
            if vec.shape[0] == full and self.system_dim != full:
                vec = vec[self.system_states]
                nrm = np.linalg.norm(vec)
                if nrm < 1e-12:
                    raise ValueError("system state has no support on the kept basis")
                vec = vec / nrm
            elif vec.shape[0] != self.system_dim:
                raise ValueError("system state has the wrong dimension")
        psi = vec
        for a, levels in enumerate(self.aux_levels):
            g = np.zeros(self.dims[1 + a], dtype=complex)
            g[levels["g"]] = 1.0
            psi = np.kron(psi, g)
        return psi

    def partial_trace_aux(self, rho: np.ndarray) -> np.ndarray:
        """Reduced system density matrix (auxiliaries traced out)."""
        d_s = self.system_dim
        d_a = self.dim // d_s
        r = rho.reshape(d_s, d_a, d_s, d_a)
        return np.einsum("iaja->ij", r)

    def summary(self) -> str:
        lines = [
            f"composite dimensions: {self.dims} (total {self.dim})",
            f"frame: {self.frame}",
            f"system: {self.n_sites} sites, {self.system_dim} kept basis states",
            f"hamiltonian terms ({len(self.hamiltonian)}):",
        ]
        for mat, coeff in self.hamiltonian:
            lines.append(f"  nnz={mat.nnz:-8d}  coeff={coeff}")
        lines.append(f"jump operators ({len(self.jumps)}):")
        for j in self.jumps:
            lines.append(f"  {j.label or '(unnamed)'}: {len(j.terms)} term(s), constant={j.is_constant}")
        return "\n".join(lines)


def _lvl(levels: dict[str, int], a: str, b: str) -> sp.csr_matrix:
    n = len(levels)
    return sp.csr_matrix(([1.0 + 0j], ([levels[a]], [levels[b]])), shape=(n, n))


def _system_pieces(h_s: sp.spmatrix, aux: list[AuxiliarySpec], max_filling: int | None):
    dim = h_s.shape[0]
    n_sites = int(round(np.log2(dim)))
    if 2**n_sites != dim:
        raise ValueError("system Hamiltonian dimension is not a power of two")
    states = np.arange(dim)
    if max_filling is not None:
        pops = np.array([bin(k).count("1") for k in range(dim)])
        states = np.flatnonzero(pops <= max_filling)
    keep = states
    h_proj = sp.csr_matrix(h_s)[keep][:, keep]
    s_plus = []
    for spec in aux:
        w = np.ones(n_sites) if spec.weights is None else np.asarray(spec.weights, dtype=complex)
        if len(w) != n_sites:
            raise ValueError("weights length must equal the number of system sites")
        op = sp.csr_matrix((dim, dim), dtype=complex)
        for i in range(n_sites):
            if w[i] != 0:
                op = op + w[i] * raising_operator(n_sites, i, max_sites=n_sites)
        s_plus.append(op.tocsr()[keep][:, keep])
    return n_sites, keep, h_proj, s_plus


def _assemble(h_s, auxiliaries, levels_for, drive_pairs, decay, detuning_sign_ops, max_filling, frame, eig):
    """Shared assembly of full/reduced models in either frame."""
    aux = list(auxiliaries)
    n_sites, keep, h_proj, s_plus = _system_pieces(h_s, aux, max_filling)
    aux_levels = [levels_for(a) for a in aux]
    dims = (len(keep),) + tuple(len(lv) for lv in aux_levels)
    problem = LindbladProblem(
        dims=dims,
        hamiltonian=[],
        jumps=[],
        aux_specs=aux,
        aux_levels=aux_levels,
        system_states=keep,
        n_sites=n_sites,
        frame=frame,
    )

    resolved = None
    if frame == "rotating":
        if eig is None:
            raise ValueError("the rotating-frame construction needs the system eigendecomposition")
        if eig.dim != h_proj.shape[0]:
            raise ValueError("eigendecomposition dimension does not match the (kept) system basis")
        resolved = [frequency_resolve(sp_op, eig) for sp_op in s_plus]
    else:
        problem.hamiltonian.append((problem.embed_system(h_proj), Constant(1.0)))

    for a, (spec, levels) in enumerate(zip(aux, aux_levels)):
        lift = lambda m: problem.embed_aux(a, m)
        # optical drive (always static: the drive tracks the shifted transition)
        for ket, bra in drive_pairs(spec):
            problem.hamiltonian.append((lift(_lvl(levels, ket, bra) + _lvl(levels, bra, ket)), Constant(spec.drive)))
        # intermediate-state coupling (full model only)
        if "i" in levels:
            pair = ("i", "r0") if spec.kind == "source" else ("i", "r1")
            problem.hamiltonian.append(
                (lift(_lvl(levels, *pair) + _lvl(levels, pair[1], pair[0])), Constant(spec.omega_i))
            )
        # detuning
        if frame == "lab":
            sign, diag_levels = detuning_sign_ops(spec)
            diag = sum(_lvl(levels, l, l) for l in diag_levels)
            problem.hamiltonian.append((lift(diag), ScheduleCoefficient(spec.detuning, sign)))
        # exchange
        flip = lift(_lvl(levels, "r0", "r1"))
        if frame == "lab":
            sys_part = problem.embed_system(s_plus[a])
            x = (sys_part @ flip).tocsr()
            problem.hamiltonian.append((x + x.getH(), Constant(spec.exchange)))
        else:
            fr = resolved[a]
            for omega, block in zip(fr.frequencies, fr.blocks):
                sys_part = problem.embed_system(block)
                x = (sys_part @ flip).tocsr()
                problem.hamiltonian.append((x, ModulatedPhase(spec.exchange, omega, spec.detuning, 1)))
                problem.hamiltonian.append((x.getH(), ModulatedPhase(spec.exchange, omega, spec.detuning, -1)))
        # decay
        rate, pair = decay(spec)
        problem.jumps.append(
            JumpOperator([(lift(_lvl(levels, *pair)), Constant(np.sqrt(rate)))], label=f"{spec.kind}[{a}] decay")
        )
    return problem


def build_full_model(
    h_s: sp.spmatrix,
    auxiliaries,
    *,
    frame: str = "lab",
    eig: EigenDecomposition | None = None,
    max_filling: int | None = None,
) -> LindbladProblem:
    """Four-level auxiliaries with explicit intermediate-state decay.

    Sources: resonant ``Omega_i |i><0|`` coupling, drive ``Omega |g><1|``,
    jump ``sqrt(Gamma) |g><i|``.  Sinks mirror this (``|i><1|`` coupling,
    ``|g><0|`` drive).  In the lab frame the detuning enters as
    ``+Delta(t) (P_1 + P_g)`` for sources and ``-Delta(t) (P_0 + P_g)`` for
    sinks (the ``P_g`` share keeps the chirped repump drive static).
    """
    for spec in auxiliaries:
        if spec.big_gamma is None or spec.omega_i is None:
            raise ValueError(f"full model needs (big_gamma, omega_i) on auxiliary {spec.label!r}")

    def drive_pairs(spec):
        return [("g", "r1")] if spec.kind == "source" else [("g", "r0")]

    def decay(spec):
        return spec.big_gamma, ("g", "i")

    def detuning_sign_ops(spec):
        if spec.kind == "source":
            return 1.0, ("r1", "g")
        return -1.0, ("r0", "g")

    return _assemble(h_s, auxiliaries, lambda a: dict(FULL_LEVELS), drive_pairs, decay, detuning_sign_ops, max_filling, frame, eig)


def build_reduced_model(
    h_s: sp.spmatrix,
    auxiliaries,
    *,
    frame: str = "lab",
    eig: EigenDecomposition | None = None,
    max_filling: int | None = None,
) -> LindbladProblem:
    """Three-level auxiliaries with direct engineered decay ``gamma``.

    Sources decay ``|0> -> |g>`` (they give up excitations and reset), sinks
    decay ``|1> -> |g>``.  This is the default representation; its parameters
    are the ones quoted with simulation results (gamma, Omega, J, V).
    """
    for spec in auxiliaries:
        if spec.gamma is None:
            raise ValueError(f"reduced model needs gamma on auxiliary {spec.label!r}")

    def drive_pairs(spec):
        return [("g", "r1")] if spec.kind == "source" else [("g", "r0")]

    def decay(spec):
        return spec.gamma, ("g", "r0") if spec.kind == "source" else ("g", "r1")

    def detuning_sign_ops(spec):
        if spec.kind == "source":
            return 1.0, ("r1", "g")
        return -1.0, ("r0", "g")

    return _assemble(h_s, auxiliaries, lambda a: dict(REDUCED_LEVELS), drive_pairs, decay, detuning_sign_ops, max_filling, frame, eig)


def build_effective_model(
    h_s: sp.spmatrix,
    eig: EigenDecomposition,
    auxiliaries,
) -> LindbladProblem:
    """Two-level auxiliaries with frequency-resolved effective jumps.

    Adiabatic elimination of the drained Rydberg state and the intermediate
    state leaves jumps ``L = sum_omega A e^{i(omega t - int Delta)}
    (S^+(omega) (x) |g><1|)`` for sources (lowering analogue for sinks), with
    ``A = J sqrt(Gamma)/Omega_i = 2 J / sqrt(gamma)``; the Hamiltonian retains
    only the optical drives.  Valid for ``Gamma >> J, Omega_i``.
    """
    if eig is None:
        raise ValueError("the effective model needs the system eigendecomposition")
    aux = list(auxiliaries)
    n_sites, keep, h_proj, s_plus = _system_pieces(h_s, aux, None)
    if eig.dim != h_proj.shape[0]:
        raise ValueError("eigendecomposition dimension does not match the system")
    aux_levels = [dict(EFFECTIVE_SOURCE_LEVELS) if a.kind == "source" else dict(EFFECTIVE_SINK_LEVELS) for a in aux]
    dims = (len(keep),) + tuple(len(lv) for lv in aux_levels)
    problem = LindbladProblem(
        dims=dims,
        hamiltonian=[],
        jumps=[],
        aux_specs=aux,
        aux_levels=aux_levels,
        system_states=keep,
        n_sites=n_sites,
        frame="rotating",
    )
    for a, (spec, levels) in enumerate(zip(aux, aux_levels)):
        lift = lambda m: problem.embed_aux(a, m)
        if spec.kind == "source":
            drive = _lvl(levels, "g", "r1")
            hop = _lvl(levels, "g", "r1")
        else:
            drive = _lvl(levels, "g", "r0")
            hop = _lvl(levels, "g", "r0")
        problem.hamiltonian.append((lift(drive + drive.getH()), Constant(spec.drive)))
        amp = 2.0 * spec.exchange / np.sqrt(spec.reduced_gamma())
        fr = frequency_resolve(s_plus[a], eig)
        terms = []
        for omega, block in zip(fr.frequencies, fr.blocks):
            if spec.kind == "source":
                mat = (problem.embed_system(block) @ lift(hop)).tocsr()
                terms.append((mat, ModulatedPhase(amp, omega, spec.detuning, 1)))
            else:
                mat = (problem.embed_system(block.getH()) @ lift(hop)).tocsr()
                terms.append((mat, ModulatedPhase(amp, omega, spec.detuning, -1)))
        problem.jumps.append(JumpOperator(terms, label=f"{spec.kind}[{a}] effective"))
    return problem

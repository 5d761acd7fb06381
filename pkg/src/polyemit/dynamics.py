"""Open quantum dynamics of interacting two-level multipole emitters.

The electromagnetic environment enters only through ensemble coefficients
(all rad/s): per-emitter level shifts delta_a, a Hermitian coherent
coupling matrix xi_ab, and a positive-semidefinite collective decay matrix
gamma_ab. With sigma_a the lowering operator of emitter a and n_a its
excited-state projector, the density matrix evolves in the frame rotating
at the reference frequency w_ref under

    drho/dt = -i [sum_a delta_a n_a + sum_ab xi_ab sigma_a^+ sigma_b, rho]
              + sum_ab gamma_ab (sigma_b rho sigma_a^+
                                 - (sigma_a^+ sigma_b rho
                                    + rho sigma_a^+ sigma_b) / 2)

Heisenberg equations close for one emitter but couple ever higher operator
products once two or more emitters interact, so the state is propagated
densely instead; exact for small ensembles, capped at 10 emitters
(dimension 1024). The decay matrix is factored into jump operators through
its eigenbasis, with negative eigenvalues inside the model's tolerance
band clipped to zero.

Rate convention: gamma_aa is the population decay rate of emitter a, so a
lone coherence decays at gamma_aa / 2. The diagonal of xi acts as an
additional frequency shift; model builders in this module keep it at zero
and put self shifts into delta.

Reported <sigma_a> values are lab frame, carrying the full
exp(-i w_ref (t - t0)) phase; density matrix snapshots stay in the
rotating frame. The lab phase is formed in double precision, so
w_ref * t products beyond ~1e12 rad lose phase digits; populations and
<sigma_z> are frame independent and unaffected.

Basis conventions: per emitter, index 0 is ground and 1 is excited;
emitter 0 is the leftmost Kronecker factor; sigma = |g><e| and
sigma_z = 2 n - 1.
"""
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.integrate import solve_ivp

from .emitter import MultipoleEmitter
from .errors import (CoincidentPointError, InputError, IntegrationError,
                     ModelDomainError)
from .grid import TensorGrid
from .homogeneous import Medium, coincident_im_jet, eval_homogeneous_jet
from .quadrature import homogeneous_pair_model
from .rates import collective_rate, coupling_strength, lamb_shift

_MAX_EMITTERS = 10       # dense propagation cap, dimension 2**10
_MAX_SNAPSHOT = 6        # density matrices retained on trajectories
_HERM_RTOL = 1e-8        # relative asymmetry allowed before rejection
_PSD_RTOL = 1e-10        # decay-matrix eigenvalue floor, relative to norm
_TRACE_TOL = 1e-9
_BOUND_TOL = 1e-7        # slack on [-1, 1] expectation bounds
_LOWER = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _finite(arr: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(arr.real)) and np.all(np.isfinite(arr.imag)))


def lowering_operators(n_emitters: int) -> list:
    """Per-emitter lowering operators on the 2**n product space."""
    n = int(n_emitters)
    if not 1 <= n <= _MAX_EMITTERS:
        raise InputError(f"emitter count must lie in [1, {_MAX_EMITTERS}]")
    eye = np.eye(2, dtype=complex)
    ops = []
    for a in range(n):
        op = np.ones((1, 1), dtype=complex)
        for k in range(n):
            op = np.kron(op, _LOWER if k == a else eye)
        ops.append(op)
    return ops


def product_density(labels: str) -> np.ndarray:
    """Density matrix of a product state given per-emitter labels,
    e.g. "eg" puts emitter 1 excited and emitter 2 in the ground state."""
    single = {"g": np.array([1.0, 0.0], dtype=complex),
              "e": np.array([0.0, 1.0], dtype=complex)}
    if not labels or any(c not in single for c in labels):
        raise InputError(
            f"unknown state label in {labels!r}; use 'g' and 'e' only")
    vec = np.ones(1, dtype=complex)
    for c in labels:
        vec = np.kron(vec, single[c])
    return np.outer(vec, vec.conj())


def pure_density(amplitudes) -> np.ndarray:
    """Density matrix of a pure state from its basis amplitudes."""
    vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
    dim = vec.size
    if dim < 2 or dim & (dim - 1):
        raise InputError("amplitude count must be a power of two (2**N)")
    if not _finite(vec):
        raise InputError("state amplitudes must be finite")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise InputError("zero state vector is not normalizable")
    vec = vec / norm
    return np.outer(vec, vec.conj())


def _hermitize(mat: np.ndarray, name: str) -> np.ndarray:
    scale = float(np.max(np.abs(mat)))
    if scale > 0.0:
        asym = float(np.max(np.abs(mat - mat.conj().T)))
        if asym > _HERM_RTOL * scale:
            raise InputError(
                f"{name} must be Hermitian; relative asymmetry "
                f"{asym / scale:.2e} exceeds {_HERM_RTOL:g}")
    return 0.5 * (mat + mat.conj().T)


@dataclass(frozen=True, eq=False)
class EmitterEnsembleModel:
    """Coefficients of the ensemble master equation.

    omega_ref is the common reference frequency (rad/s); emitter a
    oscillates at omega_ref + delta[a]. xi (Hermitian) couples excitation
    exchange, gamma (Hermitian, positive semidefinite up to a relative
    tolerance of 1e-10) drives collective decay. Matrices are stored
    exactly symmetrized.
    """

    omega_ref: float
    delta: np.ndarray
    xi: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        if not (np.isscalar(self.omega_ref) or np.ndim(self.omega_ref) == 0) \
                or not (float(self.omega_ref) > 0
                        and math.isfinite(float(self.omega_ref))):
            raise InputError("reference frequency must be positive and finite")
        object.__setattr__(self, "omega_ref", float(self.omega_ref))

        delta = np.asarray(self.delta, dtype=float)
        if delta.ndim != 1 or delta.size == 0:
            raise InputError("delta must be a 1-D array, one entry per emitter")
        if not np.all(np.isfinite(delta)):
            raise InputError("delta entries must be finite")
        n = delta.size

        mats = {}
        for name in ("xi", "gamma"):
            mat = np.asarray(getattr(self, name), dtype=complex)
            if mat.shape != (n, n):
                raise InputError(
                    f"{name} has shape {mat.shape}, expected ({n}, {n}) "
                    f"for {n} emitters")
            if not _finite(mat):
                raise InputError(f"{name} entries must be finite")
            mats[name] = _hermitize(mat, name)

        eig = np.linalg.eigvalsh(mats["gamma"])
        norm = float(np.max(np.abs(eig))) if eig.size else 0.0
        if norm > 0.0 and eig[0] < -_PSD_RTOL * norm:
            raise InputError(
                f"decay matrix must be positive semidefinite; smallest "
                f"eigenvalue {eig[0]:.3e} is below -{_PSD_RTOL:g} of the "
                f"norm {norm:.3e}")

        object.__setattr__(self, "delta", _frozen(delta))
        object.__setattr__(self, "xi", _frozen(mats["xi"]))
        object.__setattr__(self, "gamma", _frozen(mats["gamma"]))

    @property
    def n_emitters(self) -> int:
        return self.delta.size

    def to_dict(self) -> dict:
        return {"n_emitters": int(self.n_emitters),
                "omega_ref_rad_per_s": self.omega_ref,
                "delta_rad_per_s": self.delta.tolist(),
                "xi_rad_per_s": {"re": self.xi.real.tolist(),
                                 "im": self.xi.imag.tolist()},
                "gamma_rad_per_s": {"re": self.gamma.real.tolist(),
                                    "im": self.gamma.imag.tolist()}}


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Expectation values on a time grid, one column per emitter.

    sigma holds lab-frame <sigma_a> (complex), sigma_z the inversion.
    rho, when kept, holds density-matrix snapshots in the frame rotating
    at omega_ref (omega_ref = 0 means lab frame). Construction re-checks
    the physical bounds and refuses data that violates them:
    sigma_z within [-1, 1] and |<sigma>| <= 1 up to a slack of 1e-7,
    snapshot traces equal to one within 1e-9.
    """

    times: np.ndarray
    sigma: np.ndarray
    sigma_z: np.ndarray
    omega_ref: float = 0.0
    rho: Optional[np.ndarray] = None
    error_estimate: Optional[float] = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0 or not np.all(np.isfinite(times)):
            raise InputError("time grid must be a finite 1-D array")
        if times.size > 1 and not np.all(np.diff(times) > 0.0):
            raise InputError("time grid must be strictly increasing")
        nt = times.size

        sigma = np.asarray(self.sigma, dtype=complex)
        sigma_z = np.asarray(self.sigma_z, dtype=float)
        if sigma.ndim != 2 or sigma.shape[0] != nt:
            raise InputError(f"sigma has shape {sigma.shape}, expected "
                             f"({nt}, n_emitters)")
        if sigma_z.shape != sigma.shape:
            raise InputError(f"sigma_z shape {sigma_z.shape} does not match "
                             f"sigma shape {sigma.shape}")
        if not (_finite(sigma) and np.all(np.isfinite(sigma_z))):
            raise InputError("expectation values must be finite")
        if np.any(np.abs(sigma_z) > 1.0 + _BOUND_TOL):
            raise InputError("sigma_z leaves [-1, 1] beyond tolerance")
        if np.any(np.abs(sigma) > 1.0 + _BOUND_TOL):
            raise InputError("coherence magnitude exceeds 1 beyond tolerance")

        rho = self.rho
        if rho is not None:
            rho = np.asarray(rho, dtype=complex)
            dim = 2 ** sigma.shape[1]
            if rho.shape != (nt, dim, dim):
                raise InputError(f"rho has shape {rho.shape}, expected "
                                 f"({nt}, {dim}, {dim})")
            if not _finite(rho):
                raise InputError("density snapshots must be finite")
            traces = np.trace(rho, axis1=1, axis2=2)
            if np.max(np.abs(traces - 1.0)) > _TRACE_TOL:
                raise InputError("density matrix trace deviates from one "
                                 f"beyond {_TRACE_TOL:g}")
            rho = _frozen(rho)

        err = self.error_estimate
        if err is not None:
            err = float(err)
            if not (err >= 0.0 and math.isfinite(err)):
                raise InputError("error estimate must be a finite "
                                 "non-negative number")

        object.__setattr__(self, "times", _frozen(times))
        object.__setattr__(self, "sigma", _frozen(sigma))
        object.__setattr__(self, "sigma_z", _frozen(sigma_z))
        object.__setattr__(self, "omega_ref", float(self.omega_ref))
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "error_estimate", err)

    @property
    def n_emitters(self) -> int:
        return self.sigma.shape[1]

    def table(self) -> tuple:
        """Column headers plus a float matrix, one row per grid time."""
        headers = ["time_s"]
        cols = [self.times]
        for a in range(self.n_emitters):
            headers += [f"re_sigma_{a + 1}", f"im_sigma_{a + 1}",
                        f"sigma_z_{a + 1}"]
            cols += [self.sigma[:, a].real, self.sigma[:, a].imag,
                     self.sigma_z[:, a]]
        return headers, np.column_stack(cols)

    def to_dict(self) -> dict:
        return {"times_s": self.times.tolist(),
                "omega_ref_rad_per_s": self.omega_ref,
                "sigma_re": self.sigma.real.tolist(),
                "sigma_im": self.sigma.imag.tolist(),
                "sigma_z": self.sigma_z.tolist(),
                "error_estimate": self.error_estimate}


def _time_grid(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0 or not np.all(np.isfinite(t)):
        raise InputError("time grid must be a finite 1-D array")
    if t.size > 1 and not np.all(np.diff(t) > 0.0):
        raise InputError("time grid must be strictly increasing")
    return t


def _parse_initial(initial) -> tuple:
    if isinstance(initial, str):
        try:
            return {"excited": (0.0 + 0.0j, 1.0),
                    "ground": (0.0 + 0.0j, -1.0)}[initial]
        except KeyError:
            raise InputError(
                f"unknown initial state {initial!r}; use 'excited', "
                f"'ground', or a (sigma, sigma_z) pair") from None
    try:
        sig0, sz0 = initial
        sig0 = complex(sig0)
        sz0 = float(sz0)
    except (TypeError, ValueError) as exc:
        raise InputError("initial state must be 'excited', 'ground', or a "
                         "(sigma, sigma_z) pair") from exc
    if not (np.isfinite(sz0) and np.isfinite(sig0.real)
            and np.isfinite(sig0.imag)):
        raise InputError("initial state entries must be finite")
    if abs(sz0) > 1.0 + 1e-12 or abs(sig0) ** 2 > 0.25 * (1.0 - sz0 ** 2) + 1e-12:
        raise InputError(
            "not a physical qubit state: need |sigma_z| <= 1 and "
            "|<sigma>|^2 <= (1 - sigma_z^2)/4")
    return sig0, sz0


def evolve_single(gamma: float, delta: float, omega0: float, initial,
                  times) -> Trajectory:
    """Closed-form decay of one emitter (no integration, no step error).

    From (sigma0, sz0) at the first grid time, with dt measured from it:

        <sigma_z>(t) = -1 + (1 + sz0) exp(-gamma dt)
        <sigma>(t)   = sigma0 exp(-(gamma/2 + i (omega0 + delta)) dt)

    so an initially excited emitter follows -1 + 2 exp(-gamma t) and the
    coherence of an undamped, unshifted one just rotates at omega0.
    Density snapshots are attached in the lab frame (omega_ref = 0).
    """
    gamma = float(gamma)
    if not (gamma >= 0.0 and math.isfinite(gamma)):
        raise InputError("decay rate must be non-negative and finite")
    delta = float(delta)
    omega0 = float(omega0)
    if not math.isfinite(delta):
        raise InputError("level shift must be finite")
    if not (omega0 >= 0.0 and math.isfinite(omega0)):
        raise InputError("transition frequency must be non-negative")
    times = _time_grid(times)
    sig0, sz0 = _parse_initial(initial)

    dt = times - times[0]
    pe = 0.5 * (1.0 + sz0) * np.exp(-gamma * dt)
    sz = 2.0 * pe - 1.0
    sig = sig0 * np.exp(-(0.5 * gamma + 1j * (omega0 + delta)) * dt)

    nt = times.size
    rho = np.zeros((nt, 2, 2), dtype=complex)
    rho[:, 0, 0] = 1.0 - pe
    rho[:, 1, 1] = pe
    rho[:, 1, 0] = sig
    rho[:, 0, 1] = np.conj(sig)
    return Trajectory(times=times, sigma=sig[:, None], sigma_z=sz[:, None],
                      omega_ref=0.0, rho=rho, error_estimate=0.0)


def _check_density(rho: np.ndarray, dim: int, what: str) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise InputError(f"{what} has shape {rho.shape}, expected "
                         f"({dim}, {dim})")
    if not _finite(rho):
        raise InputError(f"{what} must be finite")
    scale = float(np.max(np.abs(rho)))
    if scale == 0.0 or np.max(np.abs(rho - rho.conj().T)) > _HERM_RTOL * scale:
        raise InputError(f"{what} must be Hermitian")
    if abs(np.trace(rho) - 1.0) > _TRACE_TOL:
        raise InputError(f"{what} must have unit trace within {_TRACE_TOL:g}")
    if np.linalg.eigvalsh(rho)[0] < -1e-9:
        raise InputError(f"{what} must be positive semidefinite")
    return 0.5 * (rho + rho.conj().T)


def evolve_ensemble(model: EmitterEnsembleModel, rho0, times,
                    rtol: float = 1e-10, atol: float = 1e-12,
                    keep_states: Optional[bool] = None) -> Trajectory:
    """Dense master-equation propagation of the full ensemble state.

    Integrates the rotating-frame equation with an adaptive high-order
    Runge-Kutta scheme, evaluates expectations on the requested grid, and
    verifies at every output time that the trace stays at one (within
    1e-9) and the state stays positive: spectral check up to dimension 64,
    diagonal and purity bounds beyond that. Violations raise
    IntegrationError (loosened rtol/atol surface here first).

    Density snapshots are retained for up to 6 emitters by default;
    keep_states forces or suppresses that. The returned error_estimate is
    a deliberately conservative bound on the endpoint expectation error,
    scaled from the requested tolerances and the dimensionless horizon.
    """
    if not isinstance(model, EmitterEnsembleModel):
        raise InputError("model must be an EmitterEnsembleModel")
    n = model.n_emitters
    if n > _MAX_EMITTERS:
        raise InputError(
            f"dense propagation is capped at {_MAX_EMITTERS} emitters "
            f"(state dimension {2 ** _MAX_EMITTERS})")
    dim = 2 ** n
    if keep_states is None:
        keep_states = n <= _MAX_SNAPSHOT
    elif keep_states and n > _MAX_SNAPSHOT:
        raise InputError(f"state snapshots are kept only up to "
                         f"{_MAX_SNAPSHOT} emitters")
    rtol = float(rtol)
    atol = float(atol)
    if not (0.0 < rtol <= 1e-6 and 0.0 < atol <= 1e-6):
        raise InputError("tolerances must be positive, at most 1e-6")
    times = _time_grid(times)
    rho_init = _check_density(rho0, dim, "initial state")

    sig = lowering_operators(n)
    ham = np.zeros((dim, dim), dtype=complex)
    for a in range(n):
        ham += model.delta[a] * (sig[a].conj().T @ sig[a])
        for b in range(n):
            if model.xi[a, b] != 0.0:
                ham += model.xi[a, b] * (sig[a].conj().T @ sig[b])

    eig, vec = np.linalg.eigh(model.gamma)
    jumps = []
    for k in range(n):
        if eig[k] <= 0.0:      # tolerance-band noise, clipped by contract
            continue
        op = np.zeros((dim, dim), dtype=complex)
        for b in range(n):
            op += np.conj(vec[b, k]) * sig[b]
        jumps.append((float(eig[k]), op, op.conj().T))

    drift = -1j * ham
    for w, op, opd in jumps:
        drift = drift - 0.5 * w * (opd @ op)
    drift_h = drift.conj().T
    m2 = dim * dim

    def rhs(_t, y):
        rho = y[:m2].reshape(dim, dim) + 1j * y[m2:].reshape(dim, dim)
        out = drift @ rho + rho @ drift_h
        for w, op, opd in jumps:
            out += w * (op @ rho @ opd)
        return np.concatenate([out.real.ravel(), out.imag.ravel()])

    tau = times - times[0]
    if times.size == 1:
        states = rho_init[None, :, :].copy()
    else:
        y0 = np.concatenate([rho_init.real.ravel(), rho_init.imag.ravel()])
        sol = solve_ivp(rhs, (0.0, float(tau[-1])), y0, method="DOP853",
                        t_eval=tau, rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegrationError(f"step control failed: {sol.message}")
        states = (sol.y[:m2].T.reshape(-1, dim, dim)
                  + 1j * sol.y[m2:].T.reshape(-1, dim, dim))
        states = 0.5 * (states + np.conj(np.swapaxes(states, 1, 2)))

    # state invariants at every output time
    pos_tol = _BOUND_TOL
    for i, snap in enumerate(states):
        if abs(np.trace(snap).real - 1.0) > _TRACE_TOL:
            raise IntegrationError(
                f"trace drifted beyond {_TRACE_TOL:g} at output time "
                f"{times[i]:.6g}; tighten rtol/atol")
        bad = (np.min(np.diagonal(snap).real) < -pos_tol
               or float(np.sum(np.abs(snap) ** 2)) > 1.0 + pos_tol)
        if not bad and dim <= 64:
            bad = np.linalg.eigvalsh(snap)[0] < -pos_tol
        if bad:
            raise IntegrationError(
                f"state positivity violated beyond {pos_tol:g} at output "
                f"time {times[i]:.6g}; tighten rtol/atol")

    nt = times.size
    sig_rot = np.empty((nt, n), dtype=complex)
    sz = np.empty((nt, n))
    for a in range(n):
        num = sig[a].conj().T @ sig[a]
        for i in range(nt):
            sig_rot[i, a] = np.einsum("ij,ji->", states[i], sig[a])
            sz[i, a] = 2.0 * np.einsum("ij,ji->", states[i], num).real - 1.0
    sigma_lab = sig_rot * np.exp(-1j * model.omega_ref * tau)[:, None]

    rate_scale = max(float(np.max(np.abs(np.linalg.eigvalsh(model.gamma)))),
                     float(np.linalg.norm(model.xi, 2)) if n else 0.0,
                     float(np.max(np.abs(model.delta))))
    horizon = float(tau[-1]) * rate_scale
    estimate = (50.0 + 10.0 * horizon) * rtol + 10.0 * (1.0 + horizon) * atol

    return Trajectory(times=times, sigma=sigma_lab, sigma_z=sz,
                      omega_ref=model.omega_ref,
                      rho=states if keep_states else None,
                      error_estimate=estimate)


# --- assembling ensemble coefficients from an environment -------------------

def _real_entry(value: complex, what: str) -> float:
    value = complex(value)
    if abs(value.imag) > 1e-8 * max(abs(value), 1e-300):
        raise ModelDomainError(
            f"{what} came out complex beyond tolerance; the environment's "
            f"spectral density is not Hermitian for this emitter")
    return float(value.real)


def _reference_frequency(emitters, omega_ref, freq_ratio_tol) -> float:
    if omega_ref is None:
        omega_ref = float(np.mean([e.omega0 for e in emitters]))
    else:
        omega_ref = float(omega_ref)
    if not (omega_ref > 0 and math.isfinite(omega_ref)):
        raise InputError("reference frequency must be positive and finite")
    worst = max(abs(e.omega0 - omega_ref) for e in emitters)
    if worst > freq_ratio_tol * omega_ref:
        raise InputError(
            f"emitter transition frequencies deviate from the reference by "
            f"more than a fraction {freq_ratio_tol:g}; the collective "
            f"coefficients assume near-degenerate emitters")
    return omega_ref


def build_ensemble(emitters, environment, omega_ref: Optional[float] = None,
                   freq_ratio_tol: float = 1e-2, method: str = "auto",
                   rel_tol: float = 1e-8) -> EmitterEnsembleModel:
    """Ensemble coefficients from pairwise environment responses.

    environment selects the route:

    * Medium: uniform-medium analytics. Decay entries come from the
      two-point imaginary-part jet (coincident jet on the diagonal),
      couplings from the imaginary-axis form of the pair-bound spectral
      model. Level shifts are zero by convention (the uniform background
      shift is absorbed into the transition frequencies). Emitters at the
      same position have a divergent coherent coupling and are rejected.
    * TensorGrid: sampled coincident data. Only the decay diagonal can be
      filled (a coincident map carries no two-point propagation), so
      cross couplings and shifts are zero; emitters must lie inside the
      grid. When omega_ref is omitted it is taken from the grid.
    * callable (a, b) -> spectral model or None: fully custom. Diagonal
      models supply the decay entry, and the level shift when they
      declare themselves scattered; off-diagonal models supply decay and
      coherent coupling. None leaves the pair at zero.

    Off-diagonal entries are computed once per unordered pair and
    mirrored, so the matrices are exactly Hermitian; positive
    semidefiniteness of the decay matrix is then enforced by the model
    container. Emitters with no moments contribute zero rows and columns.
    """
    ems = list(emitters)
    if not ems:
        raise InputError("at least one emitter is required")
    for e in ems:
        if not isinstance(e, MultipoleEmitter):
            raise InputError("emitters must be MultipoleEmitter instances")
    if isinstance(environment, TensorGrid) and omega_ref is None:
        omega_ref = environment.frequency
    wbar = _reference_frequency(ems, omega_ref, freq_ratio_tol)

    n = len(ems)
    delta = np.zeros(n)
    xi = np.zeros((n, n), dtype=complex)
    gamma = np.zeros((n, n), dtype=complex)

    if isinstance(environment, Medium):
        jet0 = coincident_im_jet(wbar, environment)
        for a in range(n):
            gamma[a, a] = _real_entry(
                collective_rate(ems[a], ems[a], jet0, omega_bar=wbar,
                                freq_ratio_tol=freq_ratio_tol).gamma_cross,
                "decay rate")
        for a in range(n):
            for b in range(a + 1, n):
                if not (ems[a].active_channels() and ems[b].active_channels()):
                    continue
                ra, rb = ems[a].position, ems[b].position
                if float(np.linalg.norm(ra - rb)) == 0.0:
                    raise CoincidentPointError(
                        "coherent coupling diverges for emitters at the "
                        "same position; assemble the model directly with "
                        "the xi you intend")
                jet = eval_homogeneous_jet(ra, rb, wbar, environment)
                gamma[a, b] = collective_rate(
                    ems[a], ems[b], jet, omega_bar=wbar,
                    freq_ratio_tol=freq_ratio_tol).gamma_cross
                gamma[b, a] = np.conj(gamma[a, b])
                pair = homogeneous_pair_model(environment, ra, rb)
                xi[a, b] = coupling_strength(
                    ems[a], ems[b], pair, omega_bar=wbar, method=method,
                    freq_ratio_tol=freq_ratio_tol, rel_tol=rel_tol).xi
                xi[b, a] = np.conj(xi[a, b])

    elif isinstance(environment, TensorGrid):
        if abs(environment.frequency - wbar) > freq_ratio_tol * wbar:
            raise InputError(
                "grid frequency differs from the reference frequency by "
                "more than the allowed fraction")
        for a in range(n):
            jet = environment.jet_at(ems[a].position)
            gamma[a, a] = _real_entry(
                collective_rate(ems[a], ems[a], jet, omega_bar=wbar,
                                freq_ratio_tol=freq_ratio_tol).gamma_cross,
                "decay rate")

    elif callable(environment):
        for a in range(n):
            pair = environment(ems[a], ems[a])
            if pair is None:
                continue
            gamma[a, a] = _real_entry(
                collective_rate(ems[a], ems[a], pair, omega_bar=wbar,
                                freq_ratio_tol=freq_ratio_tol).gamma_cross,
                "decay rate")
            if pair.scattered:
                delta[a] = lamb_shift(ems[a], pair, method=method,
                                      rel_tol=rel_tol)
        for a in range(n):
            for b in range(a + 1, n):
                pair = environment(ems[a], ems[b])
                if pair is None:
                    continue
                gamma[a, b] = collective_rate(
                    ems[a], ems[b], pair, omega_bar=wbar,
                    freq_ratio_tol=freq_ratio_tol).gamma_cross
                gamma[b, a] = np.conj(gamma[a, b])
                xi[a, b] = coupling_strength(
                    ems[a], ems[b], pair, omega_bar=wbar, method=method,
                    freq_ratio_tol=freq_ratio_tol, rel_tol=rel_tol).xi
                xi[b, a] = np.conj(xi[a, b])

    else:
        raise InputError(
            "environment must be a homogeneous Medium, a sampled "
            "TensorGrid, or a callable mapping an emitter pair to a "
            "spectral model")

    return EmitterEnsembleModel(omega_ref=wbar, delta=delta, xi=xi,
                                gamma=gamma)

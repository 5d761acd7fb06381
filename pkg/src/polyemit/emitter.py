"""Multipole emitters and their generalized-moment contractions.

A two-level emitter couples to the field through its electric dipole d, a
magnetic dipole m, and an electric quadrupole Q. The three moments combine
into one frequency-dependent differential operator acting on Green-tensor
arguments: row index mu, derivative index k,

    coeff(w)[mu, k] = Q[mu, k] + (i/w) * sum_p eps[p, k, mu] m[p]

so a pairing of two emitters with a Green jet needs the jet value, both
first-derivative blocks, and the mixed second derivative. The left (bra)
emitter enters conjugated and pairs with the first tensor index and the
field-point derivatives; the right (ket) emitter pairs with the second
index and the source-point derivatives.

Frequency structure: products of two such operators depend on frequency as
F(w) = f0 + f1/w + f2/w^2 with constant tensors f0, f1, f2. That polynomial
structure in 1/w is what the spectral-integral machinery relies on, so this
module exposes it directly (CoefficientBundle).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np

from .constants import (ATOMIC_DIPOLE, ATOMIC_QUADRUPOLE, BOHR_MAGNETON, C0,
                        EPS0, HBAR)
from .errors import InputError, MissingDerivativeError
from .jets import GreensJet

__all__ = ["CHANNELS", "MultipoleEmitter", "bilinear_form",
           "channel_decompose", "CoefficientBundle", "moment_product_bundle",
           "rmn_imn", "normalize_channels"]

CHANNELS = ("ED", "MD", "EQ")

# Levi-Civita symbol, eps[i, j, k]
_EPS = np.zeros((3, 3, 3))
for _i, _j, _k, _s in ((0, 1, 2, 1), (1, 2, 0, 1), (2, 0, 1, 1),
                       (0, 2, 1, -1), (2, 1, 0, -1), (1, 0, 2, -1)):
    _EPS[_i, _j, _k] = _s

# 1 / (hbar pi eps0 c^2): normalization of the spectral coefficient tensors
SPECTRAL_NORM = 1.0 / (HBAR * np.pi * EPS0 * C0 ** 2)


def normalize_channels(channels) -> frozenset:
    if channels is None:
        return frozenset(CHANNELS)
    if isinstance(channels, str):
        channels = [channels]
    out = frozenset(str(c).upper() for c in channels)
    bad = out - set(CHANNELS)
    if bad:
        raise InputError(f"unknown channels {sorted(bad)}; valid: {CHANNELS}")
    if not out:
        raise InputError("channel selection must be non-empty")
    return out


def _as_complex_vector(v, name) -> np.ndarray:
    a = np.asarray(v, dtype=complex)
    if a.shape != (3,):
        raise InputError(f"{name} must be a 3-vector")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} has non-finite entries")
    return a


def _as_complex_matrix(v, name) -> np.ndarray:
    a = np.asarray(v, dtype=complex)
    if a.shape != (3, 3):
        raise InputError(f"{name} must be a 3x3 tensor")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} has non-finite entries")
    return a


def _parse_complex_array(node, shape, name):
    """JSON complex encoding: a number, or an [re, im] pair, nested in lists."""
    def scal(x):
        if isinstance(x, (int, float)):
            return complex(x)
        if (isinstance(x, (list, tuple)) and len(x) == 2
                and all(isinstance(t, (int, float)) for t in x)):
            return complex(x[0], x[1])
        raise InputError(f"{name}: cannot parse complex entry {x!r}")

    arr = np.empty(shape, dtype=complex)
    try:
        if len(shape) == 1:
            for i in range(shape[0]):
                arr[i] = scal(node[i])
        else:
            for i in range(shape[0]):
                for j in range(shape[1]):
                    arr[i, j] = scal(node[i][j])
    except (IndexError, TypeError, KeyError) as exc:
        raise InputError(f"{name}: wrong shape, expected {shape}") from exc
    return arr


@dataclass(frozen=True)
class MultipoleEmitter:
    """Position (m), transition frequency (rad/s), and transition moments.

    Units: d in C m, m in J/T, Q in C m^2. Q is used exactly as supplied;
    no symmetrization or trace removal happens behind the caller's back.
    """

    position: np.ndarray
    omega0: float
    d: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=complex))
    m: np.ndarray = field(default_factory=lambda: np.zeros(3, dtype=complex))
    Q: np.ndarray = field(default_factory=lambda: np.zeros((3, 3), dtype=complex))

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,):
            raise InputError("emitter position must be a 3-vector (meters)")
        object.__setattr__(self, "position", pos)
        if not (self.omega0 > 0 and np.isfinite(self.omega0)):
            raise InputError("transition frequency must be positive")
        object.__setattr__(self, "omega0", float(self.omega0))
        object.__setattr__(self, "d", _as_complex_vector(self.d, "d"))
        object.__setattr__(self, "m", _as_complex_vector(self.m, "m"))
        object.__setattr__(self, "Q", _as_complex_matrix(self.Q, "Q"))

    # -- derived quantities ------------------------------------------------

    def magnetic_coupling(self) -> np.ndarray:
        """M[mu, k] = sum_p eps[p, k, mu] m_p (the i/w factor lives elsewhere)."""
        return np.einsum('pkm,p->mk', _EPS, self.m)

    def derivative_coefficient(self, omega: float,
                               channels: frozenset) -> np.ndarray:
        c = np.zeros((3, 3), dtype=complex)
        if "EQ" in channels:
            c = c + self.Q
        if "MD" in channels:
            c = c + (1j / omega) * self.magnetic_coupling()
        return c

    def active_channels(self) -> frozenset:
        out = set()
        if np.any(self.d != 0):
            out.add("ED")
        if np.any(self.m != 0):
            out.add("MD")
        if np.any(self.Q != 0):
            out.add("EQ")
        return frozenset(out)

    def check_q_real_symmetric(self, tol: float = 1e-12):
        """Verify a caller's declaration that Q is real and symmetric."""
        scale = float(np.max(np.abs(self.Q)))
        if scale == 0.0:
            return
        if np.max(np.abs(self.Q.imag)) > tol * scale:
            raise InputError("Q declared real-symmetric but has imaginary parts")
        if np.max(np.abs(self.Q - self.Q.T)) > tol * scale:
            raise InputError("Q declared real-symmetric but is not symmetric")

    # -- construction from files -------------------------------------------

    @classmethod
    def from_dict(cls, data: Mapping) -> "MultipoleEmitter":
        if "position_m" not in data or "omega0_rad_per_s" not in data:
            raise InputError("emitter description needs position_m and "
                             "omega0_rad_per_s")
        pos = np.asarray(data["position_m"], dtype=float)
        omega0 = float(data["omega0_rad_per_s"])

        def moment(si_key, atomic_key, shape, unit):
            given_si = si_key in data
            given_at = atomic_key in data
            if given_si and given_at:
                raise InputError(f"give {si_key} or {atomic_key}, not both")
            if given_si:
                return _parse_complex_array(data[si_key], shape, si_key)
            if given_at:
                return unit * _parse_complex_array(data[atomic_key], shape,
                                                   atomic_key)
            return np.zeros(shape, dtype=complex)

        d = moment("d_Cm", "d_atomic", (3,), ATOMIC_DIPOLE)
        m = moment("m_J_per_T", "m_bohr_magnetons", (3,), BOHR_MAGNETON)
        Q = moment("Q_Cm2", "Q_atomic", (3, 3), ATOMIC_QUADRUPOLE)
        known = {"position_m", "omega0_rad_per_s", "d_Cm", "d_atomic",
                 "m_J_per_T", "m_bohr_magnetons", "Q_Cm2", "Q_atomic"}
        unknown = set(data) - known
        if unknown:
            raise InputError(f"unknown emitter fields {sorted(unknown)}")
        return cls(position=pos, omega0=omega0, d=d, m=m, Q=Q)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "MultipoleEmitter":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputError(f"{path}: not valid JSON ({exc})") from exc
        except OSError as exc:
            raise InputError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InputError(f"{path}: emitter file must hold a JSON object")
        return cls.from_dict(data)


def _value_coefficient(e: MultipoleEmitter, channels: frozenset) -> np.ndarray:
    return e.d if "ED" in channels else np.zeros(3, dtype=complex)


def bilinear_form(a: MultipoleEmitter, b: MultipoleEmitter, jet: GreensJet,
                  omega: float, channels_a=None, channels_b=None) -> complex:
    """Pair two emitters through a Green jet: sum over tensor entries of
    conj(D_a) x D_b applied to the jet blocks.

    Conjugation sits on the a side. For a full jet this contracts the
    complex Green blocks; for an imaginary-part jet it contracts the stored
    Im values (result then carries Im G semantics). Requires omega > 0 and
    real (the spectral machinery handles complex frequencies by analytic
    continuation of coefficient bundles, never by conjugating at complex
    frequency).
    """
    if not (isinstance(omega, (int, float)) and omega > 0):
        raise InputError("bilinear_form needs a real positive frequency")
    cha = normalize_channels(channels_a)
    chb = normalize_channels(channels_b)

    da = _value_coefficient(a, cha)
    db = _value_coefficient(b, chb)
    ca = a.derivative_coefficient(omega, cha)
    cb = b.derivative_coefficient(omega, chb)

    have_da, have_db = bool(np.any(da != 0)), bool(np.any(db != 0))
    have_ca, have_cb = bool(np.any(ca != 0)), bool(np.any(cb != 0))

    total = 0.0 + 0.0j
    if have_da and have_db:
        total += np.einsum('m,mn,n->', da.conj(), jet.value, db)
    if have_ca and have_db:
        total += np.einsum('mk,mnk,n->', ca.conj(), jet.block("d_obs"), db)
    if have_da and have_cb:
        total += np.einsum('m,mnl,nl->', da.conj(), jet.block("d_src"), cb)
    if have_ca and have_cb:
        total += np.einsum('mk,mnkl,nl->', ca.conj(), jet.block("d_mixed"), cb)
    return complex(total)


def channel_decompose(a: MultipoleEmitter, b: MultipoleEmitter,
                      jet: GreensJet, omega: float) -> dict:
    """Map (channel_a, channel_b) -> complex contribution; sums to the
    all-channel bilinear form by bilinearity."""
    out = {}
    for ca in CHANNELS:
        for cb in CHANNELS:
            out[(ca, cb)] = bilinear_form(a, b, jet, omega, {ca}, {cb})
    return out


@dataclass(frozen=True)
class CoefficientBundle:
    """Frequency decomposition F(w) = f0 + f1/w + f2/w^2 of the normalized
    moment product conj(D_a) x D_b / (hbar pi eps0 c^2).

    Each field maps block name (value/d_obs/d_src/d_mixed) to a constant
    complex tensor shaped like the block. Real and imaginary parts of F(w)
    are the spectral coefficient tensors commonly written R_mn and I_mn.
    """

    f0: dict
    f1: dict
    f2: dict

    _SHAPES = {"value": (3, 3), "d_obs": (3, 3, 3), "d_src": (3, 3, 3),
               "d_mixed": (3, 3, 3, 3)}
    _SUM = {"value": 'mn,mn->', "d_obs": 'mnk,mnk->',
            "d_src": 'mnl,mnl->', "d_mixed": 'mnkl,mnkl->'}

    def at(self, omega: complex) -> dict:
        """F(omega) per block, by analytic continuation in 1/omega."""
        out = {}
        for name in self._SHAPES:
            acc = np.zeros(self._SHAPES[name], dtype=complex)
            if name in self.f0:
                acc = acc + self.f0[name]
            if name in self.f1:
                acc = acc + self.f1[name] / omega
            if name in self.f2:
                acc = acc + self.f2[name] / omega ** 2
            if np.any(acc != 0):
                out[name] = acc
        return out

    def required_blocks(self) -> set:
        names = set()
        for coeffs in (self.f0, self.f1, self.f2):
            for name, tensor in coeffs.items():
                if np.any(tensor != 0):
                    names.add(name)
        return names

    def contract(self, blocks: Mapping, coeffs: Mapping) -> complex:
        """sum over blocks of coeff tensor (conjugate-free) dot block array."""
        total = 0.0 + 0.0j
        for name, coeff in coeffs.items():
            blk = blocks.get(name)
            if blk is None:
                raise MissingDerivativeError(
                    f"jet lacks the {name} block needed by the enabled "
                    f"channels")
            total += np.einsum(self._SUM[name], coeff, blk)
        return complex(total)

    def spectral_density(self, jet: GreensJet, omega: float) -> complex:
        """Z(omega) = sum F(omega) dot Im-part jet blocks."""
        im = jet.imag_part()
        blocks = {n: getattr(im, n) for n in self._SHAPES}
        return self.contract(blocks, self.at(omega))

    def real_part_contraction(self, jet: GreensJet, omega: float) -> complex:
        """sum F(omega) dot Re-part blocks (needs a full jet)."""
        jet.require_full()
        blocks = {n: None if getattr(jet, n) is None else getattr(jet, n).real
                  for n in self._SHAPES}
        return self.contract(blocks, self.at(omega))


def moment_product_bundle(a: MultipoleEmitter, b: MultipoleEmitter,
                          channels_a=None, channels_b=None) -> CoefficientBundle:
    """Coefficient tensors of conj(D_a) x D_b / (hbar pi eps0 c^2).

    f0 collects the frequency-independent parts (d and Q), f1 the single
    magnetic factors, f2 the double magnetic factor. Channel selections mask
    moments per side before the products are formed.
    """
    cha = normalize_channels(channels_a)
    chb = normalize_channels(channels_b)
    zero3 = np.zeros(3, dtype=complex)
    zero33 = np.zeros((3, 3), dtype=complex)

    da = a.d if "ED" in cha else zero3
    db = b.d if "ED" in chb else zero3
    qa = a.Q if "EQ" in cha else zero33
    qb = b.Q if "EQ" in chb else zero33
    ma = a.magnetic_coupling() if "MD" in cha else zero33
    mb = b.magnetic_coupling() if "MD" in chb else zero33

    s = SPECTRAL_NORM
    f0, f1, f2 = {}, {}, {}

    def put(d, name, tensor):
        if np.any(tensor != 0):
            d[name] = tensor

    put(f0, "value", s * np.einsum('m,n->mn', da.conj(), db))
    put(f0, "d_obs", s * np.einsum('mk,n->mnk', qa.conj(), db))
    put(f0, "d_src", s * np.einsum('m,nl->mnl', da.conj(), qb))
    put(f0, "d_mixed", s * np.einsum('mk,nl->mnkl', qa.conj(), qb))

    put(f1, "d_obs", -1j * s * np.einsum('mk,n->mnk', ma.conj(), db))
    put(f1, "d_src", 1j * s * np.einsum('m,nl->mnl', da.conj(), mb))
    put(f1, "d_mixed", 1j * s * (np.einsum('mk,nl->mnkl', qa.conj(), mb)
                                 - np.einsum('mk,nl->mnkl', ma.conj(), qb)))

    put(f2, "d_mixed", s * np.einsum('mk,nl->mnkl', ma.conj(), mb))

    return CoefficientBundle(f0=f0, f1=f1, f2=f2)


def rmn_imn(a: MultipoleEmitter, b: MultipoleEmitter, omega: float,
            channels_a=None, channels_b=None) -> tuple[dict, dict]:
    """Real and imaginary spectral coefficient tensors at a real frequency.

    Returns (R, I): block name -> real tensor, normalized by
    1/(hbar pi eps0 c^2), evaluated from the f0 + f1/w + f2/w^2 structure.
    """
    if not omega > 0:
        raise InputError("rmn_imn needs a positive frequency")
    bundle = moment_product_bundle(a, b, channels_a, channels_b)
    F = bundle.at(omega)
    R = {name: np.ascontiguousarray(t.real) for name, t in F.items()}
    I = {name: np.ascontiguousarray(t.imag) for name, t in F.items()}
    return R, I

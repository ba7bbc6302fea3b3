"""Energy functional, derivatives, and fibering maps along rays.

For parameters (lam, mu) and lift phi the energy of a field v is

    E(v) = 1/2 ||v||^2 - lam/2 ||v + mu phi||_2^2 - 1/2* ||v + mu phi||_{2*}^{2*}

with 2* = 2N/(N-2).  The fibering map of a ray v is t -> E(t v); its first
two derivatives in t and the convexity threshold t0 below which the second
derivative is guaranteed positive are evaluated here.  Scalar ray
coefficients are computed once per ray; the critical-power integrals are
re-quadratured at every t (no closed form exists for fractional 2*).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .errors import ArgumentError, MuTooLargeError
from .grid import Field, SpectralData, _default_bump
from .lift import HarmonicLift
from .numutil import abs_pow, signed_pow

_BATCH_ELEMS = 4_000_000  # cap on elements of one t-batch times node count


def two_star_exponent(ndim: int) -> float:
    return 2.0 * ndim / (ndim - 2.0)


@dataclass(frozen=True)
class Params:
    """Problem parameters (lam, mu) bound to one domain's spectral data and lift."""

    lam: float
    mu: float
    spectral: SpectralData
    lift: HarmonicLift
    admissible: bool = dc_field(init=False)
    admissible_note: str = dc_field(init=False)

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam < 0:
            raise ArgumentError(f"lambda must be finite and >= 0, got {self.lam}")
        if not np.isfinite(self.mu) or self.mu < 0:
            raise ArgumentError(f"mu must be finite and >= 0, got {self.mu}")
        if self.spectral.domain is not self.lift.phi.domain:
            raise ArgumentError("spectral data and lift built on different domains")
        ok, note = _probe_admissibility(self)
        object.__setattr__(self, "admissible", ok)
        object.__setattr__(self, "admissible_note", note)

    @property
    def domain(self):
        return self.lift.phi.domain

    @property
    def two_star(self):
        return two_star_exponent(self.domain.ndim)

    @property
    def lambda1(self):
        return self.spectral.lambda1

    @property
    def mu_phi(self):
        """Raw value array of mu * phi."""
        return self.mu * self.lift.phi.values


def energy(v: Field, p: Params) -> float:
    d = v.domain
    w = v.values + p.mu_phi
    ts = p.two_star
    return (
        0.5 * d.h1_norm_sq(v.values)
        - 0.5 * p.lam * d.l2_norm_sq(w)
        - d.weight * float(np.sum(abs_pow(w, ts))) / ts
    )


def gradient(v: Field, p: Params) -> Field:
    """L2 representation: -Lap v - lam (v + mu phi) - |v + mu phi|^(2*-2)(v + mu phi)."""
    d = v.domain
    w = v.values + p.mu_phi
    g = d.apply_neg_laplacian(v.values) - p.lam * w - signed_pow(w, p.two_star - 1.0)
    return Field(g, d)


def hessian_apply(v: Field, h: Field, p: Params) -> Field:
    """-Lap h - lam h - (2*-1)|v + mu phi|^(2*-2) h."""
    d = v.domain
    w = v.values + p.mu_phi
    ts = p.two_star
    out = d.apply_neg_laplacian(h.values) - p.lam * h.values
    out -= (ts - 1.0) * abs_pow(w, ts - 2.0) * h.values
    return Field(out, d)


class FiberingProfile:
    """Scalar data of one fibering map t -> E(t v).

    Ray coefficients (||v||^2, ||v||_2^2, integrals against phi) are frozen at
    construction; the critical integrals are evaluated per t.  The roots
    t_plus/t_minus stay None until a root finder fills them in, after which
    the profile is treated as immutable.
    """

    def __init__(self, v: Field, p: Params):
        if not np.any(v.values):
            raise ArgumentError("fibering ray must be nonzero")
        d = v.domain
        if d is not p.domain:
            raise ArgumentError("ray and parameters live on different domains")
        self.v = v
        self.p = p
        ts = p.two_star
        w0 = d.weight
        vv = v.values
        phi = p.lift.phi.values
        self.a = d.h1_norm_sq(vv)
        self.l2 = d.l2_norm_sq(vv)
        self.phi_v = w0 * float(np.dot(phi, vv))
        self.phi_l2 = d.l2_norm_sq(phi)
        self.v_crit = w0 * float(np.sum(abs_pow(vv, ts)))
        self.phi_crit_v2 = w0 * float(np.dot(abs_pow(phi, ts - 2.0), vv**2))
        self.sign_pairing = p.lam * p.mu * self.phi_v + p.mu ** (ts - 1.0) * w0 * float(
            np.dot(abs_pow(phi, ts - 1.0), vv)
        )
        self.t_plus: Optional[float] = None
        self.t_minus: Optional[float] = None
        self._t0: Optional[float] = None

    @property
    def t0(self) -> float:
        """Convexity threshold: T'' > 0 is guaranteed on (0, t0)."""
        if self._t0 is None:
            p = self.p
            ts = p.two_star
            c = (ts - 1.0) * 2.0 ** (ts - 2.0)
            num = self.a - p.lam * self.l2 - c * p.mu ** (ts - 2.0) * self.phi_crit_v2
            if num <= 0:
                raise MuTooLargeError(
                    f"mu too large for this ray: t0 numerator {num:.6e} <= 0",
                    numerator=num,
                )
            self._t0 = (num / (c * self.v_crit)) ** (1.0 / (ts - 2.0))
        return self._t0

    # -- critical integrals, evaluated per t --------------------------------

    def _batched(self, t, kernel):
        t = np.asarray(t, dtype=float)
        scalar = t.ndim == 0
        tt = np.atleast_1d(t)
        n = self.v.values.size
        out = np.empty(tt.size)
        chunk = max(1, _BATCH_ELEMS // max(n, 1))
        muphi = self.p.mu_phi
        for s in range(0, tt.size, chunk):
            block = tt[s : s + chunk, None] * self.v.values[None, :] + muphi[None, :]
            out[s : s + chunk] = kernel(block)
        return float(out[0]) if scalar else out

    def crit_mass(self, t):
        """int |t v + mu phi|^{2*} dx."""
        ts = self.p.two_star
        w0 = self.v.domain.weight
        return self._batched(t, lambda W: w0 * abs_pow(W, ts).sum(axis=1))

    def crit_pair_v(self, t):
        """int |t v + mu phi|^{2*-2} (t v + mu phi) v dx."""
        ts = self.p.two_star
        w0 = self.v.domain.weight
        vv = self.v.values
        return self._batched(
            t, lambda W: w0 * (signed_pow(W, ts - 1.0) * vv[None, :]).sum(axis=1)
        )

    def crit_quad_v2(self, t):
        """int |t v + mu phi|^{2*-2} v^2 dx."""
        ts = self.p.two_star
        w0 = self.v.domain.weight
        v2 = self.v.values**2
        return self._batched(
            t, lambda W: w0 * (abs_pow(W, ts - 2.0) * v2[None, :]).sum(axis=1)
        )

    # -- fibering map and derivatives ----------------------------------------

    def T(self, t):
        p = self.p
        ts = p.two_star
        t = np.asarray(t, dtype=float)
        quad = t**2 * self.l2 + 2.0 * t * p.mu * self.phi_v + p.mu**2 * self.phi_l2
        val = 0.5 * t**2 * self.a - 0.5 * p.lam * quad - self.crit_mass(t) / ts
        return float(val) if val.ndim == 0 else val

    def dT(self, t):
        p = self.p
        t = np.asarray(t, dtype=float)
        val = t * self.a - p.lam * (t * self.l2 + p.mu * self.phi_v) - self.crit_pair_v(t)
        return float(val) if val.ndim == 0 else val

    def d2T(self, t):
        p = self.p
        ts = p.two_star
        val = self.a - p.lam * self.l2 - (ts - 1.0) * self.crit_quad_v2(t)
        if np.ndim(t) == 0:
            return float(val)
        return val


def fibering_profile(v: Field, p: Params) -> FiberingProfile:
    return FiberingProfile(v, p)


def fibering(v: Field, p: Params, t):
    """(T, T', T'') of the fibering map of ray v at t >= 0."""
    if np.any(np.asarray(t) < 0):
        raise ArgumentError("fibering parameter t must be >= 0")
    prof = FiberingProfile(v, p)
    return prof.T(t), prof.dT(t), prof.d2T(t)


def fibering_t0(v: Field, p: Params) -> float:
    return FiberingProfile(v, p).t0


def _probe_admissibility(p: Params):
    """Operational admissibility of (lam, mu): t0 well defined and T'(t0) > 0
    on a fixed probe set.  Advisory; operations re-check on their own rays."""
    if p.lam >= p.spectral.lambda1:
        return False, "lam >= lambda1 (nonexistence regime)"
    if p.mu == 0.0:
        return True, "homogeneous case"
    domain = p.spectral.domain
    probes = [p.spectral.e1]
    bump = _default_bump(domain)
    l2 = np.sqrt(domain.l2_norm_sq(bump))
    if l2 > 0:
        probes.append(Field(bump / l2, domain))
    try:
        for probe in probes:
            prof = FiberingProfile(probe, p)
            if prof.dT(prof.t0) <= 0:
                return False, "T'(t0) <= 0 on a probe ray"
    except MuTooLargeError as e:
        return False, f"t0 undefined on a probe ray ({e})"
    return True, "probe rays passed"

"""Solution searches on the two Nehari manifold parts.

The local branch near zero (class Plus) and the excited branch (class Minus)
are found by projected gradient descent — a gradient step followed by
rescaling onto the manifold via the fibering roots of the stepped ray — with
a final Newton polish of the full first-order system.  Bubble-translated
seeds on annular domains, the boundary-pinned minimax search, and
continuation in mu toward the solvability boundary build on the same two
minimizers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dc_field
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .errors import (
    ArgumentError,
    BranchAbsentError,
    DegenerateSeedError,
    MuBeyondRangeError,
    MuTooLargeError,
    NonconvergenceError,
    PreconditionError,
    ProjectionError,
    SeedingError,
)
from .functional import Params, energy
from .grid import AnnulusD, Domain, Field, _default_bump
from .lift import compose_solution
from .nehari import Klass, NehariClass, barycenter, classify, find_roots
from .numutil import abs_pow, signed_pow, smoothstep, solve_cg, solve_minres


class SeedKind(enum.Enum):
    ZERO_RELAX = "zero_relax"
    GROUND_STATE_RAY = "ground_state_ray"
    BUBBLE = "bubble"
    MINIMAX = "minimax"
    USER = "user"


@dataclass
class SolutionRecord:
    v: Field
    u: Field
    energy: float
    nehari_class: NehariClass
    grad_norm: float
    positive: bool
    seed: SeedKind
    iterations: int
    lam: float
    mu: float
    barycenter: np.ndarray
    grad_dir_integral: np.ndarray
    seed_direction: Optional[np.ndarray] = None
    seed_energy: Optional[float] = None
    seed_below_threshold: Optional[bool] = None

    def to_json_dict(self):
        d = {
            "lambda": self.lam,
            "mu": self.mu,
            "energy": self.energy,
            "class": self.nehari_class.klass.name,
            "grad_norm": self.grad_norm,
            "positive": bool(self.positive),
            "seed": self.seed.value,
            "barycenter": [float(x) for x in self.barycenter],
            "grad_dir_integral": [float(x) for x in self.grad_dir_integral],
            "iterations": int(self.iterations),
        }
        if self.seed_direction is not None:
            d["seed_direction"] = [float(x) for x in self.seed_direction]
        if self.seed_energy is not None:
            d["seed_energy"] = self.seed_energy
        if self.seed_below_threshold is not None:
            d["seed_below_threshold"] = bool(self.seed_below_threshold)
        return d


def _target_tol(p: Params, vvals, e_val):
    """Convergence target on the gradient norm; well inside every certificate
    tolerance used downstream."""
    h1 = np.sqrt(p.domain.h1_norm_sq(vvals))
    return 1e-9 * (1.0 + h1 + abs(e_val))


def _grad_raw(p: Params, vvals):
    w = vvals + p.mu_phi
    return p.domain.apply_neg_laplacian(vvals) - p.lam * w - signed_pow(w, p.two_star - 1.0)


def _wnorm(domain: Domain, vals):
    return float(np.sqrt(domain.weight) * np.linalg.norm(vals))


def _riesz(domain: Domain, gvals, x0=None, rtol=1e-8):
    d, _ = solve_cg(domain.matrix, gvals, x0=x0, rtol=rtol, maxiter=20 * domain.n_interior,
                    label="riesz lift")
    return d


def _newton_polish(p: Params, vvals, max_steps=40, inner_rtol=1e-9):
    """Damped Newton on the full first-order system; returns
    (values, grad_norm, steps, converged)."""
    d = p.domain
    A = d.matrix
    ts = p.two_star
    v = np.array(vvals, dtype=float)
    g = _grad_raw(p, v)
    gn = _wnorm(d, g)
    for k in range(max_steps):
        e_val = energy(Field(v, d), p)
        if gn <= _target_tol(p, v, e_val):
            return v, gn, k, True
        w = v + p.mu_phi
        H = A - sparse.diags(p.lam + (ts - 1.0) * abs_pow(w, ts - 2.0))
        delta, _ = solve_minres(H, -g, rtol=min(1e-2, inner_rtol + 0.1 * gn), maxiter=4000,
                                label="newton step")
        step = 1.0
        accepted = False
        for _ in range(30):
            vt = v + step * delta
            gt = _grad_raw(p, vt)
            gnt = _wnorm(d, gt)
            if gnt < (1.0 - 0.25 * step) * gn:
                v, g, gn = vt, gt, gnt
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    e_val = energy(Field(v, d), p)
    return v, gn, max_steps, gn <= _target_tol(p, v, e_val)


def zero_relax_seed(p: Params) -> Field:
    """One descent step from zero: the negative gradient of the energy at 0."""
    s = p.lam * p.mu_phi + signed_pow(p.mu_phi, p.two_star - 1.0)
    if not np.any(s):
        raise BranchAbsentError("gradient at zero vanishes (mu = 0): no local branch")
    return Field(s, p.domain)


def minimize_on_Nplus(
    p: Params,
    seed: Optional[Field] = None,
    max_iter: int = 200,
    budget_factor: float = 1.0,
) -> SolutionRecord:
    """Minimize the energy on the Plus part of the manifold.

    Projected descent (gradient step, rescale to the t_plus root of the new
    ray) with an absolute-value move whenever an iterate goes negative,
    finished by a Newton polish.
    """
    if p.mu == 0.0:
        raise BranchAbsentError("the Plus branch is empty at mu = 0")
    d = p.domain
    seed_kind = SeedKind.USER if seed is not None else SeedKind.ZERO_RELAX
    if seed is None:
        seed = zero_relax_seed(p)

    budget = max(1, int(max_iter * budget_factor))
    pairing_positive_seen = False

    def project_plus(vals):
        nonlocal pairing_positive_seen
        f = Field(vals, d)
        rr = find_roots(f, p)
        if rr.t_plus is None:
            return None
        pairing_positive_seen = True
        return rr.t_plus * vals

    v = project_plus(seed.values)
    if v is None:
        # |seed| has nonnegative pairing against phi; try once before giving up
        v = project_plus(np.abs(seed.values))
    if v is None:
        raise DegenerateSeedError(
            "seed ray has nonpositive pairing sign: no t_plus root (restart advised)"
        )

    iterations = 0
    warm_dir = None
    alpha = 1.0
    descent_cap = min(budget - 1, max(10, int(50 * budget_factor)))
    for it in range(budget):
        iterations = it + 1
        g = _grad_raw(p, v)
        gn = _wnorm(d, g)
        e_val = energy(Field(v, d), p)
        if gn <= 1e3 * _target_tol(p, v, e_val) or it >= descent_cap:
            break
        dr = _riesz(d, g, x0=warm_dir)
        warm_dir = dr
        slope = d.inner(g, dr)
        accepted = False
        beta = alpha
        for _ in range(25):
            try:
                vt = project_plus(v - beta * dr)
            except (MuTooLargeError, MuBeyondRangeError):
                vt = None
            if vt is not None:
                et = energy(Field(vt, d), p)
                if et < e_val - 1e-4 * beta * slope:
                    v = vt
                    e_val = et
                    alpha = min(beta * 2.0, 4.0)
                    accepted = True
                    break
            beta *= 0.5
        if not accepted:
            break
        if v.min() < -1e-13 * max(1.0, np.abs(v).max()):
            # absolute-value move: energy does not increase on the Plus rescale
            try:
                va = project_plus(np.abs(v))
            except (MuTooLargeError, MuBeyondRangeError):
                va = None
            if va is not None and energy(Field(va, d), p) <= e_val + 1e-12 * (1 + abs(e_val)):
                v = va

    if not pairing_positive_seen:
        raise DegenerateSeedError("pairing sign stayed nonpositive along the whole descent")

    newton_budget = max(10, int(40 * budget_factor))
    v, gn, steps, ok = _newton_polish(p, v, max_steps=newton_budget)
    iterations += steps
    if not ok:
        raise NonconvergenceError(
            f"Plus-branch solve stalled at grad norm {gn:.3e} after {iterations} iterations",
            residual=gn,
        )
    return _build_record(p, v, gn, seed_kind, iterations)


def _build_record(p, vvals, gn, seed_kind, iterations, seed_direction=None,
                  seed_energy=None, seed_below=None):
    d = p.domain
    vf = Field(vvals, d)
    uf = compose_solution(vf, p.mu, p.lift)
    cls = classify(vf, p)
    return SolutionRecord(
        v=vf,
        u=uf,
        energy=energy(vf, p),
        nehari_class=cls,
        grad_norm=gn,
        positive=bool(uf.values.min() > 0.0),
        seed=seed_kind,
        iterations=iterations,
        lam=p.lam,
        mu=p.mu,
        barycenter=barycenter(vf),
        grad_dir_integral=d.gradient_direction_integral(vvals),
        seed_direction=None if seed_direction is None else np.asarray(seed_direction, float),
        seed_energy=seed_energy,
        seed_below_threshold=seed_below,
    )


def minimize_on_Nminus(
    p: Params,
    seed: Field,
    max_iter: int = 300,
    budget_factor: float = 1.0,
    seed_kind: SeedKind = SeedKind.USER,
    seed_direction=None,
    seed_energy=None,
    seed_below=None,
) -> SolutionRecord:
    """Minimize the reduced functional J(v) = E(t_minus(v) v) over the
    nonnegative cone of the critical-norm unit sphere."""
    d = p.domain
    ts = p.two_star
    if seed is None or not np.any(seed.values):
        raise ArgumentError("Minus-branch minimization needs a nonzero seed")
    v = np.abs(seed.values)
    nrm = d.lp_norm(v, ts)
    if nrm == 0.0:
        raise ProjectionError("seed vanishes after cone projection", snapshot=seed)
    v = v / nrm

    budget = max(1, int(max_iter * budget_factor))
    newton_budget = max(10, int(40 * budget_factor))
    iterations = 0
    warm_dir = None
    beta0 = 1.0

    def reduced(vvals):
        rr = find_roots(Field(vvals, d), p)
        w = rr.t_minus * vvals
        return rr.t_minus, w, energy(Field(w, d), p)

    t, w, j_val = reduced(v)
    for attempt in range(3):
        for it in range(budget):
            iterations += 1
            g = _grad_raw(p, w)
            gn = _wnorm(d, g)
            if gn <= 1e2 * _target_tol(p, w, j_val):
                break
            dr = _riesz(d, g, x0=warm_dir)
            warm_dir = dr
            theta = d.weight * float(np.dot(signed_pow(v, ts - 1.0), dr))
            dtan = dr - theta * v
            slope = t * d.inner(g, dtan)
            if slope <= 0:
                break
            accepted = False
            beta = beta0
            for _ in range(30):
                vt = np.maximum(v - beta * dtan, 0.0)
                nt = d.lp_norm(vt, ts)
                if nt == 0.0:
                    raise ProjectionError(
                        "iterate left the nonnegative cone irreparably",
                        snapshot=Field(v, d),
                    )
                vt /= nt
                try:
                    tt, wt, jt = reduced(vt)
                except (MuTooLargeError, MuBeyondRangeError):
                    beta *= 0.5
                    continue
                if jt < j_val - 1e-4 * beta * slope:
                    v, t, w, j_val = vt, tt, wt, jt
                    beta0 = min(beta * 2.0, 4.0)
                    accepted = True
                    break
                beta *= 0.5
            if not accepted:
                break

        wv, gn, steps, ok = _newton_polish(p, w, max_steps=newton_budget)
        iterations += steps
        if ok:
            cls = classify(Field(wv, d), p)
            e_val = energy(Field(wv, d), p)
            if cls.klass is Klass.MINUS and e_val > 0:
                return _build_record(
                    p, wv, gn, seed_kind, iterations,
                    seed_direction=seed_direction,
                    seed_energy=seed_energy,
                    seed_below=seed_below,
                )
        # polish drifted off the Minus part; restart descent from the cone
        # projection of the best manifold point with smaller steps
        v = np.abs(w)
        nrm = d.lp_norm(v, ts)
        if nrm == 0:
            raise ProjectionError("descent collapsed to zero", snapshot=Field(v, d))
        v /= nrm
        t, w, j_val = reduced(v)
        beta0 *= 0.25

    raise NonconvergenceError(
        f"Minus-branch solve did not certify after {iterations} iterations "
        f"(last grad norm {gn:.3e})",
        residual=gn,
    )


# -- bubbles -----------------------------------------------------------------


@dataclass(frozen=True)
class BubbleSeed:
    epsilon: float
    direction: np.ndarray
    delta0: float
    field: Field
    peak: np.ndarray


def _bubble_frame(domain: Domain):
    """Coordinates the bubble formulas live in: absolute for the annulus,
    center-scaled for a box (unit sphere maps to the inscribed sphere)."""
    if isinstance(domain.spec.shape, AnnulusD):
        return domain.interior_coords, 1.0
    sides = domain.spec.shape.sides
    center = np.array([0.5 * s for s in sides])
    rho = 0.5 * min(sides)
    return (domain.interior_coords - center) / rho, rho


def make_bubble(epsilon: float, direction, domain: Domain, delta0: float) -> BubbleSeed:
    """Cutoff concentration profile peaked near (1 - eps) * direction.

    Radial cutoff ramps up over [delta0, 2 delta0], is identically one on
    [2 delta0, 1/(2 delta0)], and ramps down over [1/(2 delta0), 1/delta0].
    """
    if not 0.0 < epsilon < 1.0:
        raise ArgumentError(f"epsilon must lie in (0, 1), got {epsilon}")
    y = np.asarray(direction, dtype=float)
    if y.shape != (domain.ndim,) or abs(np.linalg.norm(y) - 1.0) > 1e-10:
        raise ArgumentError("direction must be a unit vector of the domain dimension")
    if not 0.0 < delta0 < 0.5:
        raise ArgumentError(
            f"delta0 must lie in (0, 0.5) so the cutoff plateau is nonempty, got {delta0}"
        )
    N = domain.ndim
    pts, _ = _bubble_frame(domain)
    r = np.linalg.norm(pts, axis=1)
    cut = smoothstep((r - delta0) / delta0)
    hi_lo = 1.0 / (2.0 * delta0)
    hi_hi = 1.0 / delta0
    cut = cut * (1.0 - smoothstep((r - hi_lo) / (hi_hi - hi_lo)))
    peak = (1.0 - epsilon) * y
    amp = (N * (N - 2.0) * epsilon**2) ** ((N - 2.0) / 4.0)
    d2 = np.sum((pts - peak) ** 2, axis=1)
    prof = amp / (epsilon**2 + d2) ** ((N - 2.0) / 2.0)
    vals = cut * prof
    if not np.any(vals > 0):
        raise ArgumentError("bubble support misses every interior node")
    return BubbleSeed(
        epsilon=float(epsilon), direction=y, delta0=float(delta0),
        field=Field(vals, domain), peak=peak,
    )


def multistart_Nminus(
    p: Params,
    directions: Sequence,
    epsilon: float,
    vplus: SolutionRecord,
    delta0: Optional[float] = None,
    t_factors: Sequence[float] = (0.5, 1.0, 2.0),
    dedup_tol: float = 1e-4,
    max_iter: int = 300,
    budget_factor: float = 1.0,
):
    """Bubble-seeded Minus-branch searches, one per direction, deduplicated.

    Each direction seeds with vplus + t * bubble projected onto the Minus part
    along the composite ray.  The seed energy is compared against the
    compactness threshold m_plus + (1/N) S^{N/2} and recorded; directions
    whose composite admits no projection are skipped.  Raises SeedingError if
    every direction fails.
    """
    d = p.domain
    ts = p.two_star
    if delta0 is None:
        # cutoff needs delta0 < 1/2 for a nonempty plateau
        delta0 = min(d.spec.shape.delta0, 0.45) if isinstance(d.spec.shape, AnnulusD) else 0.25
    threshold = vplus.energy + p.spectral.s_quantum

    seeds = []
    failures = []
    for y in directions:
        try:
            bub = make_bubble(epsilon, y, d, delta0)
        except ArgumentError as e:
            failures.append((y, str(e)))
            continue
        U = bub.field.values
        aU = d.h1_norm_sq(U) - p.lam * d.l2_norm_sq(U)
        bU = d.weight * float(np.sum(abs_pow(U, ts)))
        t_star = (aU / bU) ** (1.0 / (ts - 2.0)) if aU > 0 and bU > 0 else 1.0
        best = None
        for tf in t_factors:
            comp = vplus.v.values + tf * t_star * U
            try:
                rr = find_roots(Field(comp, d), p)
            except (MuTooLargeError, MuBeyondRangeError):
                continue
            w = rr.t_minus * comp
            e_val = energy(Field(w, d), p)
            if best is None or e_val < best[1]:
                best = (w, e_val)
        if best is None:
            failures.append((y, "composite ray admits no Minus projection"))
            continue
        seeds.append((np.asarray(y, float), best[0], best[1], best[1] < threshold))
    if not seeds:
        raise SeedingError(f"no direction produced a Minus seed: {failures}")

    records = []
    for y, w, e_seed, below in seeds:
        try:
            rec = minimize_on_Nminus(
                p, Field(w, d), max_iter=max_iter, budget_factor=budget_factor,
                seed_kind=SeedKind.BUBBLE, seed_direction=y,
                seed_energy=e_seed, seed_below=below,
            )
        except (NonconvergenceError, ProjectionError) as e:
            failures.append((y, str(e)))
            continue
        records.append(rec)

    distinct = []
    for rec in records:
        if all(
            np.sqrt(d.h1_norm_sq(rec.v.values - kept.v.values)) > dedup_tol
            for kept in distinct
        ):
            distinct.append(rec)
    return distinct


# -- minimax -----------------------------------------------------------------


@dataclass
class MinimaxResult:
    record: Optional[SolutionRecord]
    gamma_estimate: float
    window: tuple
    reason: str
    lattice_values: dict = dc_field(default_factory=dict)

    @property
    def found(self):
        return self.record is not None


def _sphere_directions(N: int):
    dirs = []
    for k in range(N):
        for s in (+1.0, -1.0):
            e = np.zeros(N)
            e[k] = s
            dirs.append(e)
    for signs in np.ndindex(*(2,) * N):
        v = np.array([1.0 if s == 0 else -1.0 for s in signs])
        dirs.append(v / np.linalg.norm(v))
    return dirs


def minimax_gamma(
    p: Params,
    epsilon: float,
    vplus: SolutionRecord,
    vminus: SolutionRecord,
    n_radii: int = 4,
    directions: Optional[Sequence] = None,
    relax_rounds: int = 3,
    inner_steps: int = 2,
    budget_factor: float = 1.0,
) -> MinimaxResult:
    """Boundary-pinned inf-sup search for the higher critical level.

    A finite family over the ball lattice {r_k y_j} is relaxed by
    coordinate-wise descent of the reduced functional with the boundary ring
    pinned to normalized bubbles at the given epsilon.  Interior points start
    as blends with the antipodal bubble (weight growing toward the center),
    so the family links through two-peak transition states where the sup
    concentrates.  The relaxed maximizer is polished by Newton and accepted
    only if it certifies with class Minus and energy inside the compactness
    window; not-found is a legitimate outcome at coarse resolution.
    """
    d = p.domain
    if not isinstance(d.spec.shape, AnnulusD):
        raise PreconditionError("minimax search needs the annular domain")
    delta0 = min(d.spec.shape.delta0, 0.45)
    ts = p.two_star
    q = p.spectral.s_quantum
    window = (vplus.energy + q, vminus.energy + q)

    dirs = list(directions) if directions is not None else _sphere_directions(d.ndim)
    r_bar = 1.0 - epsilon
    radii = np.linspace(0.0, r_bar, n_radii)

    def normalized(vals):
        n = d.lp_norm(vals, ts)
        return vals / n if n > 0 else None

    family = {}
    for j, y in enumerate(dirs):
        for k, r in enumerate(radii):
            eps_k = float(np.clip(1.0 - r, epsilon, 0.97))
            vals = make_bubble(eps_k, y, d, delta0).field.values
            mix = 1.0 - r / r_bar if r_bar > 0 else 1.0
            if mix > 0:
                vals = vals + mix * make_bubble(eps_k, -y, d, delta0).field.values
            vals = normalized(vals)
            if vals is None:
                continue
            family[(j, k)] = vals

    def j_of(vals):
        rr = find_roots(Field(vals, d), p)
        w = rr.t_minus * vals
        return energy(Field(w, d), p), rr.t_minus, w

    values = {key: j_of(v)[0] for key, v in family.items()}
    boundary_keys = {key for key in family if key[1] == len(radii) - 1}

    for _ in range(relax_rounds):
        for key in sorted(family):
            if key in boundary_keys:
                continue
            v = family[key]
            jv, t, w = j_of(v)
            for _ in range(inner_steps):
                g = _grad_raw(p, w)
                dr = _riesz(d, g)
                theta = d.weight * float(np.dot(signed_pow(v, ts - 1.0), dr))
                dtan = dr - theta * v
                slope = t * d.inner(g, dtan)
                if slope <= 0:
                    break
                beta, moved = 1.0, False
                for _ in range(20):
                    vt = normalized(np.maximum(v - beta * dtan, 0.0))
                    if vt is not None:
                        try:
                            jt, tt, wt = j_of(vt)
                        except (MuTooLargeError, MuBeyondRangeError):
                            beta *= 0.5
                            continue
                        if jt < jv - 1e-4 * beta * slope:
                            v, jv, t, w = vt, jt, tt, wt
                            moved = True
                            break
                    beta *= 0.5
                if not moved:
                    break
            family[key], values[key] = v, jv

    gamma_est = max(values.values())
    arg = max(values, key=lambda k: values[k])
    v_star = family[arg]
    rr = find_roots(Field(v_star, d), p)
    w_star = rr.t_minus * v_star

    wv, gn, steps, ok = _newton_polish(p, w_star, max_steps=max(10, int(40 * budget_factor)))
    if not ok:
        return MinimaxResult(None, gamma_est, window,
                             f"polish stalled at grad norm {gn:.3e}", values)
    rec = _build_record(p, wv, gn, SeedKind.MINIMAX, steps)
    if rec.nehari_class.klass is not Klass.MINUS:
        return MinimaxResult(None, gamma_est, window,
                             f"polished point classified {rec.nehari_class.klass.name}", values)
    if not window[0] < rec.energy < window[1]:
        return MinimaxResult(
            None, gamma_est, window,
            f"polished energy {rec.energy:.6g} outside window ({window[0]:.6g}, {window[1]:.6g})",
            values,
        )
    return MinimaxResult(rec, gamma_est, window, "accepted", values)


# -- ground state cache and continuation --------------------------------------


def ground_state(lam: float, spectral, lift, budget_factor: float = 1.0) -> Field:
    """Ground state of the homogeneous problem at this lambda (mu = 0),
    computed by the Minus-branch minimization and cached."""
    key = float(lam)
    cache = spectral.ground_state_cache
    if key not in cache:
        p0 = Params(lam=lam, mu=0.0, spectral=spectral, lift=lift)
        seed = Field(_default_bump(p0.domain), p0.domain)
        rec = minimize_on_Nminus(p0, seed, seed_kind=SeedKind.GROUND_STATE_RAY,
                                 budget_factor=budget_factor)
        cache[key] = rec.v
    return cache[key]


@dataclass
class ContinuationConfig:
    mu_init: float = 1e-3
    growth: float = 1.6
    shrink: float = 0.5
    max_cells: int = 24
    min_step_rel: float = 1e-6
    fail_limit: int = 3
    with_minus_branch: bool = True
    budget_factor: float = 1.0
    keep_records: bool = False


@dataclass
class BranchRow:
    mu: float
    energy_plus: float
    energy_minus: float
    plus_converged: bool
    minus_converged: bool
    record_plus: Optional[SolutionRecord] = None


@dataclass
class ExistenceBoundary:
    """Solvability boundary estimate over a lambda grid."""

    lambda_grid: list
    mu_star_estimates: list
    branch_data: dict

    def __post_init__(self):
        for lam, mu in zip(self.lambda_grid, self.mu_star_estimates):
            if not (np.isfinite(mu) and mu > 0):
                raise NonconvergenceError(
                    f"mu* estimate at lambda={lam} is not finite positive: {mu}"
                )


def trace_existence_boundary(lambdas, spectral, lift,
                             cfg: Optional[ContinuationConfig] = None) -> ExistenceBoundary:
    """Continuation estimate of the solvability boundary over a lambda grid."""
    lams, stars, branches = [], [], {}
    for lam in lambdas:
        mu_star, rows = estimate_mu_star(lam, spectral, lift, cfg)
        lams.append(float(lam))
        stars.append(float(mu_star))
        branches[float(lam)] = rows
    return ExistenceBoundary(lambda_grid=lams, mu_star_estimates=stars,
                             branch_data=branches)


def estimate_mu_star(lam: float, spectral, lift, cfg: Optional[ContinuationConfig] = None):
    """Continuation in mu of the Plus branch until it persistently fails.

    Failure semantics: the step is halved on every failed mu; once it hits
    the relative floor, `fail_limit` consecutive failures with all restarts
    diverging end the continuation.  Returns (mu_star_lower_estimate, rows).
    """
    cfg = cfg or ContinuationConfig()
    if not 0.0 < lam < spectral.lambda1:
        raise PreconditionError(
            f"mu* continuation needs 0 < lambda < lambda1, got {lam} vs {spectral.lambda1}"
        )
    rows = []
    last_mu = 0.0
    warm: Optional[Field] = None
    step = cfg.mu_init
    small_fails = 0

    gstate = ground_state(lam, spectral, lift, budget_factor=cfg.budget_factor) \
        if cfg.with_minus_branch else None

    while len(rows) < cfg.max_cells:
        mu_try = last_mu + step
        rec_plus = None
        p_try = Params(lam=lam, mu=mu_try, spectral=spectral, lift=lift)
        if p_try.admissible:
            seeds = [warm, None] if warm is not None else [None]
            for seed in seeds:
                try:
                    rec_plus = minimize_on_Nplus(
                        p_try, seed=seed, budget_factor=cfg.budget_factor
                    )
                    break
                except (
                    NonconvergenceError,
                    DegenerateSeedError,
                    MuTooLargeError,
                    MuBeyondRangeError,
                    BranchAbsentError,
                ):
                    rec_plus = None
        if rec_plus is not None:
            e_minus, minus_ok = float("nan"), False
            if cfg.with_minus_branch:
                try:
                    rec_minus = minimize_on_Nminus(
                        p_try, gstate, seed_kind=SeedKind.GROUND_STATE_RAY,
                        budget_factor=cfg.budget_factor,
                    )
                    e_minus, minus_ok = rec_minus.energy, True
                except (NonconvergenceError, ProjectionError,
                        MuTooLargeError, MuBeyondRangeError):
                    pass
            rows.append(BranchRow(
                mu=mu_try, energy_plus=rec_plus.energy, energy_minus=e_minus,
                plus_converged=True, minus_converged=minus_ok,
                record_plus=rec_plus if cfg.keep_records else None,
            ))
            last_mu = mu_try
            warm = rec_plus.v
            step *= cfg.growth
            small_fails = 0
        else:
            step *= cfg.shrink
            floor = cfg.min_step_rel * max(mu_try, cfg.mu_init)
            if step < floor:
                step = floor
                small_fails += 1
                if small_fails >= cfg.fail_limit:
                    break
    return last_mu, rows

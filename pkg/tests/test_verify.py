import numpy as np
import pytest

from bnsolver.errors import IncompleteInputError, PreconditionError
from bnsolver.functional import hessian_apply
from bnsolver.grid import Field, zero_field
from bnsolver.nehari import Klass
from bnsolver.solve import (
    SeedKind,
    ground_state,
    minimize_on_Nminus,
    minimize_on_Nplus,
    _build_record,
)
from bnsolver.verify import (
    certify_solution,
    convexity_ball_check,
    nonexistence_certificate,
    r_lambda,
    threshold_report,
)


@pytest.fixture(scope="module")
def cell9(box9):
    p = box9.params(lam_factor=0.5, mu=0.01)
    rec_plus = minimize_on_Nplus(p)
    gs = ground_state(p.lam, box9.spectral, box9.lift)
    rec_minus = minimize_on_Nminus(p, gs, seed_kind=SeedKind.GROUND_STATE_RAY)
    return p, rec_plus, rec_minus


def test_certify_converged_records(cell9):
    p, rec_plus, rec_minus = cell9
    cp = certify_solution(rec_plus, p)
    cm = certify_solution(rec_minus, p)
    assert cp.overall, str(cp)
    assert cm.overall, str(cm)
    res_check = next(c for c in cp.checks if "residual" in c.name)
    assert res_check.lhs < res_check.tolerance
    sign_check = next(c for c in cp.checks if "sign pattern" in c.name)
    assert sign_check.lhs < 0


def test_certify_detects_corruption(cell9):
    p, rec_plus, _ = cell9
    bad = _build_record(
        p, 1.1 * rec_plus.v.values, gn=rec_plus.grad_norm,
        seed_kind=rec_plus.seed, iterations=0,
    )
    cert = certify_solution(bad, p)
    assert not cert.overall
    res_check = next(c for c in cert.checks if "residual" in c.name)
    assert not res_check.passed


def test_certify_homogeneous_ground_state(box9):
    # the exact discrete ground state of the lam = 0, mu = 0 problem
    p00 = box9.params(lam=0.0, mu=0.0)
    gs = ground_state(0.0, box9.spectral, box9.lift)
    rec = minimize_on_Nminus(p00, gs, seed_kind=SeedKind.GROUND_STATE_RAY)
    cert = certify_solution(rec, p00)
    assert rec.nehari_class.klass is Klass.MINUS
    assert cert.overall, str(cert)


def test_certificates_deterministic(cell9):
    p, rec_plus, _ = cell9
    a = certify_solution(rec_plus, p).to_json_dict()
    b = certify_solution(rec_plus, p).to_json_dict()
    assert a == b
    ca = convexity_ball_check(p, trials=50, seed=3).to_json_dict()
    cb = convexity_ball_check(p, trials=50, seed=3).to_json_dict()
    assert ca == cb


# -- nonexistence -------------------------------------------------------------


def test_nonexistence_requires_regime(cell9):
    p, _, _ = cell9
    with pytest.raises(PreconditionError):
        nonexistence_certificate(p)


def test_nonexistence_a_priori_and_probe(box9):
    dom = box9.domain
    for factor in (1.0, 1.5):
        p = box9.params(lam=factor * box9.spectral.lambda1, mu=0.01)
        cert = nonexistence_certificate(p)
        assert cert.overall, str(cert)
        probe = nonexistence_certificate(p, candidate=box9.spectral.e1)
        assert probe.overall, str(probe)
        margin = next(c for c in probe.checks if c.name.startswith("pairing margin"))
        a_priori = p.lam * p.mu * dom.inner(box9.lift.phi.values, box9.spectral.e1.values)
        assert margin.lhs >= a_priori - 1e-12


def test_nonexistence_margin_monotone_in_mu(box9):
    lam = box9.spectral.lambda1
    u = box9.spectral.e1
    margins = []
    for mu in (0.01, 0.02, 0.05, 0.1):
        p = box9.params(lam=lam, mu=mu)
        cert = nonexistence_certificate(p, candidate=u)
        margins.append(next(c for c in cert.checks if c.name.startswith("pairing margin")).lhs)
    assert all(b > a for a, b in zip(margins, margins[1:])), margins


def test_nonexistence_degenerate_probe_inconclusive(box9):
    p = box9.params(lam=box9.spectral.lambda1, mu=0.0)
    cert = nonexistence_certificate(p, candidate=zero_field(box9.domain))
    assert cert.overall
    assert any("inconclusive" in c.name for c in cert.checks)


# -- convexity ball ------------------------------------------------------------


def test_r_lambda_needs_subcritical_lambda(box9):
    p = box9.params(lam=1.5 * box9.spectral.lambda1, mu=0.01)
    with pytest.raises(PreconditionError):
        r_lambda(p)


def test_convexity_ball_positive_forms(cell9):
    p, rec_plus, _ = cell9
    cert = convexity_ball_check(p, trials=200, seed=0, nplus_records=[rec_plus])
    assert cert.overall, str(cert)
    rl = r_lambda(p)
    assert np.sqrt(p.domain.h1_norm_sq(rec_plus.v.values)) < rl


def test_convexity_fails_far_outside(box9):
    # scaled ground state far outside the ball gives a negative form with h = u.
    # (The threshold scale: with h = u the form turns negative once
    # ||u|| exceeds (2*-1)^(-1/(2*-2)) ||U0||, around 13 r_lambda here, so the
    # probe uses 20 r_lambda.)
    p00 = box9.params(lam=0.0, mu=0.0)
    gs = ground_state(0.0, box9.spectral, box9.lift)
    rl = r_lambda(p00)
    nv = np.sqrt(box9.domain.h1_norm_sq(gs.values))
    u = Field((20.0 * rl / nv) * gs.values, box9.domain)
    form = box9.domain.inner(hessian_apply(u, u, p00).values, u.values)
    assert form < 0


# -- thresholds -----------------------------------------------------------------


def test_threshold_report_passes(cell9):
    p, rec_plus, rec_minus = cell9
    cert = threshold_report(p, [rec_plus, rec_minus])
    assert cert.overall, str(cert)
    gap = next(c for c in cert.checks if c.name.startswith("gap"))
    assert gap.lhs < gap.rhs


def test_threshold_report_needs_both_branches(cell9):
    p, rec_plus, _ = cell9
    with pytest.raises(IncompleteInputError):
        threshold_report(p, [rec_plus])

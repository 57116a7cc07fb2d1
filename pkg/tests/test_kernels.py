import numpy as np
import pytest
import scipy.sparse as sp

from spinsink import kernels
from spinsink.coefficients import Constant, ModulatedPhase, ScheduleCoefficient
from spinsink.kernels import MCWFIntegrator, TermOperator
from spinsink.schedules import ConstantSchedule, PiecewiseLinearSchedule, SawtoothSchedule


def random_terms(rng, dim=24):
    def rmat(density=0.2):
        m = sp.random(dim, dim, density=density, random_state=np.random.RandomState(rng.integers(2**31)))
        return sp.csr_matrix(m + 1j * sp.random(dim, dim, density=density,
                                                random_state=np.random.RandomState(rng.integers(2**31))))

    saw = SawtoothSchedule(-2.0, 3.0, 4.0)
    pwl = PiecewiseLinearSchedule([0.0, 2.0, 5.0], [1.0, -1.0, 2.0])
    return [
        (rmat(), Constant(0.7 - 0.2j)),
        (rmat(), ScheduleCoefficient(saw, 1.0)),
        (sp.diags(rng.normal(size=dim)).tocsr(), ScheduleCoefficient(pwl, -0.5)),
        (rmat(), ModulatedPhase(0.3 + 0.1j, 2.2, saw, 1)),
        (rmat(), ModulatedPhase(0.1, -1.3, None, -1)),
    ]


class TestTermOperator:
    def test_apply_matches_matrix_assembly(self):
        rng = np.random.default_rng(0)
        terms = random_terms(rng)
        op = TermOperator(terms, 24)
        x = rng.normal(size=24) + 1j * rng.normal(size=24)
        for t in [0.0, 0.31, 1.7, 4.9, 11.3]:
            direct = op.matrix_at(t) @ x
            assert np.abs(op.apply(t, x) - direct).max() < 1e-12

    def test_constant_terms_merged(self):
        rng = np.random.default_rng(1)
        a = sp.random(10, 10, density=0.3, random_state=1).tocsr().astype(complex)
        op = TermOperator([(a, Constant(2.0)), (a, Constant(-1.0)), (a, ScheduleCoefficient(ConstantSchedule(3.0)))],
                          10)
        assert op.n_td == 0  # constant-schedule coefficients fold into the static part
        x = rng.normal(size=10).astype(complex)
        assert np.abs(op.apply(0.0, x) - 4.0 * (a @ x)).max() < 1e-13

    @pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled core unavailable")
    def test_compiled_matches_python_fallback(self):
        rng = np.random.default_rng(2)
        terms = random_terms(rng)
        op = TermOperator(terms, 24)
        x = rng.normal(size=24) + 1j * rng.normal(size=24)
        for t in np.linspace(0, 12, 37):
            compiled = np.empty_like(x)
            op._impl.apply(float(t), x, compiled)
            impl = op._impl
            op._impl = None
            fallback = op.apply(t, x)
            op._impl = impl
            assert np.abs(compiled - fallback).max() < 1e-12


class TestIntegrator:
    def test_rabi_oscillation(self):
        h = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex))
        op = TermOperator([(h, Constant(1.0))], 2)
        integ = MCWFIntegrator(op, rtol=1e-9, atol=1e-12)
        psi = np.array([1.0, 0.0], dtype=complex)
        status, t, psi, _ = integ.integrate(psi, 0.0, 2.0, -1.0, None)
        assert status == kernels.STATUS_REACHED_END
        assert np.abs(psi[0] - np.cos(2.0)) < 1e-8
        assert np.abs(psi[1] + 1j * np.sin(2.0)) < 1e-8

    def test_event_norm_matches_threshold(self):
        gamma = 0.9
        heff = sp.csr_matrix(np.diag([0.0, -0.5j * gamma]))
        op = TermOperator([(heff, Constant(1.0))], 2)
        integ = MCWFIntegrator(op, rtol=1e-9, atol=1e-12, norm_tol=1e-10)
        psi = np.array([0.0, 1.0], dtype=complex)
        r = 0.37
        status, t_ev, psi_ev, _ = integ.integrate(psi, 0.0, 50.0, r, None)
        assert status == kernels.STATUS_JUMP
        assert abs(np.vdot(psi_ev, psi_ev).real - r) < 1e-9
        assert abs(t_ev - (-np.log(r) / gamma)) < 1e-8

    @pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled core unavailable")
    def test_compiled_and_python_integrators_agree(self):
        rng = np.random.default_rng(3)
        terms = random_terms(rng, dim=12)
        op = TermOperator(terms, 12)
        psi0 = rng.normal(size=12) + 1j * rng.normal(size=12)
        psi0 /= np.linalg.norm(psi0)

        integ = MCWFIntegrator(op, rtol=1e-9, atol=1e-12)
        _, _, psi_c, _ = integ.integrate(psi0, 0.0, 3.0, -1.0, None)
        impl = op._impl
        op._impl = None
        _, _, psi_p, _ = integ.integrate(psi0, 0.0, 3.0, -1.0, None)
        op._impl = impl
        assert np.abs(psi_c - psi_p).max() < 1e-7

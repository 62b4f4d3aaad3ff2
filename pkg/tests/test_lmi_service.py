"""
Tests for the certification service: solves, completion and the h / delta searches
"""

import time

import numpy as np
import pytest

from models.errors import BracketError, ConfigurationError
from models.field import Field, Grid2D
from models.schemas import (
    Certificate,
    ContinuousAvgParams,
    SampledAvgParams,
    SampledPointParams,
    SolveResult,
    SolveStatus,
)
from services.lmi_service import CSV_HEADER, LmiService, attraction_margin, build_thm1, format_csv_line
from utils.lmi_assembly import assemble_thm1, assemble_thm2
from utils.sdp_solver import verify_certificate

CONT = ContinuousAvgParams(mu=0.95, delta=0.1, kappa=-0.5, delta_bar=0.25)
AVG = SampledAvgParams(mu=0.95, delta=0.1, kappa=-0.5, delta_bar=0.25, h=0.35, c_bound=2.0)
POINT = SampledPointParams(mu=0.95, delta=0.2, delta1=0.15, kappa=-0.5, delta_bar=0.25, h=0.35, c_bound=2.0)


@pytest.fixture(scope="module")
def service() -> LmiService:
    return LmiService()


@pytest.fixture(scope="module")
def thm1_at_035(service) -> SolveResult:
    return service.solve("thm1", AVG)


class TestContinuous:
    @pytest.mark.parametrize("delta", [0.0, 0.05, 0.1])
    def test_prop1_feasible(self, service, delta):
        result = service.solve("prop1", CONT.model_copy(update={"delta": delta}))
        assert result.status == SolveStatus.FEASIBLE
        assert result.report.passed

    def test_prop1_with_free_gain(self, service):
        result = service.solve("prop1", CONT, mu_free=True)
        assert result.feasible
        assert result.certificate["mu"] > 0

    def test_prop2_certificates_verify(self, service):
        result = service.solve("prop2", CONT)
        assert result.status == SolveStatus.FEASIBLE
        lmi = service.build("prop2", CONT)
        assert verify_certificate(lmi.constraints, result.certificate, lmi.signs).passed

    def test_max_delta_prop1(self, service):
        result = service.max_delta("prop1", CONT, 0.0, 40.0, tol=0.5, scan=False)
        assert result.value > 0.1
        assert result.last_feasible.feasible


class TestSampledAveraged:
    def test_feasible_at_reference_period(self, thm1_at_035):
        assert thm1_at_035.status == SolveStatus.FEASIBLE
        assert thm1_at_035.h == 0.35
        c = thm1_at_035.certificate
        assert min(c["r"], c["gamma"], c["p1"], c["p2"]) > 0

    def test_infeasible_at_long_period(self, service):
        assert service.solve("thm1", AVG.model_copy(update={"h": 0.5})).status == SolveStatus.INFEASIBLE

    def test_tenfold_p2_breaks_certificate(self, service, thm1_at_035):
        lmi = service.build("thm1", AVG)
        c = thm1_at_035.certificate
        report = verify_certificate(lmi.constraints, c.with_values(p2=10.0 * c["p2"]), lmi.signs)
        assert not report.passed

    def test_small_p2_breaks_energy_block(self, service, thm1_at_035):
        lmi = service.build("thm1", AVG)
        c = thm1_at_035.certificate
        bad = c.with_values(p2=0.1 * (1.0 + c["gamma"]) / np.pi ** 2)
        report = verify_certificate(lmi.constraints, bad, lmi.signs)
        assert not report.passed
        assert "energy" in {f.name for f in report.failures()}

    def test_vertex_certificate_covers_interior(self, thm1_at_035):
        c = thm1_at_035.certificate
        vertex = [assemble_thm1(AVG, c, z) for z in (AVG.c_bound, -AVG.c_bound)]
        worst1 = max(np.linalg.eigvalsh(b.xi1)[-1] for b in vertex)
        worst2 = max(np.linalg.eigvalsh(b.xi2)[-1] for b in vertex)
        for z in np.linspace(-AVG.c_bound, AVG.c_bound, 50):
            # the box [-|z|, |z|] has z as a vertex
            blocks = assemble_thm1(AVG.model_copy(update={"c_bound": abs(z)}), c, z)
            assert np.linalg.eigvalsh(blocks.xi1)[-1] <= worst1 + 1e-10
            assert np.linalg.eigvalsh(blocks.xi2)[-1] <= worst2 + 1e-10

    @pytest.mark.parametrize("h, feasible", [(0.39, True), (0.45, False)])
    def test_feasibility_around_maximal_period(self, service, h, feasible):
        assert service.solve("thm1", AVG.model_copy(update={"h": h})).feasible is feasible

    def test_completion_with_reference_weights(self, service):
        result = service.complete_certificate("thm1", AVG, {"p1": 80.6354, "p2": 5.145})
        assert result.feasible
        assert result.certificate["p1"] == 80.6354
        assert result.certificate["p2"] == 5.145

    def test_unknown_fixed_variable(self, service):
        with pytest.raises(ConfigurationError):
            build_thm1(AVG, fixed={"mu": 1.0})

    @pytest.mark.slow
    def test_max_h(self, service):
        start = time.perf_counter()
        result = service.max_h("thm1", AVG, 0.1, 0.6, tol=0.01)
        assert time.perf_counter() - start < 10.0
        assert 0.37 <= result.value <= 0.41
        assert result.anomalies == []

    def test_bracket_must_start_feasible(self, service):
        with pytest.raises(BracketError):
            service.max_h("thm1", AVG, 0.5, 0.6, tol=0.05, scan=False)

    def test_max_h_rejects_continuous_problem(self, service):
        with pytest.raises(ConfigurationError):
            service.max_h("prop1", CONT, 0.1, 0.6)


class TestSampledPoint:
    @pytest.fixture(scope="class")
    def thm2_at_035(self, service) -> SolveResult:
        return service.solve("thm2", POINT)

    def test_feasible_at_reference_period(self, thm2_at_035):
        assert thm2_at_035.feasible
        assert thm2_at_035.certificate["eta"] > 0

    def test_vertex_certificate_covers_interior(self, thm2_at_035):
        c = thm2_at_035.certificate
        vertex = [assemble_thm2(POINT, c, z) for z in (POINT.c_bound, -POINT.c_bound)]
        worst1 = max(np.linalg.eigvalsh(b.lam1)[-1] for b in vertex)
        worst2 = max(np.linalg.eigvalsh(b.lam2)[-1] for b in vertex)
        for z in np.linspace(-POINT.c_bound, POINT.c_bound, 50):
            blocks = assemble_thm2(POINT.model_copy(update={"c_bound": abs(z)}), c, z)
            assert np.linalg.eigvalsh(blocks.lam1)[-1] <= worst1 + 1e-10
            assert np.linalg.eigvalsh(blocks.lam2)[-1] <= worst2 + 1e-10

    @pytest.mark.slow
    def test_max_h(self, service):
        start = time.perf_counter()
        result = service.max_h("thm2", POINT, 0.1, 0.6, tol=0.01)
        assert time.perf_counter() - start < 10.0
        assert 0.35 <= result.value <= 0.39


class _Threshold(LmiService):
    """Feasible exactly for h <= h_max, without calling a solver"""

    def __init__(self, h_max: float):
        super().__init__()
        self.h_max = h_max
        self.calls = []

    def solve(self, problem, params, **options) -> SolveResult:
        self.calls.append(params.h)
        status = SolveStatus.FEASIBLE if params.h <= self.h_max else SolveStatus.INFEASIBLE
        return SolveResult(problem=problem, status=status, h=params.h)


class TestLowerEndShrink:
    def test_shrinks_until_feasible(self):
        service = _Threshold(0.03)
        result = service.max_h("thm1", AVG, 0.1, 0.6, tol=0.001, scan=False, shrink_lo=True)
        assert result.lo == pytest.approx(0.025)
        assert 0.029 <= result.value <= 0.03
        assert service.calls[:3] == pytest.approx([0.1, 0.05, 0.025])

    def test_gives_up_below_floor(self):
        with pytest.raises(BracketError):
            _Threshold(1e-5).max_h("thm1", AVG, 0.1, 0.6, scan=False, shrink_lo=True, h_floor=1e-3)

    def test_without_shrink_the_bracket_is_rejected(self):
        with pytest.raises(BracketError):
            _Threshold(0.03).max_h("thm1", AVG, 0.1, 0.6, scan=False)


def test_csv_line_layout():
    result = SolveResult(problem="thm1", status=SolveStatus.INFEASIBLE, h=0.5)
    line = format_csv_line(result)
    assert len(line.split(",")) == len(CSV_HEADER.split(",")) == 14
    assert line.startswith("infeasible,0.5,")
    assert line.endswith(",,,")


def test_csv_line_with_certificate(thm1_at_035):
    fields = dict(zip(CSV_HEADER.split(","), format_csv_line(thm1_at_035).split(",")))
    assert fields["status"] == "feasible"
    assert float(fields["p1"]) == pytest.approx(thm1_at_035.certificate["p1"], rel=1e-14)
    assert fields["eta"] == ""
    assert float(fields["max_eig_worst"]) < 0


def test_attraction_margin_of_zero_field():
    cert = Certificate(problem="thm1", values={"p1": 80.6354, "p2": 5.145})
    assert attraction_margin(Field.zeros(Grid2D(m=32)), cert, 2.0) == 4.0

"""
Batch evaluation of the functional-inequality checks over seeded random fields
"""

from typing import Callable, Dict, Iterable, List, Tuple

import numpy as np
from pydantic import ValidationError

from models.errors import ConfigurationError
from models.field import Field, Grid2D, Partition
from models.schemas import FriedrichWeights, LemmaReport, PointBoundWeights
from utils.field_ops import residual_f_j
from utils.inequalities import (
    InequalityMargin,
    check_friedrich,
    check_point_bound,
    check_poincare,
    check_wirtinger,
    random_clamped_field,
    sobolev2d_bound,
    sobolev_energy_bound,
)
from utils.logger import get_logger

logger = get_logger(__name__)

FRIEDRICH_WEIGHTS: Dict[str, FriedrichWeights] = {
    "equal": FriedrichWeights(alpha1=1 / 3, alpha2=1 / 3, alpha3=1 - 2 / 3),
    "x1_heavy": FriedrichWeights(alpha1=0.8, alpha2=0.1, alpha3=0.1),
    "mixed_heavy": FriedrichWeights(alpha1=0.1, alpha2=0.1, alpha3=0.8),
}
POINT_WEIGHTS = PointBoundWeights(eta=1.0, beta1=3.0, beta2=3.0, beta3=3.0)
GAMMAS = (0.1, 1.0, 10.0)
LEMMA_DELTA_BAR = 0.25

Check = Callable[[Field], Iterable[InequalityMargin]]


class LemmaService:
    """Runs every inequality check on a batch of clamped fields"""

    def __init__(self, m: int = 64, delta_bar: float = LEMMA_DELTA_BAR):
        self.grid = Grid2D(m=m)
        self.partition = Partition.build(delta_bar)
        self.partition.check_alignment(self.grid)
        self.corner = self.partition.subdomains[0]
        self.checks = self._checks()

    def _checks(self) -> List[Tuple[str, Check]]:
        part, corner = self.partition, self.corner
        checks: List[Tuple[str, Check]] = [
            ("wirtinger", lambda f: [check_wirtinger(f)]),
            ("poincare", lambda f: [
                check_poincare(residual_f_j(f, s, part, "averaged"), s, part) for s in part.subdomains
            ]),
        ]
        for label, w in FRIEDRICH_WEIGHTS.items():
            checks.append((f"friedrich_{label}", lambda f, w=w: [check_friedrich(f, w)]))
            checks.append((f"friedrich_{label}_corner", lambda f, w=w: [check_friedrich(f, w, corner, part)]))
        checks.append(("point_bound", lambda f: [check_point_bound(f, POINT_WEIGHTS)]))
        checks.append(("point_bound_corner", lambda f: [check_point_bound(f, POINT_WEIGHTS, corner, part)]))
        for g in GAMMAS:
            checks.append((f"sobolev2d_gamma{g:g}", lambda f, g=g: [sobolev2d_bound(f, g)]))
            checks.append((f"sobolev_energy_gamma{g:g}", lambda f, g=g: [sobolev_energy_bound(f, g)]))
        return checks

    def evaluate(self, fields: Iterable[Field], seed: int = 0) -> LemmaReport:
        min_margins: Dict[str, float] = {name: np.inf for name, _ in self.checks}
        violations: Dict[str, int] = {name: 0 for name, _ in self.checks}
        count = 0
        for f in fields:
            if f.grid != self.grid:
                raise ConfigurationError(f"field has m={f.grid.m}, service has m={self.grid.m}")
            count += 1
            for name, check in self.checks:
                for res in check(f):
                    min_margins[name] = min(min_margins[name], res.margin)
                    if not res.holds:
                        violations[name] += 1
                        logger.warning(f"{name} violated on field {count}: margin {res.margin:.3e} < -{res.tol:.3e}")
        if count == 0:
            raise ConfigurationError("no fields to evaluate")
        report = LemmaReport(
            seed=seed, count=count, m=self.grid.m,
            min_margins={k: float(v) for k, v in min_margins.items()},
            violations=violations,
            invalid_weights_rejected=invalid_weights_rejected(),
        )
        logger.info(f"Lemma checks on {count} fields: {'pass' if report.passed else 'fail'}")
        return report

    def verify(self, seed: int, count: int) -> LemmaReport:
        if count < 1:
            raise ConfigurationError(f"count must be >= 1, got {count}")
        rng = np.random.default_rng(seed)
        logger.info(f"Generating {count} random clamped fields (seed={seed}, m={self.grid.m})")
        fields = (random_clamped_field(self.grid, rng) for _ in range(count))
        return self.evaluate(fields, seed=seed)


def invalid_weights_rejected() -> bool:
    """The weight triple beta = (1, 1, 1), eta = 1 fails the positive-semidefiniteness test"""
    try:
        PointBoundWeights(eta=1.0, beta1=1.0, beta2=1.0, beta3=1.0)
    except ValidationError:
        return True
    return False


def verify_lemmas(seed: int, count: int, m: int = 64) -> LemmaReport:
    return LemmaService(m=m).verify(seed, count)

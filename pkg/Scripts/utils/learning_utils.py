"""
This module learns a hat function for the current iteration: a
derivative-free two-stage maximization of the matching pursuit objective
over the six tesseroid parameters. Stage 1 is a global DIRECT-L search on
the normalized parameter box, stage 2 a local subplex refinement started
from the stage 1 optimum. Both use nlopt.
"""

import math
from dataclasses import dataclass

import nlopt
import numpy as np

import config
from Scripts.utils.geometry_utils import (
    DEFAULT_BOUNDS,
    TWO_PI,
    TesseroidBounds,
    TesseroidParams,
)

_BUDGET_CODES = (nlopt.MAXEVAL_REACHED, nlopt.MAXTIME_REACHED)


# _________________________________________________________________________________________________


@dataclass(frozen=True)
class OptimizerBudget:
    """Termination settings of both optimizer stages."""

    global_xtol_rel: float = config.GLOBAL_XTOL_REL
    global_ftol_rel: float = config.GLOBAL_FTOL_REL
    local_xtol_rel: float = config.LOCAL_XTOL_REL
    local_ftol_rel: float = config.LOCAL_FTOL_REL
    max_evaluations: int = config.MAX_EVALUATIONS
    max_time_seconds: float = config.MAX_TIME_SECONDS


@dataclass(frozen=True)
class LearningResult:
    """
    Candidates of one learning round.

    Attributes:
        candidates (list[TesseroidParams]): Start, stage 1 and stage 2 optimum.
        values (list[float]): Objective of each candidate as seen by the optimizer.
        budget_exhausted (bool): A stage stopped on its evaluation or time limit.
        evaluations (int): Objective evaluations used by both stages.
    """

    candidates: list[TesseroidParams]
    values: list[float]
    budget_exhausted: bool
    evaluations: int


# _________________________________________________________________________________________________


class TesseroidBox:
    """
    Bijection between the unit cube and the tesseroid parameter box.

    Centres are mapped linearly; the half-widths are mapped on a log scale
    between their lower bound eps and their upper bound.
    """

    def __init__(self, bounds: TesseroidBounds = DEFAULT_BOUNDS):
        self.bounds = bounds
        self.linear = [
            (bounds.r_min, bounds.r_max),
            (0.0, TWO_PI),
            (bounds.t_min, bounds.t_max),
        ]
        self.widths = [
            (bounds.eps_r, bounds.ball_radius / 2.0),
            (bounds.eps_phi, math.pi),
            (bounds.eps_t, 0.5),
        ]
        self.logarithmic = [(math.log(lo), math.log(hi)) for lo, hi in self.widths]

    def to_params(self, x: np.ndarray) -> TesseroidParams:
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        centre = [
            min(max(lo + xi * (hi - lo), lo), hi)
            for xi, (lo, hi) in zip(x[:3], self.linear)
        ]
        # exp(log(b)) may round past b
        widths = [
            min(max(math.exp(llo + xi * (lhi - llo)), lo), hi)
            for xi, (llo, lhi), (lo, hi) in zip(x[3:], self.logarithmic, self.widths)
        ]
        return TesseroidParams(*centre, *widths, bounds=self.bounds)

    def to_unit(self, tess: TesseroidParams) -> np.ndarray:
        centre = [
            (v - lo) / (hi - lo) for v, (lo, hi) in zip(tess.center, self.linear)
        ]
        widths = [
            (math.log(v) - lo) / (hi - lo)
            for v, (lo, hi) in zip(tess.half_widths, self.logarithmic)
        ]
        return np.clip(np.array(centre + widths), 0.0, 1.0)


# _________________________________________________________________________________________________


class _Tracker:
    """Objective wrapper for nlopt that remembers the best point seen."""

    def __init__(self, objective, box: TesseroidBox):
        self.objective = objective
        self.box = box
        self.best_x = None
        self.best_value = -math.inf
        self.evaluations = 0

    def __call__(self, x, grad):
        value = float(self.objective(self.box.to_params(x)))
        self.evaluations += 1
        if value > self.best_value:
            self.best_value = value
            self.best_x = np.array(x, dtype=float)
        return value


def _run_stage(
    algorithm: int,
    tracker: _Tracker,
    x0: np.ndarray,
    xtol_rel: float,
    ftol_rel: float,
    budget: OptimizerBudget,
) -> bool:
    """Run one maximization stage; True if it stopped on its budget."""
    opt = nlopt.opt(algorithm, 6)
    opt.set_lower_bounds(np.zeros(6))
    opt.set_upper_bounds(np.ones(6))
    opt.set_xtol_rel(xtol_rel)
    opt.set_ftol_rel(ftol_rel)
    opt.set_maxeval(budget.max_evaluations)
    opt.set_maxtime(budget.max_time_seconds)
    opt.set_max_objective(tracker)
    try:
        opt.optimize(x0)
    except nlopt.RoundoffLimited:
        return False
    return opt.last_optimize_result() in _BUDGET_CODES


def learn_fehf(
    objective,
    start: TesseroidParams,
    budget: OptimizerBudget = OptimizerBudget(),
    seed: int = config.SEED,
    bounds: TesseroidBounds = DEFAULT_BOUNDS,
) -> LearningResult:
    """
    Two-stage derivative-free maximization of an objective over hat
    functions.

    Args:
        objective (callable): TesseroidParams -> objective value (>= 0).
        start (TesseroidParams): Starting hat function.
        budget (OptimizerBudget): Tolerances and limits of both stages.
        seed (int): Seed for nlopt's internal generator.
        bounds (TesseroidBounds): Natural constraints of the box.

    Returns:
        LearningResult: The start and both stage optima; every candidate
        satisfies the tesseroid constraints.
    """
    nlopt.srand(int(seed))
    box = TesseroidBox(bounds)
    x_start = box.to_unit(start)
    start_value = float(objective(start))

    global_stage = _Tracker(objective, box)
    exhausted = _run_stage(
        nlopt.GN_DIRECT_L,
        global_stage,
        x_start,
        budget.global_xtol_rel,
        budget.global_ftol_rel,
        budget,
    )
    if global_stage.best_x is None:
        global_stage.best_x, global_stage.best_value = x_start, start_value

    local_stage = _Tracker(objective, box)
    exhausted |= _run_stage(
        nlopt.LN_SBPLX,
        local_stage,
        global_stage.best_x,
        budget.local_xtol_rel,
        budget.local_ftol_rel,
        budget,
    )
    # refinement never reports a worse point than its start
    if local_stage.best_x is None or local_stage.best_value < global_stage.best_value:
        local_stage.best_x, local_stage.best_value = (
            global_stage.best_x,
            global_stage.best_value,
        )

    return LearningResult(
        candidates=[
            start,
            box.to_params(global_stage.best_x),
            box.to_params(local_stage.best_x),
        ],
        values=[start_value, global_stage.best_value, local_stage.best_value],
        budget_exhausted=bool(exhausted),
        evaluations=1 + global_stage.evaluations + local_stage.evaluations,
    )
